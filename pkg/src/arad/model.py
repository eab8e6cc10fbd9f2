"""Model assembly: adapters and predictors over a token geometry."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .blocks import PredictorParams, init_predictor_params, zeros_like_predictor
from .grids import ALL_DIRECTIONS, ScanDirection, TokenGrid
from .tokenizer import (
    AdapterParams,
    BuiltinTokenizer,
    HierarchyGeometry,
    TokenizerConfig,
    init_adapter,
    zeros_like_adapter,
)

log = logging.getLogger(__name__)

_ROW_MAJOR = (ScanDirection.ROW_FWD, ScanDirection.ROW_REV)


@dataclass
class ModelConfig:
    n_layers: int = 2
    expand: int = 2
    d_conv: int = 4
    state_size: int = 16
    m: int = 4  # prediction step, in grid lines
    share_predictor: bool = False

    def __post_init__(self) -> None:
        for name in ("n_layers", "expand", "d_conv", "state_size", "m"):
            if getattr(self, name) < 1:
                raise ValueError(f"{name} must be >= 1, got {getattr(self, name)}")


@dataclass
class Trainables:
    adapters: list[AdapterParams]
    predictors: list[PredictorParams]


@dataclass
class Model:
    tok_config: TokenizerConfig
    config: ModelConfig
    geometry: list[HierarchyGeometry]
    trainables: Trainables
    tokenizer: BuiltinTokenizer | None
    offsets: list[dict[ScanDirection, int]]
    dtype: np.dtype = field(default=np.dtype(np.float32))

    def predictor_for(self, hierarchy: int) -> PredictorParams:
        if self.config.share_predictor:
            return self.trainables.predictors[0]
        return self.trainables.predictors[hierarchy]

    def tokenize(self, image: np.ndarray) -> list[TokenGrid]:
        if self.tokenizer is None:
            raise ValueError("model uses imported tokens; no builtin tokenizer available")
        return self.tokenizer.tokenize(image)


def plan_offsets(
    geometry: list[HierarchyGeometry], m: int
) -> list[dict[ScanDirection, int]]:
    """Per-hierarchy, per-direction sequence offsets for a prediction step of m lines.

    A grid can be too small for the requested step (the offset must stay below
    the sequence length); the step is then clamped to the largest usable value
    for that hierarchy and direction, with a warning.
    """
    plans: list[dict[ScanDirection, int]] = []
    for geo in geometry:
        per_dir: dict[ScanDirection, int] = {}
        for k in ALL_DIRECTIONS:
            lines = geo.grid_h if k in _ROW_MAJOR else geo.grid_w
            span = geo.grid_w if k in _ROW_MAJOR else geo.grid_h
            m_eff = min(m, lines - 1)
            if m_eff < 1:
                raise ValueError(
                    f"hierarchy {geo.downsample}: {geo.grid_h}x{geo.grid_w} grid "
                    f"cannot support any prediction step along direction {k.name}"
                )
            if m_eff < m:
                log.warning(
                    "hierarchy with %dx%d grid clamps prediction step from %d to %d for %s",
                    geo.grid_h,
                    geo.grid_w,
                    m,
                    m_eff,
                    k.name,
                )
            per_dir[k] = m_eff * span
        plans.append(per_dir)
    return plans


def init_model(
    tok_config: TokenizerConfig,
    config: ModelConfig,
    seed: int,
    dtype=np.float32,
    geometry: list[HierarchyGeometry] | None = None,
) -> Model:
    """Build a freshly initialized model.

    Geometry defaults to the builtin tokenizer's; imported-token models pass
    the geometry probed from their token files and carry no tokenizer.
    """
    builtin = tok_config.mode == "builtin"
    if geometry is None:
        geometry = tok_config.geometry()
    offsets = plan_offsets(geometry, config.m)

    root = np.random.SeedSequence([seed, 0x0DE1])
    children = root.spawn(len(geometry) + 1)
    adapters = [init_adapter(geo.channels, dtype=dtype) for geo in geometry]

    def build_predictor(rng: np.random.Generator, max_offset: int, width: int) -> PredictorParams:
        return init_predictor_params(
            width,
            max_offset,
            config.n_layers,
            config.expand,
            config.d_conv,
            config.state_size,
            rng,
            dtype=dtype,
        )

    if config.share_predictor:
        widths = {geo.channels for geo in geometry}
        if len(widths) != 1:
            raise ValueError("share_predictor requires equal channel counts across hierarchies")
        max_off = max(max(d.values()) for d in offsets)
        predictors = [build_predictor(np.random.default_rng(children[0]), max_off, widths.pop())]
    else:
        predictors = [
            build_predictor(np.random.default_rng(children[i]), max(offsets[i].values()), geo.channels)
            for i, geo in enumerate(geometry)
        ]

    tokenizer = BuiltinTokenizer(tok_config, dtype=dtype) if builtin else None
    return Model(
        tok_config=tok_config,
        config=config,
        geometry=geometry,
        trainables=Trainables(adapters=adapters, predictors=predictors),
        tokenizer=tokenizer,
        offsets=offsets,
        dtype=np.dtype(dtype),
    )


def zeros_like_trainables(t: Trainables) -> Trainables:
    return Trainables(
        adapters=[zeros_like_adapter(a) for a in t.adapters],
        predictors=[zeros_like_predictor(p) for p in t.predictors],
    )
