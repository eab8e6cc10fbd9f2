"""AdamW optimizer and the deterministic training loop.

Reproducibility contract: one root seed fans out through named SeedSequence
streams (data order is [seed, 0xD474, epoch]), so two runs with the same
seed, config, and dataset produce byte-identical checkpoints and loss logs,
and a resumed run replays the exact schedule the uninterrupted run would
have used.
"""

from __future__ import annotations

import dataclasses
import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .checkpoint import save_model_checkpoint
from .errors import DataError, NumericError
from .grids import TokenGrid
from .model import Model
from .pipeline import loss_grids
from .tensors import add_scaled, named_tensors, scale_inplace

log = logging.getLogger(__name__)

DATA_STREAM = 0xD474


@dataclass
class TrainConfig:
    learning_rate: float = 5e-4
    epochs: int = 10
    weight_decay: float = 0.01
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    batch_size: int = 2
    seed: int = 0
    m: int = 4  # prediction step; copied into the model config at build time
    grad_clip: float | None = None

    def __post_init__(self) -> None:
        if self.learning_rate <= 0:
            raise ValueError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.epochs < 1:
            raise ValueError(f"epochs must be >= 1, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("betas must lie in [0, 1)")


class AdamWState:
    """First/second moment per parameter plus the shared step count."""

    def __init__(self, params: dict[str, np.ndarray]):
        self.step = 0
        self.m = {k: np.zeros_like(v) for k, v in params.items()}
        self.v = {k: np.zeros_like(v) for k, v in params.items()}

    def tensors(self) -> dict[str, np.ndarray]:
        out = {}
        for k, arr in self.m.items():
            out[f"opt.m.{k}"] = arr
        for k, arr in self.v.items():
            out[f"opt.v.{k}"] = arr
        return out

    def load_tensors(self, tensors: dict[str, np.ndarray], step: int) -> None:
        self.step = step
        for k, arr in self.m.items():
            arr[...] = tensors[f"opt.m.{k}"].astype(arr.dtype)
        for k, arr in self.v.items():
            arr[...] = tensors[f"opt.v.{k}"].astype(arr.dtype)


def adamw_step(
    params: dict[str, np.ndarray],
    grads: dict[str, np.ndarray],
    state: AdamWState,
    cfg: TrainConfig,
) -> None:
    """One decoupled-weight-decay update, in place.

    A parameter whose gradient contains non-finite values is skipped for the
    step (moments untouched) with a warning naming it.
    """
    state.step += 1
    t = state.step
    bc1 = 1.0 - cfg.beta1**t
    bc2 = 1.0 - cfg.beta2**t
    for name, p in params.items():
        g = grads[name]
        if not np.isfinite(g).all():
            log.warning("skipping update for %s: non-finite gradient", name)
            continue
        m = state.m[name]
        v = state.v[name]
        m *= cfg.beta1
        m += (1.0 - cfg.beta1) * g
        v *= cfg.beta2
        v += (1.0 - cfg.beta2) * (g * g)
        m_hat = m / bc1
        v_hat = v / bc2
        p -= cfg.learning_rate * (m_hat / (np.sqrt(v_hat) + cfg.eps) + cfg.weight_decay * p)


def clip_global_norm(grads: dict[str, np.ndarray], max_norm: float) -> float:
    total = 0.0
    for g in grads.values():
        total += float((g.astype(np.float64) ** 2).sum())
    norm = float(np.sqrt(total))
    if norm > max_norm and norm > 0:
        scale = max_norm / norm
        for g in grads.values():
            g *= scale
    return norm


@dataclass
class TrainResult:
    rows: list[tuple[int, int, float]]  # (epoch, step, loss)
    state: AdamWState
    final_epoch: int


def _format_loss_rows(rows: list[tuple[int, int, float]]) -> str:
    out = ["epoch,step,loss"]
    for epoch, step, loss in rows:
        out.append(f"{epoch},{step},{loss:.10e}")
    return "\n".join(out) + "\n"


def train(
    model: Model,
    examples: list[list[TokenGrid]],
    cfg: TrainConfig,
    out_dir: Path | str,
    threads: int = 1,
    start_epoch: int = 0,
    state: AdamWState | None = None,
    previous_rows: list[tuple[int, int, float]] | None = None,
) -> TrainResult:
    """Optimize the model on normal examples; checkpoint and log every epoch."""
    if not examples:
        raise DataError("no training examples: the training set is empty")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    params = named_tensors(model.trainables)
    if state is None:
        state = AdamWState(params)
    rows = list(previous_rows or [])

    pool = ThreadPoolExecutor(max_workers=threads) if threads > 1 else None
    try:
        for epoch in range(start_epoch, cfg.epochs):
            order = np.random.default_rng(
                np.random.SeedSequence([cfg.seed, DATA_STREAM, epoch])
            ).permutation(len(examples))
            for lo in range(0, len(order), cfg.batch_size):
                batch = [examples[i] for i in order[lo : lo + cfg.batch_size]]
                if pool is not None:
                    results = list(pool.map(lambda grids: loss_grids(model, grids), batch))
                else:
                    results = [loss_grids(model, grids) for grids in batch]
                batch_loss = sum(r[0] for r in results) / len(results)
                if not np.isfinite(batch_loss):
                    raise NumericError(
                        f"non-finite training loss at epoch {epoch + 1}, step {state.step + 1}"
                    )
                summed = results[0][1]
                for _, g in results[1:]:
                    add_scaled(summed, g)
                scale_inplace(summed, 1.0 / len(results))
                grads = named_tensors(summed)
                if cfg.grad_clip is not None:
                    clip_global_norm(grads, cfg.grad_clip)
                adamw_step(params, grads, state, cfg)
                rows.append((epoch + 1, state.step, float(batch_loss)))
            save_model_checkpoint(
                out_dir / "checkpoint.ckpt",
                model,
                epoch=epoch + 1,
                opt_tensors=state.tensors(),
                opt_step=state.step,
                extra_meta={"train": dataclasses.asdict(cfg)},
            )
            (out_dir / "loss.csv").write_text(_format_loss_rows(rows))
            log.info("epoch %d/%d: mean loss %.6f", epoch + 1, cfg.epochs,
                     float(np.mean([r[2] for r in rows if r[0] == epoch + 1])))
    finally:
        if pool is not None:
            pool.shutdown()
    return TrainResult(rows=rows, state=state, final_epoch=cfg.epochs)
