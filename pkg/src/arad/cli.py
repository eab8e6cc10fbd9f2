"""Command-line interface: train, score, eval, synth, bench.

Configuration is a JSON document with sections tokenizer/model/train/run;
precedence is built-in defaults, then the --config file, then flags. Exit
codes: 0 success, 1 usage, 2 data problem, 3 numeric failure.
"""

from __future__ import annotations

import argparse
import copy
import dataclasses
import json
import logging
import sys
from concurrent.futures import ThreadPoolExecutor
from pathlib import Path

import numpy as np

from .checkpoint import model_from_checkpoint
from .data import list_test_items, list_train_images, load_image_rgb, load_mask
from .errors import (
    AradError,
    ConfigMismatchError,
    DataError,
    MetricUndefinedError,
    NumericError,
    UsageError,
)
from .grids import TokenGrid
from .metrics import evaluate_category, metrics_csv
from .model import Model, ModelConfig, init_model
from .pipeline import score_grids, write_map_file, write_map_png
from .synth import SynthSpec, generate_dataset
from .tokenizer import (
    TokenizerConfig,
    check_token_geometry,
    normalize_image,
    read_token_file,
    token_path_for,
)
from .trainer import AdamWState, TrainConfig, train

log = logging.getLogger(__name__)

DEFAULT_CONFIG: dict = {
    "tokenizer": {
        "mode": "builtin",
        "image_size": [128, 128],
        "downsamples": [8, 16, 32],
        "channels": 16,
        "mean": [0.485, 0.456, 0.406],
        "std": [0.229, 0.224, 0.225],
        "seed": None,  # null: follow run.seed
    },
    "model": {
        "n_layers": 2,
        "expand": 2,
        "d_conv": 4,
        "state_size": 16,
        "share_predictor": False,
    },
    "train": {
        "learning_rate": 5e-4,
        "epochs": 10,
        "weight_decay": 0.01,
        "beta1": 0.9,
        "beta2": 0.999,
        "eps": 1e-8,
        "batch_size": 2,
        "m": 4,
        "grad_clip": None,
    },
    "run": {
        "dataset": None,
        "category": None,
        "out": "out",
        "seed": 0,
        "threads": 1,
        "tokens": "auto",
    },
}


def _merge_config(base: dict, override: dict, path: str = "") -> dict:
    out = copy.deepcopy(base)
    for key, value in override.items():
        where = f"{path}.{key}" if path else key
        if key not in base:
            raise UsageError(f"unknown config key: {where}")
        if isinstance(base[key], dict) and isinstance(value, dict):
            out[key] = _merge_config(base[key], value, where)
        else:
            out[key] = copy.deepcopy(value)
    return out


def resolve_config(config_path: str | None, flag_overrides: dict) -> dict:
    cfg = copy.deepcopy(DEFAULT_CONFIG)
    if config_path:
        try:
            loaded = json.loads(Path(config_path).read_text())
        except OSError as e:
            raise DataError(f"cannot read config file {config_path}: {e}") from e
        except json.JSONDecodeError as e:
            raise UsageError(f"config file {config_path} is not valid JSON: {e}") from e
        if not isinstance(loaded, dict):
            raise UsageError(f"config file {config_path} must hold a JSON object")
        cfg = _merge_config(cfg, loaded)
    return _merge_config(cfg, flag_overrides)


def _flag_overrides(args: argparse.Namespace) -> dict:
    run: dict = {}
    for flag, key in (
        ("dataset", "dataset"),
        ("category", "category"),
        ("out", "out"),
        ("seed", "seed"),
        ("threads", "threads"),
        ("tokens", "tokens"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            run[key] = value
    return {"run": run} if run else {}


def _build_configs(cfg: dict) -> tuple[TokenizerConfig, ModelConfig, TrainConfig]:
    t = cfg["tokenizer"]
    run_seed = cfg["run"]["seed"]
    try:
        tok = TokenizerConfig(
            mode=t["mode"],
            image_size=tuple(t["image_size"]),
            downsamples=tuple(t["downsamples"]),
            channels=t["channels"],
            mean=tuple(t["mean"]),
            std=tuple(t["std"]),
            seed=run_seed if t["seed"] is None else t["seed"],
        )
        train_cfg = TrainConfig(seed=run_seed, **cfg["train"])
        model_cfg = ModelConfig(m=cfg["train"]["m"], **cfg["model"])
    except (ValueError, TypeError) as e:
        raise UsageError(f"invalid configuration: {e}") from e
    return tok, model_cfg, train_cfg


def _require(cfg: dict, key: str, flag: str) -> str:
    value = cfg["run"].get(key)
    if not value:
        raise UsageError(f"missing required {flag} (flag or run.{key} in the config)")
    return value


# ---------------------------------------------------------------- token loading


def _resolve_token_mode(paths: list[Path], requested: str) -> str:
    """auto prefers sibling .vtok files when every input has one."""
    if requested != "auto":
        return requested
    have = [token_path_for(p).is_file() for p in paths]
    if all(have):
        return "imported"
    if any(have):
        missing = [str(p) for p, h in zip(paths, have) if not h][:3]
        raise DataError(
            "tokens=auto found sibling token files for only some inputs; "
            f"first without: {missing[0]}"
        )
    return "builtin"


def _grids_for_image(model: Model, path: Path, mode: str) -> list[TokenGrid]:
    if mode == "imported" or (mode == "auto" and token_path_for(path).is_file()):
        tok_path = path if path.suffix == ".vtok" else token_path_for(path)
        if not tok_path.is_file():
            raise DataError(f"no token file for {path} (expected {tok_path})")
        grids, image_hw = read_token_file(tok_path)
        check_token_geometry(
            tok_path, grids, image_hw, model.geometry, model.tok_config.image_size
        )
        return [TokenGrid(g.data.astype(model.dtype), g.hierarchy, g.downsample) for g in grids]
    pixels = load_image_rgb(path, model.tok_config.image_size)
    image = normalize_image(pixels, model.tok_config.mean, model.tok_config.std,
                            dtype=model.dtype)
    return model.tokenize(image)


def _probe_imported_geometry(paths: list[Path]):
    first = token_path_for(paths[0]) if paths[0].suffix != ".vtok" else paths[0]
    if not first.is_file():
        raise DataError(f"no token file for {paths[0]} (expected {first})")
    grids, image_hw = read_token_file(first)
    from .tokenizer import HierarchyGeometry

    geometry = [
        HierarchyGeometry(g.data.shape[0], g.data.shape[1], g.data.shape[2], g.downsample)
        for g in grids
    ]
    return geometry, image_hw


# ---------------------------------------------------------------- commands


def cmd_train(args: argparse.Namespace) -> int:
    cfg = resolve_config(args.config, _flag_overrides(args))
    dataset = _require(cfg, "dataset", "--dataset")
    category = _require(cfg, "category", "--category")
    out_dir = Path(cfg["run"]["out"])
    threads = cfg["run"]["threads"]

    images = list_train_images(dataset, category)
    mode = _resolve_token_mode(images, cfg["run"]["tokens"])

    start_epoch = 0
    state = None
    previous_rows: list[tuple[int, int, float]] = []
    if args.checkpoint:
        model, meta, tensors = model_from_checkpoint(args.checkpoint)
        if args.config:
            _check_config_compatible(cfg, meta)
        _, _, train_cfg = _build_configs(cfg)
        start_epoch = min(meta["epoch"], train_cfg.epochs)
        state = AdamWState(dict(_named_trainables(model)))
        try:
            state.load_tensors(tensors, meta["opt_step"])
        except KeyError as e:
            raise DataError(f"checkpoint {args.checkpoint} lacks optimizer state: {e}") from e
        previous_rows = _read_loss_rows(out_dir / "loss.csv", start_epoch)
    else:
        tok_cfg, model_cfg, train_cfg = _build_configs(cfg)
        if mode == "imported":
            geometry, image_hw = _probe_imported_geometry(images)
            tok_cfg = dataclasses.replace(
                tok_cfg, mode="imported", image_size=tuple(image_hw),
                downsamples=tuple(g.downsample for g in geometry),
                channels=geometry[0].channels,
            )
            model = init_model(tok_cfg, model_cfg, seed=cfg["run"]["seed"], geometry=geometry)
        else:
            model = init_model(tok_cfg, model_cfg, seed=cfg["run"]["seed"])

    examples = [_grids_for_image(model, p, mode) for p in images]
    result = train(
        model,
        examples,
        train_cfg,
        out_dir,
        threads=threads,
        start_epoch=start_epoch,
        state=state,
        previous_rows=previous_rows,
    )
    final_losses = [r[2] for r in result.rows if r[0] == result.final_epoch]
    print(
        f"trained {len(examples)} images for {result.final_epoch} epochs; "
        f"final epoch mean loss {np.mean(final_losses):.6f}"
    )
    print(f"checkpoint: {out_dir / 'checkpoint.ckpt'}")
    print(f"loss log:   {out_dir / 'loss.csv'}")
    return 0


def _named_trainables(model: Model):
    from .tensors import named_tensors

    return named_tensors(model.trainables).items()


def _read_loss_rows(path: Path, up_to_epoch: int) -> list[tuple[int, int, float]]:
    if not path.is_file():
        return []
    rows = []
    for line in path.read_text().splitlines()[1:]:
        epoch_s, step_s, loss_s = line.split(",")
        if int(epoch_s) <= up_to_epoch:
            rows.append((int(epoch_s), int(step_s), float(loss_s)))
    return rows


def _check_config_compatible(cfg: dict, meta: dict) -> None:
    tok_cfg, model_cfg, _ = _build_configs(cfg)
    stored_tok = meta["config"]["tokenizer"]
    stored_model = meta["config"]["model"]
    mismatches: dict[str, tuple] = {}
    for key, value in dataclasses.asdict(tok_cfg).items():
        stored = stored_tok.get(key)
        if _json_normal(stored) != _json_normal(value):
            mismatches[f"tokenizer.{key}"] = (stored, value)
    for key, value in dataclasses.asdict(model_cfg).items():
        stored = stored_model.get(key)
        if _json_normal(stored) != _json_normal(value):
            mismatches[f"model.{key}"] = (stored, value)
    if mismatches:
        raise ConfigMismatchError(mismatches)


def _json_normal(value):
    # round-trip turns tuples into lists so flag and file configs compare equal
    return json.loads(json.dumps(value))


def _score_one(model: Model, path: Path, mode: str, out_dir: Path, name: str) -> float:
    grids = _grids_for_image(model, path, mode)
    amap = score_grids(model, grids)
    out_dir.mkdir(parents=True, exist_ok=True)
    write_map_file(out_dir / f"{name}.map", amap.scores)
    write_map_png(out_dir / f"{name}.png", amap.scores)
    return amap.image_score


def _output_names(paths: list[Path]) -> list[str]:
    """Input stems, with the parent directory prepended on collisions."""
    names: list[str] = []
    seen: set[str] = set()
    for path in paths:
        name = path.stem
        if name in seen:
            name = f"{path.parent.name}_{path.stem}"
        i = 2
        while name in seen:
            name = f"{path.parent.name}_{path.stem}_{i}"
            i += 1
        seen.add(name)
        names.append(name)
    return names


def cmd_score(args: argparse.Namespace) -> int:
    cfg = resolve_config(args.config, _flag_overrides(args))
    model, meta, _ = model_from_checkpoint(args.checkpoint)
    if args.config:
        _check_config_compatible(cfg, meta)
    out_dir = Path(cfg["run"]["out"])
    mode = cfg["run"]["tokens"]
    paths = [Path(p) for p in args.inputs]
    failures = 0
    for path, name in zip(paths, _output_names(paths)):
        try:
            score = _score_one(model, path, mode, out_dir, name)
            print(f"{path}\t{score:.6f}")
        except AradError as e:
            failures += 1
            print(f"error: {path}: {e}", file=sys.stderr)
    if failures == len(paths):
        raise DataError("every input failed to score")
    return 0


def cmd_eval(args: argparse.Namespace) -> int:
    cfg = resolve_config(args.config, _flag_overrides(args))
    dataset = _require(cfg, "dataset", "--dataset")
    category = _require(cfg, "category", "--category")
    model, meta, _ = model_from_checkpoint(args.checkpoint)
    if args.config:
        _check_config_compatible(cfg, meta)
    out_dir = Path(cfg["run"]["out"])
    threads = cfg["run"]["threads"]

    items = list_test_items(dataset, category)
    mode = _resolve_token_mode([it.image for it in items], cfg["run"]["tokens"])
    size_hw = model.tok_config.image_size

    def score_item(item):
        grids = _grids_for_image(model, item.image, mode)
        return score_grids(model, grids).scores

    if threads > 1:
        with ThreadPoolExecutor(max_workers=threads) as pool:
            maps = list(pool.map(score_item, items))
    else:
        maps = [score_item(it) for it in items]
    masks = [
        load_mask(it.mask, size_hw) if it.mask is not None else np.zeros(size_hw, dtype=np.uint8)
        for it in items
    ]
    result = evaluate_category(maps, masks, names=[str(it.image) for it in items])
    csv = metrics_csv(category, result)
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "metrics.csv").write_text(csv)
    print(csv, end="")
    return 0


def cmd_synth(args: argparse.Namespace) -> int:
    spec = SynthSpec(
        seed=args.seed if args.seed is not None else 0,
        size=(args.size, args.size),
        n_train=args.n_train,
        n_test_good=args.n_test_good,
        n_test_defect=args.n_test_defect,
        category=args.category,
    )
    if args.out is None:
        raise UsageError("synth requires --out")
    path = generate_dataset(args.out, spec)
    n = spec.n_train + spec.n_test_good + spec.n_test_defect
    print(f"wrote {n} images to {path}")
    return 0


def cmd_bench(args: argparse.Namespace) -> int:
    from .bench import (
        bench_scan,
        bench_score,
        peak_rss_mb,
        rows_to_csv,
        scan_scaling_ratios,
    )

    lengths = tuple(int(v) for v in args.scan_lengths.split(","))
    sizes = tuple(int(v) for v in args.sizes.split(","))
    rows = bench_scan(lengths=lengths, repeats=args.repeats)
    rows += bench_score(sizes=sizes)
    csv = rows_to_csv(rows)
    if args.out:
        Path(args.out).parent.mkdir(parents=True, exist_ok=True)
        Path(args.out).write_text(csv)
    print(csv, end="")
    print(f"peak rss: {peak_rss_mb():.1f} MB")
    bad = [(b, l1, l2, r) for b, l1, l2, r in scan_scaling_ratios(rows) if r > 2.5]
    for b, l1, l2, r in scan_scaling_ratios(rows):
        print(f"scaling {b} {l1}->{l2}: x{r:.2f}")
    if bad:
        raise NumericError(
            "scan scaling exceeded 2.5x when doubling length: "
            + ", ".join(f"{b} {l1}->{l2} x{r:.2f}" for b, l1, l2, r in bad)
        )
    return 0


# ---------------------------------------------------------------- parser


class _Parser(argparse.ArgumentParser):
    def error(self, message: str):  # route argparse failures to exit code 1
        raise UsageError(message)


def _add_common(p: argparse.ArgumentParser, *, checkpoint_required: bool = False) -> None:
    p.add_argument("--config", help="JSON config file")
    p.add_argument("--dataset", help="dataset root directory")
    p.add_argument("--category", help="category name under the dataset root")
    p.add_argument("--checkpoint", required=checkpoint_required, help="model checkpoint path")
    p.add_argument("--out", help="output directory")
    p.add_argument("--seed", type=int, help="root random seed")
    p.add_argument("--threads", type=int, help="worker threads")
    p.add_argument("--tokens", choices=("auto", "builtin", "imported"),
                   help="token source: sibling .vtok files, builtin patches, or required .vtok")


def build_parser() -> _Parser:
    parser = _Parser(prog="arad", description=__doc__)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("train", help="fit a model on normal images")
    _add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("score", help="write anomaly maps for images or token files")
    _add_common(p, checkpoint_required=True)
    p.add_argument("inputs", nargs="+", help="image or .vtok files")
    p.set_defaults(func=cmd_score)

    p = sub.add_parser("eval", help="score a test set and report metrics")
    _add_common(p, checkpoint_required=True)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("synth", help="generate a synthetic texture dataset")
    p.add_argument("--out", help="dataset root to write into")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--size", type=int, default=128)
    p.add_argument("--n-train", type=int, default=32)
    p.add_argument("--n-test-good", type=int, default=16)
    p.add_argument("--n-test-defect", type=int, default=16)
    p.add_argument("--category", help="category name (default synth<seed>)")
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("bench", help="kernel scaling and end-to-end timing")
    p.add_argument("--out", help="CSV report path")
    p.add_argument("--scan-lengths", default="4096,8192,16384")
    p.add_argument("--sizes", default="256,512,1024")
    p.add_argument("--repeats", type=int, default=3)
    p.set_defaults(func=cmd_bench)

    return parser


def main(argv: list[str] | None = None) -> int:
    logging.basicConfig(level=logging.INFO, format="%(levelname)s %(name)s: %(message)s")
    try:
        args = build_parser().parse_args(argv)
        return args.func(args)
    except UsageError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1
    except NumericError as e:
        print(f"numeric failure: {e}", file=sys.stderr)
        return 3
    except (DataError, MetricUndefinedError) as e:
        print(f"data error: {e}", file=sys.stderr)
        return 2
    except ValueError as e:
        print(f"usage error: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
