"""Timing and memory benchmarks: kernel scaling and end-to-end scoring."""

from __future__ import annotations

import resource
import time

import numpy as np
import psutil

from .model import ModelConfig, init_model
from .pipeline import score_image
from .ssm import available_backends, init_ssm_params, scan_forward
from .tokenizer import TokenizerConfig


def _best_of(repeats: int, fn) -> float:
    best = float("inf")
    for _ in range(repeats):
        t0 = time.perf_counter()
        fn()
        best = min(best, time.perf_counter() - t0)
    return best


def bench_scan(
    lengths: tuple[int, ...] = (4096, 8192, 16384),
    d_in: int = 32,
    state_size: int = 16,
    repeats: int = 3,
    backends: list[str] | None = None,
    seed: int = 0,
) -> list[dict]:
    """Forward-scan wall time per backend and length, best of `repeats`."""
    rng = np.random.default_rng(seed)
    params = init_ssm_params(d_in, state_size, rng, dtype=np.float32)
    rows = []
    for backend_name in backends or available_backends():
        for length in lengths:
            x = rng.standard_normal((length, d_in)).astype(np.float32)
            scan_forward(params, x, want_cache=False, backend_name=backend_name)  # warm up
            seconds = _best_of(
                repeats,
                lambda: scan_forward(params, x, want_cache=False, backend_name=backend_name),
            )
            rows.append(
                {"section": "scan", "backend": backend_name, "size": length, "seconds": seconds}
            )
    return rows


def scan_scaling_ratios(rows: list[dict]) -> list[tuple[str, int, int, float]]:
    """(backend, L, 2L, time(2L)/time(L)) for consecutive benchmarked lengths."""
    ratios = []
    by_backend: dict[str, list[dict]] = {}
    for row in rows:
        if row["section"] == "scan":
            by_backend.setdefault(row["backend"], []).append(row)
    for backend_name, group in by_backend.items():
        group = sorted(group, key=lambda r: r["size"])
        for a, b in zip(group, group[1:]):
            if b["size"] == 2 * a["size"]:
                ratios.append(
                    (backend_name, a["size"], b["size"], b["seconds"] / a["seconds"])
                )
    return ratios


def bench_score(
    sizes: tuple[int, ...] = (256, 512, 1024),
    channels: int = 16,
    seed: int = 0,
) -> list[dict]:
    """End-to-end scoring wall time and resident memory at square image sizes."""
    rows = []
    process = psutil.Process()
    for size in sizes:
        tok = TokenizerConfig(image_size=(size, size), downsamples=(8, 16, 32),
                              channels=channels, seed=seed)
        model = init_model(tok, ModelConfig(), seed=seed)
        rng = np.random.default_rng(seed)
        image = rng.random((3, size, size), dtype=np.float32)
        t0 = time.perf_counter()
        score_image(model, image)
        seconds = time.perf_counter() - t0
        rows.append(
            {
                "section": "score",
                "backend": "",
                "size": size,
                "seconds": seconds,
                "rss_mb": process.memory_info().rss / 2**20,
            }
        )
    return rows


def peak_rss_mb() -> float:
    """Process lifetime peak resident set size (Linux reports kilobytes)."""
    return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0


def rows_to_csv(rows: list[dict]) -> str:
    lines = ["section,backend,size,seconds,rss_mb"]
    for r in rows:
        rss = f"{r['rss_mb']:.2f}" if "rss_mb" in r else ""
        lines.append(f"{r['section']},{r.get('backend', '')},{r['size']},{r['seconds']:.6f},{rss}")
    return "\n".join(lines) + "\n"
