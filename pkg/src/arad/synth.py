"""Procedural texture dataset for self-contained end-to-end runs.

A category is a fixed mixture of oriented sinusoids; each image redraws the
phases and adds pixel noise, so the texture's statistics are learnable but
no image repeats. Defects paint one square or elliptical patch whose
intensity is pushed at least 0.3 of the dynamic range away from the local
texture; the mask is exactly the painted region. Everything derives from the
seed, and outputs are byte-identical across runs.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

# amplitude budget keeps the clean texture inside [0.5 - 0.37, 0.5 + 0.37]
_TOTAL_AMP = 0.35
_NOISE_SIGMA = 0.01
_SHIFT = 0.45  # painted patches move this far, clipped to [0, 1]


@dataclass
class SynthSpec:
    seed: int = 0
    size: tuple[int, int] = (128, 128)
    n_train: int = 32
    n_test_good: int = 16
    n_test_defect: int = 16
    category: str | None = None

    def category_name(self) -> str:
        return self.category or f"synth{self.seed}"


class _Texture:
    def __init__(self, rng: np.random.Generator, size: tuple[int, int]):
        self.size = size
        n_waves = int(rng.integers(2, 5))
        wavelengths = rng.uniform(8.0, 32.0, size=n_waves)
        self.freqs = 2.0 * np.pi / wavelengths
        self.angles = rng.uniform(0.0, np.pi, size=n_waves)
        weights = rng.uniform(0.5, 1.0, size=n_waves)
        self.amps = weights / weights.sum() * _TOTAL_AMP
        h, w = size
        self.yy, self.xx = np.mgrid[0:h, 0:w]

    def render(self, rng: np.random.Generator) -> np.ndarray:
        h, w = self.size
        img = np.full((h, w), 0.5)
        for freq, angle, amp in zip(self.freqs, self.angles, self.amps):
            phase = rng.uniform(0.0, 2.0 * np.pi)
            img += amp * np.sin(freq * (np.cos(angle) * self.xx + np.sin(angle) * self.yy) + phase)
        img += rng.normal(0.0, _NOISE_SIGMA, size=(h, w))
        return np.clip(img, 0.0, 1.0)


def _paint_defect(img: np.ndarray, rng: np.random.Generator) -> np.ndarray:
    """Add one anomalous patch in place; returns the exact painted mask."""
    h, w = img.shape
    mask = np.zeros((h, w), dtype=bool)
    if rng.random() < 0.5:  # square
        side = int(rng.integers(10, 29))
        top = int(rng.integers(2, h - side - 2))
        left = int(rng.integers(2, w - side - 2))
        mask[top : top + side, left : left + side] = True
    else:  # ellipse
        ry = int(rng.integers(6, 17))
        rx = int(rng.integers(6, 17))
        cy = int(rng.integers(ry + 2, h - ry - 2))
        cx = int(rng.integers(rx + 2, w - rx - 2))
        yy, xx = np.mgrid[0:h, 0:w]
        mask = ((yy - cy) / ry) ** 2 + ((xx - cx) / rx) ** 2 <= 1.0
    direction = 1.0 if img[mask].mean() <= 0.5 else -1.0
    img[mask] = np.clip(img[mask] + direction * _SHIFT, 0.0, 1.0)
    return mask


def _save_gray_rgb(path: Path, img: np.ndarray) -> None:
    u8 = (np.clip(img, 0.0, 1.0) * 255.0 + 0.5).astype(np.uint8)
    Image.fromarray(np.stack([u8, u8, u8], axis=2), mode="RGB").save(path)


def _save_mask(path: Path, mask: np.ndarray) -> None:
    Image.fromarray(mask.astype(np.uint8) * 255, mode="L").save(path)


def generate_dataset(root: Path | str, spec: SynthSpec) -> Path:
    """Write a category under root; returns the category directory."""
    category = spec.category_name()
    base = Path(root) / category
    train_dir = base / "train" / "good"
    test_good = base / "test" / "good"
    test_defect = base / "test" / "defect"
    gt_dir = base / "ground_truth" / "defect"
    for d in (train_dir, test_good, test_defect, gt_dir):
        d.mkdir(parents=True, exist_ok=True)

    texture = _Texture(np.random.default_rng(np.random.SeedSequence([spec.seed, 0x7E87])), spec.size)
    for i in range(spec.n_train):
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 1, i]))
        _save_gray_rgb(train_dir / f"{i:03d}.png", texture.render(rng))
    for i in range(spec.n_test_good):
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 2, i]))
        _save_gray_rgb(test_good / f"{i:03d}.png", texture.render(rng))
    for i in range(spec.n_test_defect):
        rng = np.random.default_rng(np.random.SeedSequence([spec.seed, 3, i]))
        img = texture.render(rng)
        mask = _paint_defect(img, rng)
        _save_gray_rgb(test_defect / f"{i:03d}.png", img)
        _save_mask(gt_dir / f"{i:03d}_mask.png", mask)
    return base
