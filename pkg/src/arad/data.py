"""Dataset discovery and image loading.

Expected layout, one directory per category:

    root/<category>/train/good/*.png
    root/<category>/test/good/*.png
    root/<category>/test/<defect>/*.png
    root/<category>/ground_truth/<defect>/<stem>_mask.png

Defect test images must have a mask; good ones must not.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np
from PIL import Image

from .errors import DataError

IMAGE_SUFFIXES = (".png", ".jpg", ".jpeg", ".bmp", ".tif", ".tiff")


@dataclass
class TestItem:
    image: Path
    defect: str  # folder name; "good" means normal
    mask: Path | None

    @property
    def is_defect(self) -> bool:
        return self.defect != "good"


def _images_in(directory: Path) -> list[Path]:
    return sorted(p for p in directory.iterdir() if p.suffix.lower() in IMAGE_SUFFIXES)


def list_train_images(root: Path | str, category: str) -> list[Path]:
    train_dir = Path(root) / category / "train" / "good"
    if not train_dir.is_dir():
        raise DataError(f"missing training directory: {train_dir}")
    images = _images_in(train_dir)
    if not images:
        raise DataError(f"no training images in {train_dir}")
    return images


def list_test_items(root: Path | str, category: str) -> list[TestItem]:
    test_dir = Path(root) / category / "test"
    if not test_dir.is_dir():
        raise DataError(f"missing test directory: {test_dir}")
    gt_dir = Path(root) / category / "ground_truth"
    items: list[TestItem] = []
    for defect_dir in sorted(p for p in test_dir.iterdir() if p.is_dir()):
        defect = defect_dir.name
        for image in _images_in(defect_dir):
            if defect == "good":
                items.append(TestItem(image, defect, None))
                continue
            mask = gt_dir / defect / f"{image.stem}_mask.png"
            if not mask.is_file():
                raise DataError(f"defect image {image} has no mask at {mask}")
            items.append(TestItem(image, defect, mask))
    if not items:
        raise DataError(f"no test images under {test_dir}")
    return items


def load_image_rgb(path: Path | str, size_hw: tuple[int, int] | None = None) -> np.ndarray:
    """uint8 [H, W, 3]; resized bilinearly when a target size is given."""
    try:
        with Image.open(path) as img:
            img = img.convert("RGB")
            if size_hw is not None and (img.height, img.width) != tuple(size_hw):
                img = img.resize((size_hw[1], size_hw[0]), Image.BILINEAR)
            return np.asarray(img, dtype=np.uint8)
    except (OSError, SyntaxError) as e:
        raise DataError(f"cannot read image {path}: {e}") from e


def load_mask(path: Path | str, size_hw: tuple[int, int] | None = None) -> np.ndarray:
    """Binary uint8 [H, W]; nearest-neighbor resize preserves exact labels."""
    try:
        with Image.open(path) as img:
            img = img.convert("L")
            if size_hw is not None and (img.height, img.width) != tuple(size_hw):
                img = img.resize((size_hw[1], size_hw[0]), Image.NEAREST)
            return (np.asarray(img) > 127).astype(np.uint8)
    except (OSError, SyntaxError) as e:
        raise DataError(f"cannot read mask {path}: {e}") from e
