"""PNG image helpers: 8-bit color, 16-bit millimeter depth."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from ..errors import IoError


def save_image_png(image: np.ndarray, path: str | Path) -> None:
    """Save an (H, W, 3) array in [0, 1] as 8-bit PNG."""
    arr = np.clip(np.round(np.asarray(image) * 255.0), 0, 255).astype(np.uint8)
    try:
        Image.fromarray(arr, mode="RGB").save(str(path))
    except OSError as e:
        raise IoError(f"cannot write image {path}: {e}") from e


def load_image_png(path: str | Path) -> np.ndarray:
    with Image.open(str(path)) as im:
        arr = np.asarray(im.convert("RGB"), dtype=np.float64)
    return arr / 255.0


def save_depth_png(depth_m: np.ndarray, path: str | Path) -> None:
    """Save depth in meters as uint16 millimeters (0 = invalid)."""
    mm = np.clip(np.round(np.asarray(depth_m) * 1000.0), 0, 65535).astype(np.uint16)
    try:
        Image.fromarray(mm, mode="I;16").save(str(path))
    except OSError as e:
        raise IoError(f"cannot write depth {path}: {e}") from e


def load_depth_png(path: str | Path) -> np.ndarray:
    with Image.open(str(path)) as im:
        arr = np.asarray(im, dtype=np.float64)
    return arr / 1000.0
