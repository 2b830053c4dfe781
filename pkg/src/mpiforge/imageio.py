"""PNG image I/O: 8-bit lossless interchange at package boundaries."""

from __future__ import annotations

from pathlib import Path

import numpy as np
from PIL import Image

from .errors import BadPath


def to_uint8(array):
    return np.clip(np.round(np.asarray(array) * 255.0), 0, 255).astype(np.uint8)


def save_png(path, array):
    """Write a float image in [0, 1] ((H, W), (H, W, 3) or (H, W, 4)) as PNG."""
    data = to_uint8(array)
    if data.ndim == 2:
        img = Image.fromarray(data, mode="L")
    elif data.shape[2] == 3:
        img = Image.fromarray(data, mode="RGB")
    elif data.shape[2] == 4:
        img = Image.fromarray(data, mode="RGBA")
    else:
        raise ValueError(f"unsupported channel count {data.shape}")
    Path(path).parent.mkdir(parents=True, exist_ok=True)
    img.save(path, format="PNG")


def load_png(path):
    """Read a PNG as float in [0, 1]; shape (H, W) for grayscale."""
    p = Path(path)
    if not p.exists():
        raise BadPath(f"no such image: {p}")
    with Image.open(p) as img:
        arr = np.asarray(img, dtype=np.float64) / 255.0
    return arr


def save_mask(path, mask):
    save_png(path, np.asarray(mask, dtype=np.float64))


def load_mask(path):
    arr = load_png(path)
    if arr.ndim == 3:
        arr = arr[..., 0]
    return (arr > 0.5).astype(np.float64)
