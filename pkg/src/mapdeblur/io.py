"""Image and kernel files.

Images are grayscale floats in [0, 1]; PNG (8 or 16 bit) and ASCII PGM are
supported. Kernels are text: a ``w h`` line followed by ``h`` rows of ``w``
numbers.
"""
from __future__ import annotations

import logging
from pathlib import Path

import numpy as np
from PIL import Image

from .core import to_luminance

log = logging.getLogger(__name__)


class DataError(ValueError):
    """Malformed or unreadable input data."""


def _read_pgm_ascii(path: Path) -> np.ndarray:
    tokens = []
    for line in path.read_text().splitlines():
        tokens.extend(line.split("#", 1)[0].split())
    if not tokens or tokens[0] != "P2":
        raise DataError(f"{path}: not an ASCII PGM (P2) file")
    try:
        w, h, maxval = int(tokens[1]), int(tokens[2]), int(tokens[3])
        vals = np.array([int(t) for t in tokens[4:]], dtype=float)
    except (IndexError, ValueError) as err:
        raise DataError(f"{path}: malformed PGM header or data") from err
    if vals.size != w * h or maxval <= 0:
        raise DataError(f"{path}: expected {w * h} samples, found {vals.size}")
    return vals.reshape(h, w) / maxval


def read_image(path) -> np.ndarray:
    path = Path(path)
    if not path.exists():
        raise DataError(f"{path}: no such file")
    with open(path, "rb") as fh:
        magic = fh.read(2)
    if magic == b"P2":
        return _read_pgm_ascii(path)
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            arr = np.asarray(im)
    except (OSError, SyntaxError) as err:
        raise DataError(f"{path}: cannot read image ({err})") from err
    if mode in ("I;16", "I;16B", "I;16L", "I"):
        return arr.astype(float) / 65535.0
    if mode == "F":
        return arr.astype(float)
    arr = arr.astype(float) / 255.0
    if arr.ndim == 3:
        if arr.shape[2] in (2, 4):
            arr = arr[..., :-1]
        arr = to_luminance(arr) if arr.shape[2] >= 3 else arr[..., 0]
    return arr


def write_image(path, img, bits: int = 8):
    """Write a [0, 1] image; values outside are clipped. ``.pgm`` gives ASCII PGM."""
    path = Path(path)
    img = np.clip(np.asarray(img, dtype=float), 0.0, 1.0)
    if path.suffix.lower() == ".pgm":
        maxval = 255 if bits == 8 else 65535
        q = np.round(img * maxval).astype(int)
        lines = ["P2", f"{img.shape[1]} {img.shape[0]}", str(maxval)]
        lines += [" ".join(map(str, row)) for row in q]
        path.write_text("\n".join(lines) + "\n")
        return
    if bits == 8:
        Image.fromarray(np.round(img * 255).astype(np.uint8)).save(path)
    elif bits == 16:
        Image.fromarray(np.round(img * 65535).astype(np.uint16)).save(path)
    else:
        raise ValueError("bits must be 8 or 16")


def read_kernel(path) -> np.ndarray:
    path = Path(path)
    try:
        lines = [ln.split("#", 1)[0].split() for ln in path.read_text().splitlines()]
    except OSError as err:
        raise DataError(f"{path}: cannot read kernel ({err})") from err
    lines = [ln for ln in lines if ln]
    try:
        w, h = int(lines[0][0]), int(lines[0][1])
        k = np.array([[float(v) for v in row] for row in lines[1:]])
    except (IndexError, ValueError) as err:
        raise DataError(f"{path}: malformed kernel file") from err
    if k.shape != (h, w):
        raise DataError(f"{path}: header says {w}x{h} but data is {k.shape[1] if k.ndim == 2 else '?'}x{len(k)}")
    if w % 2 == 0 or h % 2 == 0:
        raise DataError(f"{path}: kernel dimensions must be odd, got {w}x{h}")
    if not np.all(np.isfinite(k)) or np.any(k < 0):
        raise DataError(f"{path}: kernel entries must be finite and non-negative")
    s = k.sum()
    if s <= 0:
        raise DataError(f"{path}: kernel has no mass")
    if abs(s - 1.0) > 1e-6:
        log.warning("%s: kernel sums to %.9g, renormalizing", path, s)
        k = k / s
    return k


def write_kernel(path, k):
    k = np.asarray(k, dtype=float)
    h, w = k.shape
    rows = [" ".join(repr(float(v)) for v in row) for row in k]
    Path(path).write_text(f"{w} {h}\n" + "\n".join(rows) + "\n")
