"""Grayscale image I/O, resampling, and display scaling.

Images are plain 2-D float64 numpy arrays, row-major, with intensities
nominally in [0, 1]. Every public function validates its input and raises
ValueError with a descriptive message on malformed data.
"""

from __future__ import annotations

import csv
from functools import lru_cache
from pathlib import Path
from typing import Mapping, Sequence

import numpy as np
from PIL import Image, UnidentifiedImageError

# Broadcast luma weights for RGB -> gray conversion.
LUMA_WEIGHTS = (0.299, 0.587, 0.114)


def validate_image(img, name: str = "image") -> np.ndarray:
    """Check the 2-D/finite/nonempty invariants and return a float64 view."""
    arr = np.asarray(img, dtype=np.float64)
    if arr.ndim != 2:
        raise ValueError(f"{name} must be 2-D, got shape {arr.shape}")
    if arr.shape[0] < 1 or arr.shape[1] < 1:
        raise ValueError(f"{name} must have at least one pixel, got shape {arr.shape}")
    if not np.all(np.isfinite(arr)):
        raise ValueError(f"{name} contains non-finite pixels")
    return arr


def load_image(path) -> np.ndarray:
    """Load a PNG or PGM file as a grayscale image scaled to [0, 1].

    Color inputs are reduced with luma weights 0.299 R + 0.587 G + 0.114 B
    applied in floating point (no 8-bit rounding of the gray values).
    """
    path = Path(path)
    try:
        with Image.open(path) as im:
            im.load()
            mode = im.mode
            if mode in ("P", "CMYK", "YCbCr"):
                im = im.convert("RGB")
                mode = "RGB"
            if mode in ("RGB", "RGBA"):
                rgb = np.asarray(im, dtype=np.float64)[:, :, :3] / 255.0
                # integer weights over 1000 keep white at exactly 1.0
                arr = (299.0 * rgb[:, :, 0] + 587.0 * rgb[:, :, 1] + 114.0 * rgb[:, :, 2]) / 1000.0
            elif mode == "L":
                arr = np.asarray(im, dtype=np.float64) / 255.0
            elif mode in ("I", "I;16", "I;16B"):
                arr = np.asarray(im, dtype=np.float64) / 65535.0
            elif mode == "1":
                arr = np.asarray(im, dtype=np.float64)
            else:
                raise ValueError(f"unsupported image mode {mode!r} in '{path}'")
    except FileNotFoundError:
        raise
    except (OSError, SyntaxError, UnidentifiedImageError, Image.DecompressionBombError) as exc:
        raise ValueError(f"cannot read image file '{path}': {exc}") from exc
    return validate_image(arr, f"image '{path}'")


@lru_cache(maxsize=128)
def bilinear_weight_matrix(n_in: int, n_out: int) -> np.ndarray:
    """Row-stochastic (n_out, n_in) matrix for 1-D linear resampling.

    Output sample centers map to input coordinate (i + 0.5) * n_in/n_out - 0.5,
    clamped at the borders. Rows are convex combinations of at most two
    neighbouring input samples, so resampling never exceeds the input range.
    """
    if n_in < 1 or n_out < 1:
        raise ValueError("resample sizes must be >= 1")
    weights = np.zeros((n_out, n_in))
    scale = n_in / n_out
    for i in range(n_out):
        src = (i + 0.5) * scale - 0.5
        i0 = int(np.floor(src))
        frac = src - i0
        lo = min(max(i0, 0), n_in - 1)
        hi = min(max(i0 + 1, 0), n_in - 1)
        weights[i, lo] += 1.0 - frac
        weights[i, hi] += frac
    weights.setflags(write=False)
    return weights


def resize_bilinear(img, new_h: int, new_w: int) -> np.ndarray:
    """Bilinear resampling with half-pixel-center alignment."""
    arr = validate_image(img)
    if new_h < 1 or new_w < 1:
        raise ValueError(f"target size must be >= 1, got {new_h}x{new_w}")
    w_rows = bilinear_weight_matrix(arr.shape[0], new_h)
    w_cols = bilinear_weight_matrix(arr.shape[1], new_w)
    return w_rows @ arr @ w_cols.T


def percentile_rescale(img, lo: float = 1.0, hi: float = 99.0) -> np.ndarray:
    """Map the lo/hi percentile pixels to 0/1 and clamp; for visual export only.

    Uses a nearest-rank percentile: the p-th percentile of n sorted pixels is
    the one at index round(p * n / 100), clipped to the valid range. If the
    two percentiles coincide the result is a constant 0.5 image.
    """
    arr = validate_image(img)
    if not (0.0 <= lo < hi <= 100.0):
        raise ValueError(f"need 0 <= lo < hi <= 100, got lo={lo} hi={hi}")
    flat = np.sort(arr, axis=None)
    n = flat.size
    lo_val = flat[min(max(int(round(lo * n / 100.0)), 0), n - 1)]
    hi_val = flat[min(max(int(round(hi * n / 100.0)), 0), n - 1)]
    if hi_val == lo_val:
        return np.full_like(arr, 0.5)
    return np.clip((arr - lo_val) / (hi_val - lo_val), 0.0, 1.0)


def save_png(img, path) -> None:
    """Write an 8-bit grayscale PNG; values are clamped to [0, 1] and rounded."""
    arr = validate_image(img)
    data = np.rint(np.clip(arr, 0.0, 1.0) * 255.0).astype(np.uint8)
    try:
        Image.fromarray(data, mode="L").save(Path(path), format="PNG")
    except OSError as exc:
        raise ValueError(f"cannot write PNG '{path}': {exc}") from exc


def format_csv_value(value) -> str:
    """Render one CSV cell; floats keep full round-trip precision."""
    if isinstance(value, str):
        return value
    if isinstance(value, (bool, np.bool_)):
        return str(bool(value))
    if isinstance(value, (int, np.integer)):
        return str(int(value))
    return repr(float(value))


def save_csv(columns: Mapping[str, Sequence], path) -> None:
    """Write named columns as CSV with a header row.

    Floats are rendered with repr so that reading them back reproduces the
    exact IEEE value. The line terminator is fixed to \\n so output bytes do
    not depend on the platform.
    """
    names = list(columns.keys())
    if not names:
        raise ValueError("save_csv needs at least one column")
    lengths = {name: len(columns[name]) for name in names}
    if len(set(lengths.values())) != 1:
        raise ValueError(f"columns have mismatched lengths: {lengths}")
    try:
        with open(Path(path), "w", newline="") as fh:
            writer = csv.writer(fh, lineterminator="\n")
            writer.writerow(names)
            for row in zip(*(columns[name] for name in names)):
                writer.writerow([format_csv_value(v) for v in row])
    except OSError as exc:
        raise ValueError(f"cannot write CSV '{path}': {exc}") from exc
