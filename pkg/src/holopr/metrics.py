"""Reconstruction quality metrics and group-statistics machinery.

Relative reconstruction error and windowed SSIM score individual images
against ground truth. For ground-truth-free hyperparameter selection, image
collections are summarized by Gaussian statistics of feature vectors and
compared with the Frechet distance. The built-in feature extractor is a
deterministic pooled-pixel map so the whole pipeline runs hermetically;
externally computed features can be supplied through the CSV interface.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, Sequence

import numpy as np
from scipy.signal import convolve2d

from .imaging import format_csv_value, resize_bilinear, validate_image

SSIM_WINDOW = 11
SSIM_SIGMA = 1.5
SSIM_K1 = 0.01
SSIM_K2 = 0.03

#: Dimension of the built-in pooled-pixel feature vector (8x8 grid + mean + std).
POOLED_FEATURE_DIM = 66

FeatureExtractor = Callable[[np.ndarray], np.ndarray]


def relative_mse(x_hat, x_true) -> float:
    """||x_hat - x_true||_2 / ||x_true||_2."""
    a = validate_image(x_hat, "reconstruction")
    b = validate_image(x_true, "ground truth")
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    norm = np.linalg.norm(b)
    if norm == 0.0:
        raise ValueError("ground truth norm is zero")
    return float(np.linalg.norm(a - b) / norm)


def _gaussian_window(size: int, sigma: float) -> np.ndarray:
    half = (size - 1) / 2.0
    coords = np.arange(size) - half
    g = np.exp(-(coords**2) / (2.0 * sigma**2))
    window = np.outer(g, g)
    return window / window.sum()


def ssim(x_hat, x_true, dynamic_range: float = 1.0) -> float:
    """Mean local SSIM with an 11x11 Gaussian window (sigma 1.5).

    Local statistics use the window-weighted means and covariances over the
    valid region; constants are C1 = (K1 L)^2, C2 = (K2 L)^2 with K1 = 0.01,
    K2 = 0.03 and L the dynamic range (1 for [0, 1] images).
    """
    a = validate_image(x_hat)
    b = validate_image(x_true)
    if a.shape != b.shape:
        raise ValueError(f"shape mismatch: {a.shape} vs {b.shape}")
    if min(a.shape) < SSIM_WINDOW:
        raise ValueError(f"images must be at least {SSIM_WINDOW}x{SSIM_WINDOW} for SSIM")
    window = _gaussian_window(SSIM_WINDOW, SSIM_SIGMA)
    c1 = (SSIM_K1 * dynamic_range) ** 2
    c2 = (SSIM_K2 * dynamic_range) ** 2

    mu_a = convolve2d(a, window, mode="valid")
    mu_b = convolve2d(b, window, mode="valid")
    var_a = convolve2d(a * a, window, mode="valid") - mu_a * mu_a
    var_b = convolve2d(b * b, window, mode="valid") - mu_b * mu_b
    cov = convolve2d(a * b, window, mode="valid") - mu_a * mu_b
    score_map = ((2 * mu_a * mu_b + c1) * (2 * cov + c2)) / (
        (mu_a * mu_a + mu_b * mu_b + c1) * (var_a + var_b + c2)
    )
    return float(score_map.mean())


def pooled_pixel_features(img) -> np.ndarray:
    """Built-in extractor: bilinear 8x8 pooling, flattened, plus mean and std."""
    arr = validate_image(img)
    pooled = resize_bilinear(arr, 8, 8).ravel()
    return np.concatenate([pooled, [arr.mean(), arr.std()]])


def extract_features(img, extractor: FeatureExtractor = None) -> np.ndarray:
    """Apply the extractor (pooled-pixel by default) and validate the output."""
    extractor = extractor or pooled_pixel_features
    vec = np.asarray(extractor(img), dtype=np.float64).ravel()
    if not np.all(np.isfinite(vec)):
        raise ValueError("feature vector contains non-finite entries")
    return vec


@dataclass(frozen=True)
class GaussianStats:
    """Sample mean and covariance of a feature collection."""

    mean: np.ndarray
    cov: np.ndarray

    def __post_init__(self):
        mean = np.asarray(self.mean, dtype=np.float64)
        cov = np.asarray(self.cov, dtype=np.float64)
        if mean.ndim != 1 or cov.shape != (mean.size, mean.size):
            raise ValueError("mean must be a vector and cov a matching square matrix")
        if np.abs(cov - cov.T).max() > 1e-12 * max(np.abs(cov).max(), 1.0):
            raise ValueError("covariance must be symmetric")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "cov", cov)

    @property
    def dim(self) -> int:
        return self.mean.size


def gaussian_stats(features) -> GaussianStats:
    """Sample mean and unbiased (n-1) covariance with a PSD safety ridge.

    The ridge is 1e-10 * trace/F on the diagonal, guarding small collections
    whose covariance is rank-deficient.
    """
    matrix = np.asarray(features, dtype=np.float64)
    if matrix.ndim != 2:
        matrix = np.vstack(list(features))
    n, dim = matrix.shape
    if n < 2:
        raise ValueError("need at least two feature vectors")
    mean = matrix.mean(axis=0)
    centered = matrix - mean
    cov = centered.T @ centered / (n - 1)
    cov = 0.5 * (cov + cov.T)
    ridge = 1e-10 * np.trace(cov) / dim
    cov = cov + ridge * np.eye(dim)
    return GaussianStats(mean=mean, cov=cov)


def sym_psd_sqrt(matrix) -> np.ndarray:
    """Principal square root of a symmetric PSD matrix via eigendecomposition.

    Eigenvalues below 0 (down to -1e-10) are clamped to 0; more negative
    values are rejected as genuinely non-PSD input.
    """
    m = np.asarray(matrix, dtype=np.float64)
    if m.ndim != 2 or m.shape[0] != m.shape[1]:
        raise ValueError("matrix must be square")
    scale = max(np.abs(m).max(), 1.0)
    if np.abs(m - m.T).max() > 1e-10 * scale:
        raise ValueError("matrix must be symmetric")
    eigvals, eigvecs = np.linalg.eigh(0.5 * (m + m.T))
    if eigvals.min() < -1e-10 * scale:
        raise ValueError(f"matrix is not PSD: smallest eigenvalue {eigvals.min():.3e}")
    root = np.sqrt(np.clip(eigvals, 0.0, None))
    return (eigvecs * root) @ eigvecs.T


def frechet_distance(a: GaussianStats, b: GaussianStats) -> float:
    """Squared Wasserstein-2 distance between two Gaussians.

    Computed in the symmetric sandwich form trace(Sa) + trace(Sb)
    - 2 trace(sqrt(Sa^{1/2} Sb Sa^{1/2})) + ||mu_a - mu_b||^2, which equals
    the textbook sqrt(Sa Sb) trace but stays on symmetric matrices. Small
    negative round-off is clamped to zero.
    """
    if a.dim != b.dim:
        raise ValueError(f"dimension mismatch: {a.dim} vs {b.dim}")
    root_a = sym_psd_sqrt(a.cov)
    inner = sym_psd_sqrt(root_a @ b.cov @ root_a)
    mean_term = float(np.sum((a.mean - b.mean) ** 2))
    value = mean_term + float(np.trace(a.cov) + np.trace(b.cov) - 2.0 * np.trace(inner))
    return max(value, 0.0)


def write_feature_csv(image_ids: Sequence[str], features, path) -> None:
    """Write features as ``image_id,f0,...,f{F-1}`` rows."""
    matrix = np.asarray(features, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[0] != len(image_ids):
        raise ValueError("need one feature row per image id")
    header = ["image_id"] + [f"f{i}" for i in range(matrix.shape[1])]
    with open(Path(path), "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for image_id, row in zip(image_ids, matrix):
            writer.writerow([image_id] + [format_csv_value(v) for v in row])


def read_feature_csv(path) -> tuple[list[str], np.ndarray]:
    """Read a feature table written by :func:`write_feature_csv`."""
    with open(Path(path), newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader)
        if not header or header[0] != "image_id" or len(header) < 2:
            raise ValueError(f"malformed feature CSV header in '{path}'")
        ids = []
        rows = []
        for row in reader:
            ids.append(row[0])
            rows.append([float(v) for v in row[1:]])
    matrix = np.asarray(rows, dtype=np.float64)
    if matrix.ndim != 2 or matrix.shape[1] != len(header) - 1:
        raise ValueError(f"ragged feature CSV '{path}'")
    return ids, matrix
