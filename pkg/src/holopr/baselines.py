"""Classical holographic reconstruction baselines.

Inverse filtering inverts the measurement autocorrelation: the inverse DFT
of y contains the specimen-reference cross-correlation on a support disjoint
from the other autocorrelation terms whenever the scene is fully separated
and gamma >= 2. Masking that support and dividing by the reference spectrum
recovers the specimen. Wiener filtering regularizes the same division, and
HIO-Holo alternates Fourier magnitude projection with object-domain support
and reference constraints, keeping the best-residual iterate.

Cross-term geometry: with x_region at pixel block X and r_region at block R,
the correlation lag k = r - x ranges over a rectangle of lags determined by
the two blocks; wrapped modulo the detector shape that rectangle is disjoint
from both autocorrelations (lags within one block) and the mirrored
cross-term (lags x - r) exactly when the blocks are separated by at least the
specimen width, which the ``separated`` layout guarantees.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass

import numpy as np

from .forward import Layout, Measurement, Scene, assemble_scene
from .imaging import validate_image
from .optimize import ReconstructionResult, residual_error, specimen_size

#: Hard-division guard relative to the peak reference magnitude.
DIVISION_GUARD = 1e-8


@dataclass(frozen=True)
class HioConfig:
    """Alternating-projection settings."""

    iterations: int = 1000
    beta: float = 0.9
    seed: int = 0
    log_every: int = 1

    def __post_init__(self):
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if not (0.0 < self.beta <= 1.0):
            raise ValueError("beta must lie in (0, 1]")
        if self.log_every < 1:
            raise ValueError("log_every must be >= 1")


def _require_filtering_preconditions(meas: Measurement, layout: Layout):
    if layout.kind != "separated":
        raise ValueError("inverse/Wiener filtering requires the fully separated layout")
    if meas.gamma < 2.0 - 1e-12:
        raise ValueError(f"inverse/Wiener filtering requires gamma >= 2, got {meas.gamma}")


def _cross_lag_mask(det_shape, scene: Scene) -> np.ndarray:
    """1 on detector lags where the specimen-reference correlation can live."""
    h, w = det_shape
    xr, rr = scene.x_region, scene.r_region
    row_lo = rr.row - (xr.row + xr.height - 1)
    row_hi = (rr.row + rr.height - 1) - xr.row
    col_lo = rr.col - (xr.col + xr.width - 1)
    col_hi = (rr.col + rr.width - 1) - xr.col
    rows = np.arange(row_lo, row_hi + 1) % h
    cols = np.arange(col_lo, col_hi + 1) % w
    mask = np.zeros((h, w))
    mask[np.ix_(rows, cols)] = 1.0
    return mask


def _reference_spectrum(meas: Measurement, scene: Scene) -> np.ndarray:
    canvas = np.zeros_like(scene.canvas)
    canvas[scene.r_region.slices] = scene.r_values
    padded = np.zeros(meas.detector_shape)
    padded[: canvas.shape[0], : canvas.shape[1]] = canvas
    return np.fft.fft2(padded)


def _deconvolve(meas: Measurement, reference, layout: Layout, quotient_of) -> np.ndarray:
    """Shared inverse/Wiener pipeline; quotient_of maps F(R0) to 1/F(R0)-like."""
    _require_filtering_preconditions(meas, layout)
    reference = validate_image(reference, "reference")
    m = specimen_size(meas)
    scene = assemble_scene(np.zeros((m, m)), reference, layout)
    autocorr = np.fft.ifft2(meas.y)
    cross = autocorr * _cross_lag_mask(meas.detector_shape, scene)
    ref_spectrum = _reference_spectrum(meas, scene)
    # fft2(cross) ~ conj(F(X0)) * F(R0); dividing and conjugating gives F(X0)
    quotient = np.fft.fft2(cross) * quotient_of(ref_spectrum)
    padded = np.fft.ifft2(np.conj(quotient)).real
    return padded[: scene.canvas.shape[0], : scene.canvas.shape[1]][scene.x_region.slices]


def inverse_filter(meas: Measurement, reference, layout: Layout) -> np.ndarray:
    """Exact cross-correlation deconvolution with a hard small-divisor guard.

    Beamstopped magnitudes enter as zeros. Frequencies where the reference
    spectrum magnitude falls below DIVISION_GUARD times its peak are dropped.
    """

    def hard_inverse(ref_spectrum):
        mags = np.abs(ref_spectrum)
        guard = DIVISION_GUARD * mags.max()
        safe = mags >= guard
        out = np.zeros_like(ref_spectrum)
        np.divide(1.0, ref_spectrum, out=out, where=safe)
        return out

    return _deconvolve(meas, reference, layout, hard_inverse)


def default_wiener_noise_power(meas: Measurement, reference, layout: Layout) -> float:
    """Photon-rate-tied default, (c/np) * detector pixels / ||F(R0)||^2."""
    if math.isinf(meas.np_photons):
        return 0.0
    m = specimen_size(meas)
    scene = assemble_scene(np.zeros((m, m)), validate_image(reference), layout)
    ref_energy = float(np.sum(np.abs(_reference_spectrum(meas, scene)) ** 2))
    n_pixels = meas.y.size
    return (meas.c_norm / meas.np_photons) * n_pixels / ref_energy


def wiener_filter(meas: Measurement, reference, layout: Layout, sigma2: float = None) -> np.ndarray:
    """Inverse filtering with the regularized quotient conj(F(R))/(|F(R)|^2 + sigma2)."""
    if sigma2 is None:
        sigma2 = default_wiener_noise_power(meas, reference, layout)
    if sigma2 < 0:
        raise ValueError("noise power estimate must be >= 0")

    def regularized_inverse(ref_spectrum):
        denom = np.abs(ref_spectrum) ** 2 + sigma2
        out = np.zeros_like(ref_spectrum)
        np.divide(np.conj(ref_spectrum), denom, out=out, where=denom > 0)
        return out

    return _deconvolve(meas, reference, layout, regularized_inverse)


def hio_holo(meas: Measurement, reference, layout: Layout, cfg: HioConfig) -> ReconstructionResult:
    """Alternating projections with reference enforcement and HIO feedback.

    Each iteration: (1) replace Fourier magnitudes with sqrt(y) where the
    mask is open, leaving occluded frequencies untouched; (2) inverse
    transform; (3) accept the update on the specimen support, reset the
    reference pixels exactly, and apply z <- z_prev - beta * z_new elsewhere.
    The best-residual iterate over the logged iterations is returned.
    """
    if not np.any(meas.mask.grid):
        raise ValueError("beamstop mask occludes every pixel, nothing to fit")
    reference = validate_image(reference, "reference")
    m = specimen_size(meas)
    scene = assemble_scene(np.zeros((m, m)), reference, layout)
    ch, cw = scene.canvas.shape
    open_mask = meas.mask.grid == 1.0
    root_y = np.sqrt(meas.y)
    y_norm = float(np.linalg.norm(meas.y))
    if y_norm == 0.0:
        raise ValueError("measurement norm is zero, residual undefined")

    x_slices = (
        slice(scene.x_region.row, scene.x_region.row + scene.x_region.height),
        slice(scene.x_region.col, scene.x_region.col + scene.x_region.width),
    )
    r_slices = (
        slice(scene.r_region.row, scene.r_region.row + scene.r_region.height),
        slice(scene.r_region.col, scene.r_region.col + scene.r_region.width),
    )
    outside = np.ones(meas.detector_shape, dtype=bool)
    outside[:ch, :cw][x_slices] = False
    outside[:ch, :cw][r_slices] = False

    rng = np.random.default_rng(cfg.seed)
    z = np.zeros(meas.detector_shape)
    z[:ch, :cw][x_slices] = rng.random((scene.x_region.height, scene.x_region.width))
    z[:ch, :cw][r_slices] = reference

    best_residual = math.inf
    best_iteration = -1
    best_x = None
    residual_trace: list[tuple[int, float]] = []
    objective_trace: list[tuple[int, float]] = []
    started = time.perf_counter()

    for t in range(1, cfg.iterations + 1):
        field = np.fft.fft2(z)
        magnitudes = np.abs(field)
        phase = np.where(magnitudes > 0, field / np.where(magnitudes > 0, magnitudes, 1.0), 1.0)
        field = np.where(open_mask, root_y * phase, field)
        z_new = np.fft.ifft2(field).real
        z_next = z.copy()
        z_next[:ch, :cw][x_slices] = z_new[:ch, :cw][x_slices]
        z_next[:ch, :cw][r_slices] = reference
        z_next[outside] = z[outside] - cfg.beta * z_new[outside]
        z = z_next

        if t % cfg.log_every == 0 or t == cfg.iterations:
            x_hat = z[:ch, :cw][x_slices]
            residual = residual_error(meas, x_hat, scene)
            residual_trace.append((t, residual))
            objective_trace.append((t, -residual))
            if residual < best_residual:
                best_residual = residual
                best_iteration = t
                best_x = x_hat.copy()

    return ReconstructionResult(
        x_hat=best_x,
        residual_trace=residual_trace,
        best_iteration=best_iteration,
        objective_trace=objective_trace,
        seed=cfg.seed,
        elapsed_s=time.perf_counter() - started,
    )
