"""Data-fidelity objectives and their analytic gradients.

Both objectives are stated in maximized form so that one ascent loop serves
them: the Poisson log-likelihood sum_{B=1} y*log(I + eps) - I, and the
negated squared error -sum_{B=1} (y - I)^2. Gradients with respect to the
canvas are the exact adjoints of the padded-DFT forward model, written as

    dO/dZ = 2 * Re[ N * ifft2(Gated_intensity_grad * F(Z)) ]  cropped to Z,

where G = dO/dI and N is the detector pixel count. A smoothed isotropic
total variation term is available for regularized variants.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .forward import Measurement, Scene, detector_shape
from .imaging import validate_image

OBJECTIVE_KINDS = ("poisson", "squared")

DEFAULT_LOG_GUARD = 1e-12
DEFAULT_TV_EPSILON = 1e-3


@dataclass(frozen=True)
class ObjectiveSpec:
    """Which fidelity term to maximize, plus regularizer settings."""

    kind: str = "poisson"
    tv_weight: float = 0.0
    tv_epsilon: float = DEFAULT_TV_EPSILON
    log_guard: float = DEFAULT_LOG_GUARD

    def __post_init__(self):
        if self.kind not in OBJECTIVE_KINDS:
            raise ValueError(f"objective kind must be one of {OBJECTIVE_KINDS}, got {self.kind!r}")
        if self.tv_weight < 0:
            raise ValueError("tv_weight must be >= 0")
        if not (self.tv_epsilon > 0) or not (self.log_guard > 0):
            raise ValueError("tv_epsilon and log_guard must be > 0")


def _check_shapes(meas: Measurement, intensity_grid: np.ndarray) -> np.ndarray:
    grid = np.asarray(intensity_grid, dtype=np.float64)
    if grid.shape != meas.y.shape:
        raise ValueError(f"intensity shape {grid.shape} does not match measurement {meas.y.shape}")
    if np.any(grid < 0):
        raise ValueError("intensity must be nonnegative")
    return grid


def poisson_objective(meas: Measurement, intensity_grid, log_guard: float = DEFAULT_LOG_GUARD) -> float:
    """sum over unmasked pixels of y*log(I + guard) - I (maximized)."""
    grid = _check_shapes(meas, intensity_grid)
    b = meas.mask.grid
    return float(np.sum(b * (meas.y * np.log(grid + log_guard) - grid)))


def squared_objective(meas: Measurement, intensity_grid) -> float:
    """-sum over unmasked pixels of (y - I)^2 (negated, so maximized)."""
    grid = _check_shapes(meas, intensity_grid)
    return float(-np.sum(meas.mask.grid * (meas.y - grid) ** 2))


def objective_value(meas: Measurement, intensity_grid, spec: ObjectiveSpec) -> float:
    if spec.kind == "poisson":
        return poisson_objective(meas, intensity_grid, spec.log_guard)
    return squared_objective(meas, intensity_grid)


def objective_grad_intensity(meas: Measurement, intensity_grid, spec: ObjectiveSpec) -> np.ndarray:
    """G = dObjective/dI, already gated by the beamstop mask."""
    grid = _check_shapes(meas, intensity_grid)
    b = meas.mask.grid
    if spec.kind == "poisson":
        return b * (meas.y / (grid + spec.log_guard) - 1.0)
    return b * 2.0 * (meas.y - grid)


def objective_grad_canvas(meas: Measurement, scene: Scene, gamma: float, spec: ObjectiveSpec) -> np.ndarray:
    """Gradient of the fidelity objective with respect to the full canvas."""
    shape = detector_shape(scene.canvas.shape, gamma)
    if shape != meas.y.shape:
        raise ValueError(f"detector shape {shape} does not match measurement {meas.y.shape}")
    padded = np.zeros(shape)
    h, w = scene.canvas.shape
    padded[:h, :w] = scene.canvas
    field = np.fft.fft2(padded)
    grad_i = objective_grad_intensity(meas, (field * np.conj(field)).real, spec)
    n = shape[0] * shape[1]
    grad_padded = 2.0 * n * np.fft.ifft2(grad_i * field).real
    return grad_padded[:h, :w]


def canvas_objective_and_grad(
    meas: Measurement, scene: Scene, gamma: float, spec: ObjectiveSpec
) -> tuple[float, np.ndarray, np.ndarray]:
    """Objective, canvas gradient, and the intensity grid from one DFT pass.

    The intensity grid is returned so callers can reuse it for residual
    logging without a second transform.
    """
    shape = detector_shape(scene.canvas.shape, gamma)
    if shape != meas.y.shape:
        raise ValueError(f"detector shape {shape} does not match measurement {meas.y.shape}")
    padded = np.zeros(shape)
    h, w = scene.canvas.shape
    padded[:h, :w] = scene.canvas
    field = np.fft.fft2(padded)
    grid = (field * np.conj(field)).real
    value = objective_value(meas, grid, spec)
    grad_i = objective_grad_intensity(meas, grid, spec)
    n = shape[0] * shape[1]
    grad_padded = 2.0 * n * np.fft.ifft2(grad_i * field).real
    return value, grad_padded[:h, :w], grid


def restrict_to_unknown(grad_canvas, scene: Scene) -> np.ndarray:
    """Crop a canvas gradient to the free specimen region."""
    grad = np.asarray(grad_canvas, dtype=np.float64)
    if grad.shape != scene.canvas.shape:
        raise ValueError(f"gradient shape {grad.shape} does not match canvas {scene.canvas.shape}")
    return grad[scene.x_region.slices].copy()


def embed_unknown(grad_x, scene: Scene) -> np.ndarray:
    """Adjoint of :func:`restrict_to_unknown`: zero-pad onto the canvas."""
    grad_x = np.asarray(grad_x, dtype=np.float64)
    region = scene.x_region
    if grad_x.shape != (region.height, region.width):
        raise ValueError(f"gradient shape {grad_x.shape} does not match the specimen region")
    out = np.zeros_like(scene.canvas)
    out[region.slices] = grad_x
    return out


def tv_value_grad(x, eps: float = DEFAULT_TV_EPSILON) -> tuple[float, np.ndarray]:
    """Smoothed isotropic total variation and its gradient.

    Forward differences with replicate boundary (last row/column differences
    are zero); each pixel contributes sqrt(dh^2 + dv^2 + eps^2), so a
    constant image has value H*W*eps. During optimization the contribution
    enters the maximized objective as -tv_weight * value.
    """
    arr = validate_image(x)
    if not (eps > 0):
        raise ValueError("tv smoothing eps must be > 0")
    dh = np.zeros_like(arr)
    dv = np.zeros_like(arr)
    dh[:, :-1] = arr[:, 1:] - arr[:, :-1]
    dv[:-1, :] = arr[1:, :] - arr[:-1, :]
    root = np.sqrt(dh**2 + dv**2 + eps**2)
    value = float(root.sum())
    ph = dh / root
    pv = dv / root
    grad = np.zeros_like(arr)
    grad[:, :-1] -= ph[:, :-1]
    grad[:, 1:] += ph[:, :-1]
    grad[:-1, :] -= pv[:-1, :]
    grad[1:, :] += pv[:-1, :]
    return value, grad
