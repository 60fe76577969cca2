"""Gradient-ascent reconstruction driver.

Six variants share one Adam ascent loop: direct pixel optimization of the
Poisson likelihood (P) or negated squared error (S), their total-variation
regularized forms (P-TV, S-TV), and decoder-parameterized Poisson variants
(P-DD, P-DD-TV). The iterate with the best magnitude residual among the
logged iterations is returned.
"""

from __future__ import annotations

import math
import time
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .decoder import DecoderConfig, decoder_backward, decoder_forward, init_decoder
from .forward import Layout, Measurement, Scene, assemble_scene, detector_shape
from .objective import ObjectiveSpec, canvas_objective_and_grad, restrict_to_unknown, tv_value_grad

VARIANTS = ("P", "S", "P-TV", "S-TV", "P-DD", "P-DD-TV")

DEFAULT_TV_WEIGHT = 100.0


@dataclass
class AdamState:
    """Per-parameter moment estimates for the ascent updates."""

    first_moment: list[np.ndarray]
    second_moment: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    lr: float = 0.1

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ValueError("Adam betas must lie in [0, 1)")
        if self.step < 0:
            raise ValueError("Adam step count must be >= 0")

    @classmethod
    def for_params(cls, params: list[np.ndarray], lr: float, **kwargs) -> "AdamState":
        return cls(
            first_moment=[np.zeros_like(p) for p in params],
            second_moment=[np.zeros_like(p) for p in params],
            lr=lr,
            **kwargs,
        )


def adam_step(state: AdamState, params: list[np.ndarray], grads: list[np.ndarray]):
    """One bias-corrected Adam update in the ascent direction (in place)."""
    if len(params) != len(grads) or len(params) != len(state.first_moment):
        raise ValueError("parameter, gradient, and state lists must align")
    state.step += 1
    t = state.step
    for p, g, m, v in zip(params, grads, state.first_moment, state.second_moment):
        if p.shape != g.shape:
            raise ValueError(f"gradient shape {g.shape} does not match parameter {p.shape}")
        m *= state.beta1
        m += (1.0 - state.beta1) * g
        v *= state.beta2
        v += (1.0 - state.beta2) * g * g
        m_hat = m / (1.0 - state.beta1**t)
        v_hat = v / (1.0 - state.beta2**t)
        p += state.lr * m_hat / (np.sqrt(v_hat) + state.eps)
    return state, params


@dataclass(frozen=True)
class RunConfig:
    """Settings for one reconstruction run."""

    variant: str = "P"
    iterations: int = 1000
    lr: float = 0.1
    tv_weight: float = 0.0
    tv_epsilon: float = 1e-3
    log_guard: float = 1e-12
    decoder: Optional[DecoderConfig] = None
    seed: int = 0
    log_every: int = 10

    def __post_init__(self):
        if self.variant not in VARIANTS:
            raise ValueError(f"variant must be one of {VARIANTS}, got {self.variant!r}")
        if self.iterations < 1:
            raise ValueError("iterations must be >= 1")
        if self.log_every < 1:
            raise ValueError("log_every must be >= 1")
        if self.lr < 0:
            raise ValueError("learning rate must be >= 0")
        if self.tv_weight < 0:
            raise ValueError("tv_weight must be >= 0")
        if self.tv_weight > 0 and not self.uses_tv:
            raise ValueError(f"variant {self.variant} does not accept tv_weight > 0")

    @property
    def uses_tv(self) -> bool:
        return self.variant.endswith("-TV")

    @property
    def uses_decoder(self) -> bool:
        return "-DD" in self.variant

    @property
    def objective_kind(self) -> str:
        return "poisson" if self.variant.startswith("P") else "squared"

    @classmethod
    def from_json(cls, obj: dict) -> "RunConfig":
        """Build a config from a JSON document (decoder block optional)."""
        obj = dict(obj)
        decoder = obj.pop("decoder", None)
        if decoder is not None:
            decoder = DecoderConfig(
                depth=int(decoder["depth"]),
                channels=tuple(decoder["channels"]),
                latent_shape=tuple(decoder["latent_shape"]),
            )
        known = {f for f in cls.__dataclass_fields__}
        unknown = set(obj) - known
        if unknown:
            raise ValueError(f"unknown run config fields: {sorted(unknown)}")
        return cls(decoder=decoder, **obj)

    def to_json(self) -> dict:
        out = {
            "variant": self.variant,
            "iterations": self.iterations,
            "lr": self.lr,
            "tv_weight": self.tv_weight,
            "tv_epsilon": self.tv_epsilon,
            "log_guard": self.log_guard,
            "seed": self.seed,
            "log_every": self.log_every,
        }
        if self.decoder is not None:
            out["decoder"] = {
                "depth": self.decoder.depth,
                "channels": list(self.decoder.channels),
                "latent_shape": list(self.decoder.latent_shape),
            }
        return out


@dataclass
class ReconstructionResult:
    """Recovered specimen plus the iteration traces behind its selection."""

    x_hat: np.ndarray
    residual_trace: list[tuple[int, float]]
    best_iteration: int
    objective_trace: list[tuple[int, float]]
    seed: int
    elapsed_s: float = 0.0

    def trace_columns(self) -> dict:
        """Trace rows as named CSV columns (iteration, objective, residual)."""
        return {
            "iteration": [t for t, _ in self.residual_trace],
            "objective": [val for _, val in self.objective_trace],
            "residual": [val for _, val in self.residual_trace],
        }


def specimen_size(meas: Measurement) -> int:
    """Infer the specimen side m from the detector shape and gamma."""
    det_h = meas.detector_shape[0]
    m = int(round(det_h / meas.gamma))
    if detector_shape((m, 3 * m), meas.gamma) != meas.detector_shape:
        raise ValueError(
            f"detector shape {meas.detector_shape} is inconsistent with gamma={meas.gamma}"
        )
    return m


def _masked_forward_deviation(meas: Measurement, intensity_grid: np.ndarray) -> float:
    return float(np.linalg.norm(meas.y - intensity_grid * meas.mask.grid))


def residual_error(meas: Measurement, x_hat, scene_template: Scene, gamma: float = None) -> float:
    """Normalized magnitude residual ||y - I(assemble(x_hat, R)) . B|| / ||y||."""
    gamma = meas.gamma if gamma is None else gamma
    y_norm = float(np.linalg.norm(meas.y))
    if y_norm == 0.0:
        raise ValueError("measurement norm is zero, residual undefined")
    from .forward import intensity

    scene = scene_template.with_x(x_hat)
    grid = intensity(scene.canvas, gamma)
    if grid.shape != meas.y.shape:
        raise ValueError("scene and measurement detector shapes differ")
    return _masked_forward_deviation(meas, grid) / y_norm


def reconstruct(meas: Measurement, reference, layout: Layout, cfg: RunConfig) -> ReconstructionResult:
    """Run one gradient-ascent reconstruction, returning the best-residual iterate.

    Direct variants initialize the specimen pixels i.i.d. U[0, 1]; decoder
    variants initialize the network from the same seed. The residual and
    objective are logged every ``log_every`` iterations and at the final
    iterate; the returned image minimizes the logged residual. Deterministic
    for a fixed config.
    """
    if not np.any(meas.mask.grid):
        raise ValueError("beamstop mask occludes every pixel, nothing to fit")
    m = specimen_size(meas)
    scene_template = assemble_scene(np.zeros((m, m)), reference, layout)
    spec = ObjectiveSpec(
        kind=cfg.objective_kind,
        tv_weight=cfg.tv_weight if cfg.uses_tv else 0.0,
        tv_epsilon=cfg.tv_epsilon,
        log_guard=cfg.log_guard,
    )

    decoder_cfg = None
    if cfg.uses_decoder:
        decoder_cfg = cfg.decoder or DecoderConfig.for_output((m, m), depth=2, channels=64)
        if decoder_cfg.output_shape != (m, m):
            raise ValueError(
                f"decoder output {decoder_cfg.output_shape} does not match specimen {m}x{m}"
            )
        dd_params, latent = init_decoder(decoder_cfg, cfg.seed)
        opt_params = dd_params.as_list()
    else:
        rng = np.random.default_rng(cfg.seed)
        opt_params = [rng.random((m, m))]

    adam = AdamState.for_params(opt_params, lr=cfg.lr)
    y_norm = float(np.linalg.norm(meas.y))
    if y_norm == 0.0:
        raise ValueError("measurement norm is zero, residual undefined")

    best_residual = math.inf
    best_iteration = -1
    best_x = None
    residual_trace: list[tuple[int, float]] = []
    objective_trace: list[tuple[int, float]] = []
    started = time.perf_counter()

    for t in range(cfg.iterations + 1):
        if cfg.uses_decoder:
            x_img, cache = decoder_forward(dd_params, latent)
        else:
            x_img = opt_params[0]
        scene = scene_template.with_x(x_img)
        value, grad_canvas, grid = canvas_objective_and_grad(meas, scene, meas.gamma, spec)
        if spec.tv_weight > 0.0:
            tv_val, tv_grad = tv_value_grad(x_img, spec.tv_epsilon)
            value -= spec.tv_weight * tv_val

        log_now = t > 0 and (t % cfg.log_every == 0 or t == cfg.iterations)
        if log_now:
            residual = _masked_forward_deviation(meas, grid) / y_norm
            residual_trace.append((t, residual))
            objective_trace.append((t, value))
            if residual < best_residual:
                best_residual = residual
                best_iteration = t
                best_x = np.array(x_img, copy=True)
        if t == cfg.iterations:
            break

        grad_x = restrict_to_unknown(grad_canvas, scene)
        if spec.tv_weight > 0.0:
            grad_x -= spec.tv_weight * tv_grad
        if cfg.uses_decoder:
            grad_params = decoder_backward(dd_params, latent, cache, grad_x)
            grads = grad_params.as_list()
        else:
            grads = [grad_x]
        adam_step(adam, opt_params, grads)

    return ReconstructionResult(
        x_hat=best_x,
        residual_trace=residual_trace,
        best_iteration=best_iteration,
        objective_trace=objective_trace,
        seed=cfg.seed,
        elapsed_s=time.perf_counter() - started,
    )
