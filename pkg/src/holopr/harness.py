"""Experiment harness: seeded sweeps over noise, beamstop, separation, and
oversampling, plus decoder-depth selection by group statistics.

Every sweep cell (image, method, swept value, trial) derives its own seed
from the master seed by a splitmix-style integer mix, so cells can run in
any order, serially or across worker processes, and still produce identical
records. Wall-clock timings stay on the in-memory records and the log; the
emitted CSV files contain only deterministic columns so repeated runs are
byte-identical.
"""

from __future__ import annotations

import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path
from typing import Callable, Optional

import jsonschema
import numpy as np

from .baselines import HioConfig, hio_holo, inverse_filter, wiener_filter
from .decoder import DecoderConfig
from .forward import NOISELESS, Layout, assemble_scene, intensity, make_beamstop, sample_measurement
from .imaging import load_image, percentile_rescale, resize_bilinear, save_csv, save_png
from .metrics import extract_features, frechet_distance, gaussian_stats, relative_mse, ssim
from .optimize import RunConfig, reconstruct, residual_error

log = logging.getLogger(__name__)

WORKERS_ENV_VAR = "HOLOPR_WORKERS"

SWEEP_KINDS = ("noise", "beamstop", "separation", "oversampling")

#: Optimizer step counts keyed by photons per pixel.
ITERATIONS_BY_PHOTONS = {1000.0: 10000, 100.0: 10000, 10.0: 5000, 1.0: 2500, 0.1: 1250}
#: Decoder depth keyed by photons per pixel.
DEPTH_BY_PHOTONS = {1000.0: 2, 100.0: 3, 10.0: 2, 1.0: 1, 0.1: 1}
DEFAULT_DECODER_CHANNELS = 128
DEFAULT_LR_DIRECT = 0.1
DEFAULT_LR_DECODER = 0.01
DEFAULT_TV_WEIGHT = 100.0

OPTIMIZER_METHODS = {
    "holoopt-p": "P",
    "holoopt-s": "S",
    "holoopt-p-tv": "P-TV",
    "holoopt-s-tv": "S-TV",
    "holoopt-p-dd": "P-DD",
    "holoopt-p-dd-tv": "P-DD-TV",
}
BASELINE_METHODS = ("inverse", "wiener", "hio-holo")
METHOD_ALIASES = {"hio": "hio-holo", "hioholo": "hio-holo"}

_MASK64 = (1 << 64) - 1


def _splitmix64(state: int) -> int:
    state = (state + 0x9E3779B97F4A7C15) & _MASK64
    z = state
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return z ^ (z >> 31)


def mix_seed(*parts: int) -> int:
    """Deterministic 64-bit mix of integer parts (splitmix64 chaining)."""
    acc = 0
    for part in parts:
        acc = _splitmix64(acc ^ (int(part) & _MASK64))
    return acc


def canonical_method(name: str) -> str:
    key = name.strip().lower()
    key = METHOD_ALIASES.get(key, key)
    if key not in OPTIMIZER_METHODS and key not in BASELINE_METHODS:
        known = sorted([*OPTIMIZER_METHODS, *BASELINE_METHODS])
        raise ValueError(f"unknown method {name!r}; known methods: {known}")
    return key


def _nearest_photon_key(np_photons: float) -> float:
    if math.isinf(np_photons):
        return max(ITERATIONS_BY_PHOTONS)
    keys = sorted(ITERATIONS_BY_PHOTONS)
    target = math.log10(np_photons)
    return min(keys, key=lambda k: abs(math.log10(k) - target))


def default_iterations(np_photons: float) -> int:
    return ITERATIONS_BY_PHOTONS[_nearest_photon_key(np_photons)]


def default_decoder_depth(np_photons: float) -> int:
    return DEPTH_BY_PHOTONS[_nearest_photon_key(np_photons)]


def synthetic_specimen(size: int, seed: int = 0) -> np.ndarray:
    """Deterministic natural-looking test image: smooth blobs, a bright
    rectangle, and a dark disc, normalized to span [0, 1]."""
    rng = np.random.default_rng(seed)
    yy, xx = np.meshgrid(np.arange(size), np.arange(size), indexing="ij")
    img = np.zeros((size, size))
    for _ in range(4):
        cy, cx = rng.uniform(0.2, 0.8, 2) * size
        sig = rng.uniform(0.08, 0.2) * size
        amp = rng.uniform(0.4, 1.0)
        img += amp * np.exp(-((yy - cy) ** 2 + (xx - cx) ** 2) / (2 * sig**2))
    r0, c0 = int(0.15 * size), int(0.55 * size)
    img[r0 : r0 + max(size // 5, 1), c0 : c0 + max(size // 4, 1)] += 0.8
    disc = (yy - 0.7 * size) ** 2 + (xx - 0.3 * size) ** 2 < (0.12 * size) ** 2
    img[disc] *= 0.25
    img -= img.min()
    peak = img.max()
    if peak > 0:
        img /= peak
    return img


def make_reference(kind: str, m: int, size: float, seed: int) -> np.ndarray:
    """Reference pattern for a cell: 'binary' (i.i.d. 0/1) or 'delta'."""
    if kind == "delta":
        return np.array([[1.0]])
    if kind == "binary":
        side = max(int(round(size * m)), 1)
        rng = np.random.default_rng(seed)
        ref = rng.integers(0, 2, size=(side, side)).astype(float)
        if ref.sum() == 0.0:
            ref[side // 2, side // 2] = 1.0
        return ref
    raise ValueError(f"unknown reference kind {kind!r}")


_FIXED_SCHEMA = {
    "type": "object",
    "properties": {
        "np": {"type": ["number", "null"], "exclusiveMinimum": 0},
        "gamma": {"type": "number", "minimum": 1},
        "beamstop": {"type": "number", "minimum": 0, "exclusiveMaximum": 1},
        "layout": {"type": "string"},
        "reference": {
            "type": "object",
            "properties": {
                "kind": {"enum": ["binary", "delta"]},
                "size": {"type": "number", "exclusiveMinimum": 0, "maximum": 1},
            },
            "additionalProperties": False,
        },
        "image_size": {"type": "integer", "minimum": 4},
    },
    "additionalProperties": False,
}

SWEEP_SCHEMA = {
    "type": "object",
    "required": ["kind", "grid", "methods", "images"],
    "properties": {
        "kind": {"enum": list(SWEEP_KINDS)},
        "grid": {"type": "array", "minItems": 1, "items": {"type": "number"}},
        "methods": {"type": "array", "minItems": 1, "items": {"type": "string"}},
        "images": {"type": "array", "minItems": 1, "items": {"type": "string"}},
        "trials": {"type": "integer", "minimum": 1},
        "master_seed": {"type": "integer", "minimum": 0},
        "fixed": _FIXED_SCHEMA,
        "method_params": {"type": "object"},
    },
    "additionalProperties": False,
}

DEPTH_SELECTION_SCHEMA = {
    "type": "object",
    "required": ["grid", "prior_images", "eval_images"],
    "properties": {
        "kind": {"const": "depth_selection"},
        "grid": {"type": "array", "minItems": 1, "items": {"type": "integer", "minimum": 1}},
        "prior_images": {"type": "array", "minItems": 2, "items": {"type": "string"}},
        "eval_images": {"type": "array", "minItems": 2, "items": {"type": "string"}},
        "master_seed": {"type": "integer", "minimum": 0},
        "fixed": _FIXED_SCHEMA,
        "method_params": {"type": "object"},
    },
    "additionalProperties": False,
}


@dataclass(frozen=True)
class MeasurementDefaults:
    """Fixed measurement parameters a sweep varies around."""

    np_photons: float = 10.0
    gamma: float = 2.0
    beamstop: float = 0.0
    layout: str = "separated"
    reference_kind: str = "binary"
    reference_size: float = 1.0
    image_size: Optional[int] = None

    @classmethod
    def from_json(cls, obj: dict) -> "MeasurementDefaults":
        obj = dict(obj or {})
        reference = obj.get("reference", {})
        np_value = obj.get("np", 10.0)
        return cls(
            np_photons=NOISELESS if np_value is None else float(np_value),
            gamma=float(obj.get("gamma", 2.0)),
            beamstop=float(obj.get("beamstop", 0.0)),
            layout=obj.get("layout", "separated"),
            reference_kind=reference.get("kind", "binary"),
            reference_size=float(reference.get("size", 1.0)),
            image_size=obj.get("image_size"),
        )


@dataclass(frozen=True)
class SweepSpec:
    """One experiment: a grid of swept values crossed with images, methods,
    and trials."""

    kind: str
    grid: tuple[float, ...]
    methods: tuple[str, ...]
    images: tuple[str, ...]
    trials: int = 1
    master_seed: int = 0
    fixed: MeasurementDefaults = field(default_factory=MeasurementDefaults)
    method_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in SWEEP_KINDS:
            raise ValueError(f"sweep kind must be one of {SWEEP_KINDS}, got {self.kind!r}")
        if not self.grid or not self.methods or not self.images:
            raise ValueError("grid, methods, and images must be non-empty")
        if self.trials < 1:
            raise ValueError("trials must be >= 1")
        object.__setattr__(self, "grid", tuple(float(v) for v in self.grid))
        object.__setattr__(
            self, "methods", tuple(canonical_method(m) for m in self.methods)
        )
        object.__setattr__(self, "images", tuple(str(p) for p in self.images))
        object.__setattr__(
            self,
            "method_params",
            {canonical_method(k): dict(v) for k, v in self.method_params.items()},
        )

    @classmethod
    def from_json(cls, obj: dict, base_dir: Optional[Path] = None) -> "SweepSpec":
        jsonschema.validate(obj, SWEEP_SCHEMA)
        images = obj["images"]
        if base_dir is not None:
            images = [str((Path(base_dir) / p)) if not Path(p).is_absolute() else p for p in images]
        return cls(
            kind=obj["kind"],
            grid=tuple(obj["grid"]),
            methods=tuple(obj["methods"]),
            images=tuple(images),
            trials=int(obj.get("trials", 1)),
            master_seed=int(obj.get("master_seed", 0)),
            fixed=MeasurementDefaults.from_json(obj.get("fixed")),
            method_params=obj.get("method_params", {}),
        )


@dataclass(frozen=True)
class CellSpec:
    """Everything one worker needs to run a single sweep cell."""

    kind: str
    image_path: str
    image_index: int
    method: str
    value: float
    value_index: int
    trial: int
    cell_seed: int
    fixed: MeasurementDefaults
    method_params: dict
    out_dir: Optional[str] = None


@dataclass
class CellRecord:
    image_id: str
    method: str
    value: float
    trial: int
    relative_mse: float
    ssim: float
    residual: float
    iterations: int
    seed: int
    elapsed_s: float
    image_index: int = 0
    value_index: int = 0


@dataclass
class SkippedCell:
    image_id: str
    method: str
    value: float
    trial: int
    reason: str
    image_index: int = 0
    value_index: int = 0


@dataclass
class SweepResult:
    records: list[CellRecord]
    skipped: list[SkippedCell]


def _cell_measurement_params(cell: CellSpec):
    fixed = cell.fixed
    np_photons, gamma, beamstop = fixed.np_photons, fixed.gamma, fixed.beamstop
    layout = Layout.parse(fixed.layout)
    reference_size = fixed.reference_size
    if cell.kind == "noise":
        np_photons = cell.value
    elif cell.kind == "beamstop":
        beamstop = cell.value
    elif cell.kind == "oversampling":
        gamma = cell.value
    elif cell.kind == "separation":
        layout = Layout("offset", cell.value)
    return np_photons, gamma, beamstop, layout, reference_size


def _build_run_config(method: str, np_photons: float, m: int, seed: int, params: dict) -> RunConfig:
    variant = OPTIMIZER_METHODS[method]
    uses_decoder = "-DD" in variant
    uses_tv = variant.endswith("-TV")
    iterations = int(params.get("iterations", default_iterations(np_photons)))
    lr = float(params.get("lr", DEFAULT_LR_DECODER if uses_decoder else DEFAULT_LR_DIRECT))
    tv_weight = float(params.get("tv_weight", DEFAULT_TV_WEIGHT)) if uses_tv else 0.0
    decoder = None
    if uses_decoder:
        depth = int(params.get("depth", default_decoder_depth(np_photons)))
        channels = int(params.get("channels", DEFAULT_DECODER_CHANNELS))
        decoder = DecoderConfig.for_output((m, m), depth=depth, channels=channels)
    return RunConfig(
        variant=variant,
        iterations=iterations,
        lr=lr,
        tv_weight=tv_weight,
        decoder=decoder,
        seed=seed,
        log_every=int(params.get("log_every", 10)),
    )


def run_cell(cell: CellSpec):
    """Execute one sweep cell; returns a CellRecord or a SkippedCell."""
    image_id = Path(cell.image_path).stem
    started = time.perf_counter()
    np_photons, gamma, beamstop, layout, reference_size = _cell_measurement_params(cell)

    x_true = load_image(cell.image_path)
    if cell.fixed.image_size is not None:
        x_true = resize_bilinear(x_true, cell.fixed.image_size, cell.fixed.image_size)
    if x_true.shape[0] != x_true.shape[1]:
        side = min(x_true.shape)
        x_true = x_true[:side, :side]
    m = x_true.shape[0]

    def skip(reason):
        return SkippedCell(
            image_id=image_id,
            method=cell.method,
            value=cell.value,
            trial=cell.trial,
            reason=reason,
            image_index=cell.image_index,
            value_index=cell.value_index,
        )

    if cell.method in ("inverse", "wiener"):
        if layout.kind != "separated":
            return skip("requires the fully separated layout")
        if gamma < 2.0 - 1e-12:
            return skip(f"requires oversampling >= 2, cell has gamma={gamma}")

    reference = make_reference(
        cell.fixed.reference_kind, m, reference_size, mix_seed(cell.cell_seed, 1)
    )
    scene = assemble_scene(x_true, reference, layout)
    grid = intensity(scene.canvas, gamma)
    mask = make_beamstop(grid.shape, beamstop)
    meas = sample_measurement(grid, mask, np_photons, seed=mix_seed(cell.cell_seed, 2), gamma=gamma)
    template = assemble_scene(np.zeros((m, m)), reference, layout)
    recon_seed = mix_seed(cell.cell_seed, 3)
    params = dict(cell.method_params.get(cell.method, {}))
    iterations = 0

    if cell.method in OPTIMIZER_METHODS:
        try:
            cfg = _build_run_config(cell.method, np_photons, m, recon_seed, params)
        except ValueError as exc:
            return skip(str(exc))
        result = reconstruct(meas, reference, layout, cfg)
        x_hat = result.x_hat
        residual = min(v for _, v in result.residual_trace)
        iterations = cfg.iterations
    elif cell.method == "hio-holo":
        cfg = HioConfig(
            iterations=int(params.get("iterations", 1000)),
            beta=float(params.get("beta", 0.9)),
            seed=recon_seed,
            log_every=int(params.get("log_every", 1)),
        )
        result = hio_holo(meas, reference, layout, cfg)
        x_hat = result.x_hat
        residual = min(v for _, v in result.residual_trace)
        iterations = cfg.iterations
    elif cell.method == "inverse":
        x_hat = inverse_filter(meas, reference, layout)
        residual = residual_error(meas, x_hat, template)
    else:
        sigma2 = params.get("sigma2")
        x_hat = wiener_filter(meas, reference, layout, sigma2=sigma2)
        residual = residual_error(meas, x_hat, template)

    record = CellRecord(
        image_id=image_id,
        method=cell.method,
        value=cell.value,
        trial=cell.trial,
        relative_mse=relative_mse(x_hat, x_true),
        ssim=ssim(x_hat, x_true) if m >= 11 else float("nan"),
        residual=residual,
        iterations=iterations,
        seed=cell.cell_seed,
        elapsed_s=time.perf_counter() - started,
        image_index=cell.image_index,
        value_index=cell.value_index,
    )
    if cell.out_dir is not None:
        recon_dir = Path(cell.out_dir) / "recon"
        recon_dir.mkdir(parents=True, exist_ok=True)
        name = f"{image_id}__{cell.method}__v{cell.value_index}__t{cell.trial}.png"
        save_png(percentile_rescale(x_hat), recon_dir / name)
    return record


def _cells_for(spec: SweepSpec, out_dir: Optional[Path]) -> list[CellSpec]:
    cells = []
    for image_index, image_path in enumerate(spec.images):
        for method in spec.methods:
            for value_index, value in enumerate(spec.grid):
                for trial in range(spec.trials):
                    cells.append(
                        CellSpec(
                            kind=spec.kind,
                            image_path=image_path,
                            image_index=image_index,
                            method=method,
                            value=value,
                            value_index=value_index,
                            trial=trial,
                            cell_seed=mix_seed(
                                spec.master_seed, image_index, value_index, trial
                            ),
                            fixed=spec.fixed,
                            method_params=spec.method_params,
                            out_dir=str(out_dir) if out_dir is not None else None,
                        )
                    )
    return cells


def worker_count(workers: Optional[int] = None) -> int:
    if workers is not None:
        return max(int(workers), 1)
    return max(int(os.environ.get(WORKERS_ENV_VAR, "1")), 1)


def run_sweep(spec: SweepSpec, out_dir=None, workers: Optional[int] = None) -> SweepResult:
    """Run every cell of the sweep and emit deterministic CSV outputs.

    Results are sorted canonically before emission, so the output does not
    depend on the execution order or the worker count.
    """
    out_path = Path(out_dir) if out_dir is not None else None
    if out_path is not None:
        out_path.mkdir(parents=True, exist_ok=True)
    cells = _cells_for(spec, out_path)
    n_workers = worker_count(workers)
    log.info("running %d sweep cells on %d worker(s)", len(cells), n_workers)

    if n_workers == 1:
        outcomes = [run_cell(cell) for cell in cells]
    else:
        with ProcessPoolExecutor(max_workers=n_workers) as pool:
            outcomes = list(pool.map(run_cell, cells))

    records = [o for o in outcomes if isinstance(o, CellRecord)]
    skipped = [o for o in outcomes if isinstance(o, SkippedCell)]
    method_order = {method: i for i, method in enumerate(spec.methods)}
    sort_key = lambda r: (r.image_index, method_order[r.method], r.value_index, r.trial)
    records.sort(key=sort_key)
    skipped.sort(key=sort_key)
    for record in records:
        log.info(
            "%s %s value=%g trial=%d: mse=%.4f ssim=%.4f residual=%.4f (%.1fs)",
            record.image_id, record.method, record.value, record.trial,
            record.relative_mse, record.ssim, record.residual, record.elapsed_s,
        )
    for cell in skipped:
        log.info("skipped %s %s value=%g: %s", cell.image_id, cell.method, cell.value, cell.reason)

    result = SweepResult(records=records, skipped=skipped)
    if out_path is not None:
        emit_sweep_csv(result, out_path)
    return result


def emit_sweep_csv(result: SweepResult, out_dir: Path) -> None:
    """Write records.csv, aggregates.csv, and skipped.csv (timings excluded)."""
    out_dir = Path(out_dir)
    records = result.records
    save_csv(
        {
            "image_id": [r.image_id for r in records],
            "method": [r.method for r in records],
            "value": [r.value for r in records],
            "trial": [r.trial for r in records],
            "relative_mse": [r.relative_mse for r in records],
            "ssim": [r.ssim for r in records],
            "residual": [r.residual for r in records],
            "iterations": [r.iterations for r in records],
            "seed": [r.seed for r in records],
        },
        out_dir / "records.csv",
    )
    groups: dict[tuple[int, float], list[CellRecord]] = {}
    method_order: dict[str, int] = {}
    for r in records:
        method_order.setdefault(r.method, len(method_order))
        groups.setdefault((method_order[r.method], r.value_index), []).append(r)
    agg_rows = []
    for key in sorted(groups):
        rows = groups[key]
        agg = {"method": rows[0].method, "value": rows[0].value, "n": len(rows)}
        for metric in ("relative_mse", "ssim", "residual"):
            values = np.array([getattr(r, metric) for r in rows])
            agg[f"mean_{metric}"] = float(values.mean())
            agg[f"std_{metric}"] = float(values.std(ddof=1)) if len(values) > 1 else 0.0
        agg_rows.append(agg)
    if agg_rows:
        save_csv(
            {name: [row[name] for row in agg_rows] for name in agg_rows[0]},
            out_dir / "aggregates.csv",
        )
    if result.skipped:
        save_csv(
            {
                "image_id": [s.image_id for s in result.skipped],
                "method": [s.method for s in result.skipped],
                "value": [s.value for s in result.skipped],
                "trial": [s.trial for s in result.skipped],
                "reason": [s.reason for s in result.skipped],
            },
            out_dir / "skipped.csv",
        )


@dataclass(frozen=True)
class DepthSelectionSpec:
    """Decoder-depth selection using half the images as a feature prior."""

    grid: tuple[int, ...]
    prior_images: tuple[str, ...]
    eval_images: tuple[str, ...]
    master_seed: int = 0
    fixed: MeasurementDefaults = field(default_factory=MeasurementDefaults)
    method_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if len(self.prior_images) < 2 or len(self.eval_images) < 2:
            raise ValueError("need at least two prior and two eval images")
        if set(self.prior_images) & set(self.eval_images):
            raise ValueError("prior and eval image lists must be disjoint")

    @classmethod
    def from_json(cls, obj: dict, base_dir: Optional[Path] = None) -> "DepthSelectionSpec":
        jsonschema.validate(obj, DEPTH_SELECTION_SCHEMA)

        def resolve(paths):
            if base_dir is None:
                return tuple(paths)
            return tuple(
                str(Path(base_dir) / p) if not Path(p).is_absolute() else p for p in paths
            )

        return cls(
            grid=tuple(int(d) for d in obj["grid"]),
            prior_images=resolve(obj["prior_images"]),
            eval_images=resolve(obj["eval_images"]),
            master_seed=int(obj.get("master_seed", 0)),
            fixed=MeasurementDefaults.from_json(obj.get("fixed")),
            method_params=obj.get("method_params", {}),
        )


def _default_depth_reconstruct(spec: DepthSelectionSpec):
    params = dict(spec.method_params.get("holoopt-p-dd", {}))

    def runner(x_true, depth: int, cell_seed: int) -> np.ndarray:
        m = x_true.shape[0]
        layout = Layout.parse(spec.fixed.layout)
        reference = make_reference(
            spec.fixed.reference_kind, m, spec.fixed.reference_size, mix_seed(cell_seed, 1)
        )
        scene = assemble_scene(x_true, reference, layout)
        grid = intensity(scene.canvas, spec.fixed.gamma)
        mask = make_beamstop(grid.shape, spec.fixed.beamstop)
        meas = sample_measurement(
            grid, mask, spec.fixed.np_photons,
            seed=mix_seed(cell_seed, 2), gamma=spec.fixed.gamma,
        )
        cfg = RunConfig(
            variant="P-DD",
            iterations=int(params.get("iterations", default_iterations(spec.fixed.np_photons))),
            lr=float(params.get("lr", DEFAULT_LR_DECODER)),
            decoder=DecoderConfig.for_output(
                (m, m), depth=depth, channels=int(params.get("channels", DEFAULT_DECODER_CHANNELS))
            ),
            seed=mix_seed(cell_seed, 3),
            log_every=int(params.get("log_every", 10)),
        )
        return reconstruct(meas, reference, layout, cfg).x_hat

    return runner


def run_depth_selection(
    spec: DepthSelectionSpec,
    reconstruct_fn: Optional[Callable[[np.ndarray, int, int], np.ndarray]] = None,
    extractor=None,
    out_dir=None,
) -> list[dict]:
    """Score each decoder depth by Frechet distance to the prior images.

    The prior statistics come from the ground-truth prior images. For each
    depth, every eval image is reconstructed (``reconstruct_fn(x_true,
    depth, cell_seed)``, by default a full measurement + decoder run), the
    reconstruction features are summarized, and the distance to the prior is
    recorded together with the mean relative reconstruction error. A
    ``floor`` row reports the distance when the reconstructions are replaced
    by the eval ground truths themselves.
    """
    reconstruct_fn = reconstruct_fn or _default_depth_reconstruct(spec)

    def prepare(path):
        img = load_image(path)
        if spec.fixed.image_size is not None:
            img = resize_bilinear(img, spec.fixed.image_size, spec.fixed.image_size)
        return img

    prior = [prepare(p) for p in spec.prior_images]
    evals = [prepare(p) for p in spec.eval_images]
    prior_stats = gaussian_stats([extract_features(im, extractor) for im in prior])
    truth_stats = gaussian_stats([extract_features(im, extractor) for im in evals])

    rows = [
        {
            "depth": "floor",
            "fid": frechet_distance(prior_stats, truth_stats),
            "mean_relative_mse": 0.0,
        }
    ]
    for depth_index, depth in enumerate(spec.grid):
        recon_features = []
        errors = []
        for image_index, x_true in enumerate(evals):
            cell_seed = mix_seed(spec.master_seed, depth_index, image_index)
            x_hat = reconstruct_fn(x_true, depth, cell_seed)
            recon_features.append(extract_features(x_hat, extractor))
            errors.append(relative_mse(x_hat, x_true))
        recon_stats = gaussian_stats(recon_features)
        rows.append(
            {
                "depth": int(depth),
                "fid": frechet_distance(prior_stats, recon_stats),
                "mean_relative_mse": float(np.mean(errors)),
            }
        )
        log.info("depth %d: fid=%.6g mean_mse=%.6g", depth, rows[-1]["fid"], rows[-1]["mean_relative_mse"])

    if out_dir is not None:
        out_path = Path(out_dir)
        out_path.mkdir(parents=True, exist_ok=True)
        save_csv(
            {
                "depth": [str(row["depth"]) for row in rows],
                "fid": [row["fid"] for row in rows],
                "mean_relative_mse": [row["mean_relative_mse"] for row in rows],
            },
            out_path / "depth_selection.csv",
        )
    return rows
