"""Far-field measurement model for a specimen-plus-reference scene.

The scene is a real m x W canvas holding the unknown specimen X and a known
reference R on disjoint supports. The detector records squared magnitudes of
the oversampled discrete Fourier transform of the canvas, occluded by a
beamstop mask and corrupted by Poisson shot noise.

Conventions used throughout:

* The oversampled transform zero-pads the canvas to ceil(gamma*m) x
  ceil(gamma*W) with padding appended at the bottom and right, then applies
  the plain unnormalized DFT (numpy sign convention, e^{-2*pi*i(uk/H+vl/W)}).
* Photon normalization: expected photon counts are lambda = (np/c) * I * B
  with c the mean detector intensity, so that the average expected count per
  detector pixel equals the requested photons-per-pixel rate. The recorded
  value is y = (c/np) * k for the integer draw k, keeping y on the scale of
  I * B.
* RNG state is caller-owned: every sampling entry point takes an explicit
  seed or numpy Generator, so concurrent simulations never share state.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

import numpy as np

from .imaging import save_csv, save_png, validate_image

#: Sentinel photon rate for noiseless measurements (y = I * B exactly).
NOISELESS = math.inf

# Scalar Poisson sampling switches from inversion-by-multiplication to
# transformed rejection at this rate.
_POISSON_INVERSION_MAX = 30.0


@dataclass(frozen=True)
class Region:
    """Axis-aligned pixel rectangle (top-left corner plus size)."""

    row: int
    col: int
    height: int
    width: int

    def __post_init__(self):
        if self.height < 1 or self.width < 1:
            raise ValueError(f"region must be at least 1x1, got {self}")
        if self.row < 0 or self.col < 0:
            raise ValueError(f"region offsets must be nonnegative, got {self}")

    @property
    def slices(self) -> tuple[slice, slice]:
        return (
            slice(self.row, self.row + self.height),
            slice(self.col, self.col + self.width),
        )

    def inside(self, shape) -> bool:
        return self.row + self.height <= shape[0] and self.col + self.width <= shape[1]

    def overlaps(self, other: "Region") -> bool:
        return not (
            self.row + self.height <= other.row
            or other.row + other.height <= self.row
            or self.col + self.width <= other.col
            or other.col + other.width <= self.col
        )


@dataclass(frozen=True)
class Layout:
    """Placement rule for the reference next to an m x m specimen.

    ``separated`` is the classic (X | 0 | R) arrangement on an m x 3m canvas
    with the reference in the right third. ``offset`` places the reference
    block so its leftmost column sits ``separation * m`` pixels to the right
    of the specimen, vertically centered, on the same m x 3m canvas.
    """

    kind: str
    separation: float = 0.0

    def __post_init__(self):
        if self.kind not in ("separated", "offset"):
            raise ValueError(f"unknown layout kind {self.kind!r}")
        if self.kind == "offset" and self.separation < 0:
            raise ValueError("offset separation must be >= 0")

    @classmethod
    def parse(cls, text: str) -> "Layout":
        """Parse 'separated' or 'offset:<separation>'."""
        if text == "separated":
            return cls("separated")
        if text.startswith("offset:"):
            return cls("offset", float(text.split(":", 1)[1]))
        raise ValueError(f"cannot parse layout {text!r}")

    def to_json(self) -> dict:
        if self.kind == "separated":
            return {"kind": "separated"}
        return {"kind": "offset", "separation": self.separation}

    @classmethod
    def from_json(cls, obj) -> "Layout":
        if isinstance(obj, str):
            return cls.parse(obj)
        return cls(obj["kind"], float(obj.get("separation", 0.0)))


@dataclass(frozen=True)
class Scene:
    """Canvas composition of the unknown specimen and the known reference."""

    canvas: np.ndarray
    x_region: Region
    r_region: Region
    r_values: np.ndarray

    def __post_init__(self):
        canvas = validate_image(self.canvas, "canvas")
        object.__setattr__(self, "canvas", canvas)
        object.__setattr__(self, "r_values", validate_image(self.r_values, "reference"))
        if not self.x_region.inside(canvas.shape) or not self.r_region.inside(canvas.shape):
            raise ValueError("scene regions must lie inside the canvas")
        if self.x_region.overlaps(self.r_region):
            raise ValueError("specimen and reference regions overlap")
        if self.r_values.shape != (self.r_region.height, self.r_region.width):
            raise ValueError("reference values do not match the reference region size")
        if not np.array_equal(canvas[self.r_region.slices], self.r_values):
            raise ValueError("canvas does not hold the reference values on r_region")
        outside = canvas.copy()
        outside[self.x_region.slices] = 0.0
        outside[self.r_region.slices] = 0.0
        if np.any(outside != 0.0):
            raise ValueError("canvas must be zero outside the specimen and reference")

    @property
    def x_values(self) -> np.ndarray:
        return self.canvas[self.x_region.slices]

    def with_x(self, x) -> "Scene":
        """Return a scene whose specimen region holds ``x`` (same geometry)."""
        x = np.asarray(x, dtype=np.float64)
        if x.shape != (self.x_region.height, self.x_region.width):
            raise ValueError(
                f"specimen must be {self.x_region.height}x{self.x_region.width}, got {x.shape}"
            )
        canvas = self.canvas.copy()
        canvas[self.x_region.slices] = x
        return replace(self, canvas=canvas)


@dataclass(frozen=True)
class BeamstopMask:
    """0/1 detector mask whose zeros form a square centered on frequency 0."""

    grid: np.ndarray
    area_fraction: float

    def __post_init__(self):
        grid = np.asarray(self.grid, dtype=np.float64)
        if grid.ndim != 2:
            raise ValueError("mask grid must be 2-D")
        if not np.all((grid == 0.0) | (grid == 1.0)):
            raise ValueError("mask entries must be 0 or 1")
        object.__setattr__(self, "grid", grid)

    @property
    def shape(self):
        return self.grid.shape


@dataclass(frozen=True)
class Measurement:
    """Detector data y with its mask and the normalization metadata.

    ``np_photons`` is the expected mean photon count per detector pixel
    (``NOISELESS`` for exact magnitudes); ``c_norm`` is the mean detector
    intensity used as the photon normalizer, so nonzero entries of y are
    integer multiples of c_norm / np_photons.
    """

    y: np.ndarray
    mask: BeamstopMask
    np_photons: float
    gamma: float
    c_norm: float
    seed: int = 0

    def __post_init__(self):
        y = np.asarray(self.y, dtype=np.float64)
        if y.shape != self.mask.shape:
            raise ValueError(f"y shape {y.shape} does not match mask {self.mask.shape}")
        if np.any(y < 0) or not np.all(np.isfinite(y)):
            raise ValueError("measurement values must be finite and nonnegative")
        object.__setattr__(self, "y", y)

    @property
    def detector_shape(self):
        return self.y.shape


def assemble_scene(x, r, layout: Layout) -> Scene:
    """Place an m x m specimen and a reference on an m x 3m canvas."""
    x = validate_image(x, "specimen")
    r = validate_image(r, "reference")
    if x.shape[0] != x.shape[1]:
        raise ValueError(f"specimen must be square, got {x.shape}")
    m = x.shape[0]
    canvas = np.zeros((m, 3 * m))
    x_region = Region(0, 0, m, m)
    rh, rw = r.shape
    if layout.kind == "separated":
        r_region = Region(0, 2 * m, rh, rw)
    else:
        col = m + int(round(layout.separation * m))
        row = (m - rh) // 2
        if rh > m:
            raise ValueError("reference taller than the canvas")
        r_region = Region(row, col, rh, rw)
    if not r_region.inside(canvas.shape):
        raise ValueError(f"reference region {r_region} exceeds the {m}x{3 * m} canvas")
    if r_region.overlaps(x_region):
        raise ValueError("reference placement overlaps the specimen region")
    canvas[x_region.slices] = x
    canvas[r_region.slices] = r
    return Scene(canvas=canvas, x_region=x_region, r_region=r_region, r_values=r)


def detector_shape(canvas_shape, gamma: float) -> tuple[int, int]:
    """Detector grid size for an oversampling factor gamma >= 1."""
    if gamma < 1.0:
        raise ValueError(f"oversampling factor must be >= 1, got {gamma}")
    # small slack so gamma values like 2.0000000000000004 do not over-pad
    return (
        int(math.ceil(gamma * canvas_shape[0] - 1e-9)),
        int(math.ceil(gamma * canvas_shape[1] - 1e-9)),
    )


def oversampled_dft(canvas, gamma: float) -> np.ndarray:
    """Unnormalized 2-D DFT of the canvas zero-padded to the detector size."""
    canvas = validate_image(canvas, "canvas")
    shape = detector_shape(canvas.shape, gamma)
    padded = np.zeros(shape)
    padded[: canvas.shape[0], : canvas.shape[1]] = canvas
    return np.fft.fft2(padded)


def intensity(canvas, gamma: float) -> np.ndarray:
    """Squared DFT magnitudes at the detector."""
    f = oversampled_dft(canvas, gamma)
    return (f * np.conj(f)).real


def make_beamstop(shape, area_fraction: float) -> BeamstopMask:
    """Square zero block of area ~ a * H * W centered on frequency (0, 0).

    The side is round(sqrt(a*H*W)) forced to the detector dimensions' parity
    (even side on even grids, odd side on odd grids) so the block straddles
    frequency zero consistently; in the unshifted layout the zeros wrap
    around the four detector corners. The side never exceeds the detector.
    """
    h, w = int(shape[0]), int(shape[1])
    if h < 1 or w < 1:
        raise ValueError("detector shape must be positive")
    if not (0.0 <= area_fraction < 1.0):
        raise ValueError(f"area fraction must be in [0, 1), got {area_fraction}")
    grid = np.ones((h, w))
    side_real = math.sqrt(area_fraction * h * w)
    if h % 2 == 0 and w % 2 == 0:
        side = 2 * int(round(side_real / 2.0))
    elif h % 2 == 1 and w % 2 == 1:
        side = max(2 * int(round((side_real - 1.0) / 2.0)) + 1, 0) if side_real >= 0.5 else 0
    else:
        side = int(round(side_real))
    side = min(side, h, w)
    if side > 0:
        shifted = np.ones((h, w))
        r0 = h // 2 - side // 2
        c0 = w // 2 - side // 2
        shifted[r0 : r0 + side, c0 : c0 + side] = 0.0
        grid = np.fft.ifftshift(shifted)
    return BeamstopMask(grid=grid, area_fraction=float(area_fraction))


def total_intensity(intensity_grid) -> float:
    """Sum of the intensity over the full detector, before the beamstop."""
    grid = np.asarray(intensity_grid, dtype=np.float64)
    if np.any(grid < 0):
        raise ValueError("intensity must be nonnegative")
    total = float(grid.sum())
    if total <= 0.0:
        raise ValueError("zero scene: total intensity is 0, normalization undefined")
    return total


def poisson_draw(lam: float, rng: np.random.Generator) -> int:
    """One exact Poisson sample.

    Inversion by multiplication below rate 30, Hormann's transformed
    rejection (PTRS) above. The generator is advanced in place.
    """
    if not (lam >= 0.0) or not math.isfinite(lam):
        raise ValueError(f"Poisson rate must be finite and >= 0, got {lam}")
    if lam == 0.0:
        return 0
    if lam < _POISSON_INVERSION_MAX:
        limit = math.exp(-lam)
        k = -1
        prod = 1.0
        while True:
            prod *= rng.random()
            k += 1
            if prod <= limit:
                return k
    return _poisson_ptrs(lam, rng)


def _poisson_ptrs(lam: float, rng: np.random.Generator) -> int:
    b = 0.931 + 2.53 * math.sqrt(lam)
    a = -0.059 + 0.02483 * b
    inv_alpha = 1.1239 + 1.1328 / (b - 3.4)
    v_r = 0.9277 - 3.6224 / (b - 2.0)
    log_lam = math.log(lam)
    while True:
        u = rng.random() - 0.5
        v = rng.random()
        us = 0.5 - abs(u)
        k = int(math.floor((2.0 * a / us + b) * u + lam + 0.43))
        if us >= 0.07 and v <= v_r:
            return k
        if k < 0 or (us < 0.013 and v > us):
            continue
        if math.log(v) + math.log(inv_alpha) - math.log(a / (us * us) + b) <= (
            k * log_lam - lam - math.lgamma(k + 1.0)
        ):
            return k


def poisson_field(lam, rng: np.random.Generator) -> np.ndarray:
    """Poisson draws for a whole rate grid.

    Rates below the inversion threshold are drawn with a vectorized
    multiplication loop (one uniform per active cell per round, row-major
    order); larger rates then fall back to scalar transformed rejection in
    row-major order. The consumption order is fixed, so results are
    reproducible for a given generator state.
    """
    lam = np.asarray(lam, dtype=np.float64)
    if np.any(lam < 0) or not np.all(np.isfinite(lam)):
        raise ValueError("Poisson rates must be finite and >= 0")
    flat = lam.ravel()
    out = np.zeros(flat.size, dtype=np.int64)

    small = np.flatnonzero((flat > 0.0) & (flat < _POISSON_INVERSION_MAX))
    if small.size:
        limit = np.exp(-flat[small])
        prod = np.ones(small.size)
        count = np.full(small.size, -1, dtype=np.int64)
        active = np.arange(small.size)
        while active.size:
            prod[active] *= rng.random(active.size)
            count[active] += 1
            active = active[prod[active] > limit[active]]
        out[small] = count

    large = np.flatnonzero(flat >= _POISSON_INVERSION_MAX)
    for idx in large:
        out[idx] = _poisson_ptrs(float(flat[idx]), rng)
    return out.reshape(lam.shape)


def sample_measurement(
    intensity_grid,
    mask: BeamstopMask,
    np_photons: float,
    seed: int = 0,
    gamma: float = 2.0,
) -> Measurement:
    """Draw one detector frame from the Poisson measurement law.

    Counts follow k ~ Poisson((np/c) * I * B) with c the mean detector
    intensity, and the stored values are y = (c/np) * k. Passing
    ``np_photons=NOISELESS`` returns y = I * B exactly.
    """
    grid = np.asarray(intensity_grid, dtype=np.float64)
    if grid.shape != mask.shape:
        raise ValueError(f"intensity shape {grid.shape} does not match mask {mask.shape}")
    if not (np_photons > 0.0):
        raise ValueError(f"photon rate must be > 0, got {np_photons}")
    c_norm = total_intensity(grid) / grid.size
    masked = grid * mask.grid
    if math.isinf(np_photons):
        y = masked
    else:
        rng = np.random.default_rng(seed)
        counts = poisson_field((np_photons / c_norm) * masked, rng)
        y = (c_norm / np_photons) * counts
    return Measurement(
        y=y,
        mask=mask,
        np_photons=float(np_photons),
        gamma=float(gamma),
        c_norm=c_norm,
        seed=int(seed),
    )


def simulate(
    x,
    r,
    layout: Layout,
    np_photons: float,
    gamma: float = 2.0,
    beamstop_fraction: float = 0.0,
    seed: int = 0,
) -> tuple[Measurement, Scene]:
    """Assemble the scene and sample one measurement frame from it."""
    scene = assemble_scene(x, r, layout)
    grid = intensity(scene.canvas, gamma)
    mask = make_beamstop(grid.shape, beamstop_fraction)
    meas = sample_measurement(grid, mask, np_photons, seed=seed, gamma=gamma)
    return meas, scene


def save_measurement(meas: Measurement, layout: Layout, prefix, reference=None) -> Path:
    """Write <prefix>.csv (row, col, value triplets of nonzero y) and a JSON sidecar.

    If the reference image is given it is stored as <prefix>_reference.png
    (exact for 0/1-valued references) and recorded in the sidecar.
    """
    prefix = Path(prefix)
    rows, cols = np.nonzero(meas.y)
    save_csv(
        {"row": rows.tolist(), "col": cols.tolist(), "value": meas.y[rows, cols].tolist()},
        prefix.with_suffix(".csv"),
    )
    sidecar = {
        "np": None if math.isinf(meas.np_photons) else meas.np_photons,
        "gamma": meas.gamma,
        "a": meas.mask.area_fraction,
        "seed": meas.seed,
        "c_norm": meas.c_norm,
        "layout": layout.to_json(),
        "shape": list(meas.detector_shape),
    }
    if reference is not None:
        ref_path = prefix.parent / f"{prefix.name}_reference.png"
        save_png(reference, ref_path)
        sidecar["reference_file"] = ref_path.name
    json_path = prefix.with_suffix(".json")
    json_path.write_text(json.dumps(sidecar, indent=2, sort_keys=True) + "\n")
    return json_path


def load_measurement(json_path) -> tuple[Measurement, Layout, Optional[np.ndarray]]:
    """Read a measurement written by :func:`save_measurement`."""
    json_path = Path(json_path)
    sidecar = json.loads(json_path.read_text())
    shape = tuple(sidecar["shape"])
    y = np.zeros(shape)
    csv_path = json_path.with_suffix(".csv")
    table = np.genfromtxt(csv_path, delimiter=",", names=True, dtype=None, encoding="utf-8")
    table = np.atleast_1d(table)
    if table.size:
        y[table["row"].astype(int), table["col"].astype(int)] = table["value"]
    mask = make_beamstop(shape, float(sidecar["a"]))
    np_photons = NOISELESS if sidecar["np"] is None else float(sidecar["np"])
    meas = Measurement(
        y=y,
        mask=mask,
        np_photons=np_photons,
        gamma=float(sidecar["gamma"]),
        c_norm=float(sidecar["c_norm"]),
        seed=int(sidecar["seed"]),
    )
    layout = Layout.from_json(sidecar["layout"])
    reference = None
    if "reference_file" in sidecar:
        from .imaging import load_image

        reference = load_image(json_path.parent / sidecar["reference_file"])
    return meas, layout, reference
