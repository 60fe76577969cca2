"""Low-photon holographic diffraction imaging toolkit.

Simulates oversampled far-field magnitude measurements of a specimen placed
next to a known reference (Poisson shot noise, beamstop occlusion) and
reconstructs the specimen by Poisson likelihood ascent, optionally through an
untrained decoder prior, alongside classical filtering and alternating
projection baselines.
"""

__version__ = "0.1.0"

from .baselines import HioConfig, hio_holo, inverse_filter, wiener_filter
from .decoder import DecoderConfig, DecoderParams, LatentInput, decoder_forward, init_decoder
from .forward import (
    NOISELESS,
    BeamstopMask,
    Layout,
    Measurement,
    Scene,
    assemble_scene,
    intensity,
    make_beamstop,
    oversampled_dft,
    sample_measurement,
    simulate,
    total_intensity,
)
from .harness import (
    DepthSelectionSpec,
    SweepSpec,
    run_depth_selection,
    run_sweep,
    synthetic_specimen,
)
from .imaging import load_image, percentile_rescale, resize_bilinear, save_csv, save_png
from .metrics import frechet_distance, gaussian_stats, relative_mse, ssim
from .optimize import ReconstructionResult, RunConfig, reconstruct, residual_error

__all__ = [
    "NOISELESS",
    "BeamstopMask",
    "DecoderConfig",
    "DecoderParams",
    "DepthSelectionSpec",
    "HioConfig",
    "LatentInput",
    "Layout",
    "Measurement",
    "ReconstructionResult",
    "RunConfig",
    "Scene",
    "SweepSpec",
    "assemble_scene",
    "decoder_forward",
    "frechet_distance",
    "gaussian_stats",
    "hio_holo",
    "init_decoder",
    "intensity",
    "inverse_filter",
    "load_image",
    "make_beamstop",
    "oversampled_dft",
    "percentile_rescale",
    "reconstruct",
    "relative_mse",
    "resize_bilinear",
    "residual_error",
    "run_depth_selection",
    "run_sweep",
    "sample_measurement",
    "save_csv",
    "save_png",
    "simulate",
    "ssim",
    "synthetic_specimen",
    "total_intensity",
    "wiener_filter",
]
