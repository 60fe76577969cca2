"""Command-line interface.

Subcommands: ``simulate`` (image -> measurement files), ``reconstruct``
(measurement + method -> reconstruction PNG/CSV and trace), ``sweep``
(experiment spec JSON -> records/aggregates CSV and reconstruction PNGs),
``metrics`` (two images -> relative error and SSIM), and ``select-depth``
(depth-selection spec JSON -> score table). All commands are deterministic
for a fixed ``--seed``.
"""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

import jsonschema
import numpy as np

from . import __version__
from .baselines import HioConfig, hio_holo, inverse_filter, wiener_filter
from .decoder import DecoderConfig
from .forward import (
    NOISELESS,
    Layout,
    assemble_scene,
    intensity,
    load_measurement,
    make_beamstop,
    sample_measurement,
    save_measurement,
)
from .harness import (
    DepthSelectionSpec,
    SweepSpec,
    canonical_method,
    default_iterations,
    make_reference,
    mix_seed,
    run_depth_selection,
    run_sweep,
    OPTIMIZER_METHODS,
)
from .imaging import load_image, percentile_rescale, resize_bilinear, save_csv, save_png
from .metrics import relative_mse, ssim
from .optimize import RunConfig, reconstruct, residual_error, specimen_size

log = logging.getLogger("holopr")


def _parse_reference(text: str, m: int, seed: int) -> np.ndarray:
    """'binary', 'binary:<size-fraction>', 'delta', or an image file path."""
    if text == "delta":
        return make_reference("delta", m, 1.0, seed)
    if text == "binary" or text.startswith("binary:"):
        size = float(text.split(":", 1)[1]) if ":" in text else 1.0
        return make_reference("binary", m, size, seed)
    return load_image(text)


def _cmd_simulate(args) -> int:
    x = load_image(args.image)
    if args.image_size is not None:
        x = resize_bilinear(x, args.image_size, args.image_size)
    if x.shape[0] != x.shape[1]:
        side = min(x.shape)
        x = x[:side, :side]
    layout = Layout.parse(args.layout)
    reference = _parse_reference(args.reference, x.shape[0], mix_seed(args.seed, 1))
    scene = assemble_scene(x, reference, layout)
    grid = intensity(scene.canvas, args.gamma)
    mask = make_beamstop(grid.shape, args.beamstop)
    np_photons = NOISELESS if args.np is None else args.np
    meas = sample_measurement(
        grid, mask, np_photons, seed=mix_seed(args.seed, 2), gamma=args.gamma
    )
    json_path = save_measurement(meas, layout, args.out, reference=reference)
    log.info("wrote %s and %s", json_path.with_suffix(".csv"), json_path)
    print(json_path)
    return 0


def _save_image_csv(img: np.ndarray, path) -> None:
    rows, cols = np.indices(img.shape)
    save_csv(
        {"row": rows.ravel().tolist(), "col": cols.ravel().tolist(), "value": img.ravel().tolist()},
        path,
    )


def _cmd_reconstruct(args) -> int:
    meas, layout, reference = load_measurement(args.measurement)
    if args.reference is not None:
        reference = load_image(args.reference)
    if reference is None:
        raise ValueError(
            "measurement sidecar carries no reference image; pass --reference"
        )
    method = canonical_method(args.method)
    m = specimen_size(meas)
    template = assemble_scene(np.zeros((m, m)), reference, layout)
    trace = None

    if method in OPTIMIZER_METHODS:
        if args.config is not None:
            cfg = RunConfig.from_json(json.loads(Path(args.config).read_text()))
        else:
            variant = OPTIMIZER_METHODS[method]
            decoder = None
            if "-DD" in variant:
                decoder = DecoderConfig.for_output(
                    (m, m), depth=args.depth, channels=args.channels
                )
            cfg = RunConfig(
                variant=variant,
                iterations=args.iterations or default_iterations(meas.np_photons),
                lr=args.lr if args.lr is not None else (0.01 if decoder else 0.1),
                tv_weight=args.tv_weight if variant.endswith("-TV") else 0.0,
                decoder=decoder,
                seed=args.seed,
                log_every=args.log_every,
            )
        result = reconstruct(meas, reference, layout, cfg)
        x_hat, trace = result.x_hat, result.trace_columns()
        residual = min(v for _, v in result.residual_trace)
    elif method == "hio-holo":
        cfg = HioConfig(
            iterations=args.iterations or 1000,
            beta=args.beta,
            seed=args.seed,
            log_every=args.log_every,
        )
        result = hio_holo(meas, reference, layout, cfg)
        x_hat, trace = result.x_hat, result.trace_columns()
        residual = min(v for _, v in result.residual_trace)
    elif method == "inverse":
        x_hat = inverse_filter(meas, reference, layout)
        residual = residual_error(meas, x_hat, template)
    else:
        x_hat = wiener_filter(meas, reference, layout, sigma2=args.sigma2)
        residual = residual_error(meas, x_hat, template)

    out = Path(args.out)
    out.parent.mkdir(parents=True, exist_ok=True)
    save_png(percentile_rescale(x_hat), f"{out}_recon.png")
    _save_image_csv(x_hat, f"{out}_recon.csv")
    if trace is not None:
        save_csv(trace, f"{out}_trace.csv")
    print(f"method={method} residual={residual!r}")
    return 0


def _cmd_sweep(args) -> int:
    spec_path = Path(args.spec)
    obj = json.loads(spec_path.read_text())
    spec = SweepSpec.from_json(obj, base_dir=spec_path.parent)
    if args.seed is not None:
        spec = SweepSpec(
            kind=spec.kind,
            grid=spec.grid,
            methods=spec.methods,
            images=spec.images,
            trials=spec.trials,
            master_seed=args.seed,
            fixed=spec.fixed,
            method_params=spec.method_params,
        )
    result = run_sweep(spec, out_dir=args.out, workers=args.workers)
    print(
        f"sweep complete: {len(result.records)} records, "
        f"{len(result.skipped)} skipped -> {args.out}"
    )
    return 0


def _cmd_metrics(args) -> int:
    a = load_image(args.image_a)
    b = load_image(args.image_b)
    mse = relative_mse(a, b)
    score = ssim(a, b)
    print(f"relative_mse={mse!r}")
    print(f"ssim={score!r}")
    if args.out is not None:
        save_csv({"relative_mse": [mse], "ssim": [score]}, args.out)
    return 0


def _cmd_select_depth(args) -> int:
    spec_path = Path(args.spec)
    obj = json.loads(spec_path.read_text())
    spec = DepthSelectionSpec.from_json(obj, base_dir=spec_path.parent)
    rows = run_depth_selection(spec, out_dir=args.out)
    for row in rows:
        print(f"depth={row['depth']} fid={row['fid']!r} mean_relative_mse={row['mean_relative_mse']!r}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="holopr",
        description="Low-photon holographic diffraction imaging toolkit",
    )
    parser.add_argument("--version", action="version", version=f"holopr {__version__}")
    parser.add_argument(
        "-q", "--quiet", action="store_true", help="suppress progress logging"
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="simulate a measurement from an image")
    sim.add_argument("--image", required=True, help="specimen PNG or PGM file")
    sim.add_argument("--np", type=float, default=None, help="photons per pixel (omit for noiseless)")
    sim.add_argument("--gamma", type=float, default=2.0, help="oversampling factor")
    sim.add_argument("--beamstop", type=float, default=0.0, help="beamstop area fraction")
    sim.add_argument("--layout", default="separated", help="'separated' or 'offset:<s>'")
    sim.add_argument(
        "--reference",
        default="binary",
        help="'binary[:size]', 'delta', or a reference image path",
    )
    sim.add_argument("--image-size", type=int, default=None, help="resize specimen to this side")
    sim.add_argument("--seed", type=int, default=0)
    sim.add_argument("--out", required=True, help="output path prefix")
    sim.set_defaults(func=_cmd_simulate)

    rec = sub.add_parser("reconstruct", help="reconstruct a saved measurement")
    rec.add_argument("--measurement", required=True, help="measurement sidecar JSON")
    rec.add_argument("--method", required=True, help="holoopt-p[-tv|-dd|-dd-tv], holoopt-s[-tv], hio-holo, inverse, wiener")
    rec.add_argument("--reference", default=None, help="override reference image path")
    rec.add_argument("--config", default=None, help="run config JSON (overrides the tuning flags)")
    rec.add_argument("--iterations", type=int, default=None)
    rec.add_argument("--lr", type=float, default=None)
    rec.add_argument("--tv-weight", type=float, default=100.0)
    rec.add_argument("--depth", type=int, default=2, help="decoder depth (DD variants)")
    rec.add_argument("--channels", type=int, default=128, help="decoder channels (DD variants)")
    rec.add_argument("--beta", type=float, default=0.9, help="HIO feedback parameter")
    rec.add_argument("--sigma2", type=float, default=None, help="Wiener noise power")
    rec.add_argument("--log-every", type=int, default=10)
    rec.add_argument("--seed", type=int, default=0)
    rec.add_argument("--out", required=True, help="output path prefix")
    rec.set_defaults(func=_cmd_reconstruct)

    swp = sub.add_parser("sweep", help="run an experiment sweep from a JSON spec")
    swp.add_argument("--spec", required=True, help="sweep spec JSON file")
    swp.add_argument("--out", required=True, help="output directory")
    swp.add_argument("--seed", type=int, default=None, help="override the spec master_seed")
    swp.add_argument("--workers", type=int, default=None, help="worker processes (default $HOLOPR_WORKERS or 1)")
    swp.set_defaults(func=_cmd_sweep)

    met = sub.add_parser("metrics", help="compare two images")
    met.add_argument("image_a")
    met.add_argument("image_b")
    met.add_argument("--out", default=None, help="optional metrics CSV path")
    met.set_defaults(func=_cmd_metrics)

    dep = sub.add_parser("select-depth", help="decoder depth selection from a JSON spec")
    dep.add_argument("--spec", required=True, help="depth-selection spec JSON file")
    dep.add_argument("--out", default=None, help="output directory")
    dep.set_defaults(func=_cmd_select_depth)
    return parser


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING if args.quiet else logging.INFO,
        format="%(levelname)s %(name)s: %(message)s",
        stream=sys.stderr,
    )
    try:
        return args.func(args)
    except (ValueError, FileNotFoundError, jsonschema.ValidationError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
