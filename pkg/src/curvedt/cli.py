"""Command-line front end.

Exit codes: 0 success, 2 configuration error, 3 numerical failure, 4 I/O error.
"""

import argparse
import csv
import os
import sys
import time
from dataclasses import replace

import numpy as np

from . import config as _config
from . import io as _io
from .errors import ConvergenceError, DomainError, FormatError, GeometryError, ValidityError
from .forward import MeasurementMatrix, simulate_measurements
from .geometry import BoundaryCurve, CurveSpec, sample_curve
from .kspace import (ReconstructionParams, assemble, butterworth, fft_map_interp, invert_to_image,
                     make_plan, normalized_cross_correlation, reconstruct, virtual_arrays)
from .phantom import NO_DEFORMATION, Deformation, Phantom, make_resolution_phantom, \
    make_shepp_logan_modified, phantom_to_q

EXIT_OK, EXIT_CONFIG, EXIT_NUMERIC, EXIT_IO = 0, 2, 3, 4


def build_curve(cfg):
    c = cfg.curve
    if c.csv:
        return BoundaryCurve.from_csv(c.csv)
    spec = CurveSpec(c.family, c.long_axis, c.short_axis, c.spacing, c.circumference or None)
    return sample_curve(spec, cfg.physics.wavelength)


def parse_deformation(text):
    text = text.strip()
    if not text or text.lower() == "none":
        return NO_DEFORMATION
    harmonics = []
    for item in text.split(","):
        m, a, ph = (float(v) for v in item.split(":"))
        harmonics.append((int(m), a, ph))
    return Deformation(tuple(harmonics))


def parse_points(text):
    pts = [tuple(float(v) for v in item.split(":")) for item in text.replace(";", ",").split(",") if item.strip()]
    return np.array(pts, dtype=float).reshape(-1, 2)


def build_phantom(cfg):
    p = cfg.phantom
    c0 = cfg.physics.c0
    if p.kind == "shepp_logan":
        return make_shepp_logan_modified(p.pitch, parse_deformation(p.deformation), p.half_size, c0, p.contrast,
                                         supersample=p.supersample)
    if p.kind == "resolution":
        return make_resolution_phantom(c0, p.c_scatter, p.pitch, p.offset)
    pts = parse_points(p.points) if p.kind == "points" else np.zeros((0, 2))
    reach = (np.abs(pts).max() if len(pts) else 0.0) + 4 * p.pitch
    n = int(np.ceil(reach / p.pitch))
    origin = np.array([-n * p.pitch, -n * p.pitch])
    speed = np.full((2 * n + 1, 2 * n + 1), c0)
    for x, z in pts:
        ix, iz = np.rint((np.array([x, z]) - origin) / p.pitch).astype(int)
        speed[iz, ix] = p.c_scatter
    return Phantom(speed, origin, p.pitch, c0)


def recon_params(cfg):
    k = cfg.kernel
    return ReconstructionParams(
        extent=cfg.plan.extent, pixels=cfg.plan.pixels, rotations=cfg.plan.rotations,
        separation=cfg.virtual.separation, elements=cfg.virtual.elements, span=cfg.virtual.span,
        cutoff_fraction=cfg.filter.cutoff_fraction, order=cfg.filter.order, kernel=k.method,
        strict=k.strict, n_interior=k.n_interior, seed=cfg.run.seed, gmres_tol=k.tol,
        gmres_restart=k.restart, gmres_maxit=k.maxit,
        fill=cfg.plan.fill, edge=cfg.plan.edge, aperture=cfg.plan.aperture)


def _out(cfg, name):
    os.makedirs(cfg.output.dir, exist_ok=True)
    return os.path.join(cfg.output.dir, name)


def _stem(path):
    return os.path.splitext(path)[0]


def write_image(path, image, meta):
    meta = dict(meta, pitch=image.pitch, origin=image.origin, quantity="modulus")
    _io.write_grid(path, image.magnitude, meta)
    _io.write_pgm(_stem(path) + ".pgm", image.magnitude)


def cmd_phantom(cfg, args):
    ph = build_phantom(cfg)
    path = _out(cfg, cfg.output.phantom)
    _io.write_grid(path, ph.speed, {"kind": cfg.phantom.kind, "pitch": ph.pitch, "origin": ph.origin, "c0": ph.c0})
    _io.write_pgm(_stem(path) + ".pgm", ph.speed)
    print(f"phantom {ph.shape[0]}x{ph.shape[1]} -> {path}")


def cmd_simulate(cfg, args):
    curve = build_curve(cfg)
    q = phantom_to_q(build_phantom(cfg), cfg.physics.k0)
    meas = simulate_measurements(q, curve, cfg.physics.k0, threads=cfg.run.threads,
                                 noise=cfg.run.noise, rng=cfg.run.seed)
    path = _out(cfg, cfg.output.measurements)
    meas.save(path)
    curve.to_csv(_stem(path) + "_curve.csv")
    print(f"measurements {meas.shape[0]}x{meas.shape[1]} -> {path}")


def _load_measurements(cfg, args):
    path = args.measurements or os.path.join(cfg.output.dir, cfg.output.measurements)
    meas = MeasurementMatrix.load(path)
    curve = build_curve(cfg)
    if meas.shape != (curve.n, curve.n):
        raise GeometryError(f"{path} has shape {meas.shape} but the configured curve has {curve.n} samples")
    if not np.isclose(meas.k0, cfg.physics.k0, rtol=1e-12):
        raise GeometryError(f"{path} was simulated at k0={meas.k0}, config gives {cfg.physics.k0}")
    return meas, curve


def cmd_reconstruct(cfg, args):
    meas, curve = _load_measurements(cfg, args)
    params = recon_params(cfg)
    t = time.perf_counter()
    rec = reconstruct(meas, curve, cfg.physics.k0, params)
    total = time.perf_counter() - t
    img_path = _out(cfg, cfg.output.image)
    write_image(img_path, rec.image, {"rotations": len(rec.plan.rotations)})
    rec.qgrid.save(_out(cfg, cfg.output.qgrid))
    lines = [
        f"rotations = {len(rec.plan.rotations)}",
        f"rotation_angles = {' '.join(repr(float(a)) for a in rec.plan.rotations)}",
        f"targets = {len(rec.plan.flat)}",
        f"candidates = {rec.plan.candidates}",
        f"fill_fraction = {rec.plan.fill_fraction:.6f}",
        f"kernel = {params.kernel}",
        f"grid = {rec.plan.shape[0]}x{rec.plan.shape[1]}",
    ]
    lines += [f"time_{k}_s = {v:.3f}" for k, v in rec.timings.items()]
    lines.append(f"time_total_s = {total:.3f}")
    if rec.kernel_stats:
        lines.append(f"gmres_max_iterations = {max(s.iterations for s in rec.kernel_stats)}")
        lines.append(f"gmres_max_residual = {max(s.residual for s in rec.kernel_stats):.3e}")
    with open(_out(cfg, cfg.output.report), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    print("\n".join(lines))


def cmd_benchmark(cfg, args):
    meas, curve = _load_measurements(cfg, args)
    k0 = cfg.physics.k0
    params = recon_params(cfg)
    plan_ = make_plan(params, k0)
    vads, _ = virtual_arrays(meas, curve, k0, params, plan_)
    images, times = {}, {}
    for name, fill in (("algebraic", assemble), ("fft_map_interp", fft_map_interp)):
        t = time.perf_counter()
        qg = fill(plan_, vads)
        times[name] = time.perf_counter() - t
        images[name] = invert_to_image(butterworth(qg, params.cutoff_fraction * k0, params.order)).magnitude
    ncc = normalized_cross_correlation(images["algebraic"], images["fft_map_interp"])
    path = _out(cfg, cfg.output.benchmark)
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["path", "rotations", "targets", "wall_ms", "ncc_vs_algebraic"])
        for name in images:
            w.writerow([name, len(plan_.rotations), len(plan_.flat), f"{1e3 * times[name]:.1f}",
                        f"{normalized_cross_correlation(images['algebraic'], images[name]):.6f}"])
    ratio = times["fft_map_interp"] / times["algebraic"]
    print(f"ncc = {ncc:.6f}")
    print(f"time ratio fft_map_interp / algebraic = {ratio:.2f}")


def cmd_convert(cfg, args):
    src, dst = args.input, args.output
    if src.endswith(".cdt"):
        data, k0, kind, _ = _io.read_matrix(src)
        if not dst.endswith(".csv"):
            raise FormatError("measurement files convert to .csv")
        with open(dst, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["receiver", "source", "re", "im"])
            for (j, i), v in np.ndenumerate(data):
                w.writerow([j, i, repr(float(v.real)), repr(float(v.imag))])
    else:
        grid, _ = _io.read_grid(src)
        if not dst.endswith(".pgm"):
            raise FormatError("raw grids convert to .pgm")
        _io.write_pgm(dst, grid)
    print(f"{src} -> {dst}")


COMMANDS = {
    "phantom": cmd_phantom,
    "simulate": cmd_simulate,
    "reconstruct": cmd_reconstruct,
    "benchmark": cmd_benchmark,
    "convert": cmd_convert,
}


def _common(default):
    # options may appear before or after the subcommand; the subcommand copy
    # must not overwrite a value given earlier with its own default
    common = argparse.ArgumentParser(add_help=False)
    common.add_argument("--config", default=default, help="INI experiment configuration")
    common.add_argument("--seed", type=int, default=default, help="override run.seed")
    common.add_argument("--threads", type=int, default=default, help="override run.threads")
    common.add_argument("--out", default=default, help="override output.dir")
    return common


def build_parser():
    parser = argparse.ArgumentParser(prog="curvedt", description=__doc__.splitlines()[0], parents=[_common(None)])
    common = _common(argparse.SUPPRESS)
    sub = parser.add_subparsers(dest="command", required=True)
    sub.add_parser("phantom", parents=[common], help="write the configured phantom")
    sub.add_parser("simulate", parents=[common], help="simulate measurements on the curve")
    for name in ("reconstruct", "benchmark"):
        p = sub.add_parser(name, parents=[common], help=f"{name} from a measurement file")
        p.add_argument("measurements", nargs="?", help="measurement file (default: from config)")
    p = sub.add_parser("convert", parents=[common], help="convert .cdt to .csv or raw .f64 to .pgm")
    p.add_argument("input")
    p.add_argument("output")
    return parser


def main(argv=None):
    args = build_parser().parse_args(argv)
    try:
        cfg = _config.load(args.config)
        if args.seed is not None:
            cfg.run = replace(cfg.run, seed=args.seed)
        if args.threads is not None:
            cfg.run = replace(cfg.run, threads=args.threads)
        if args.out is not None:
            cfg.output = replace(cfg.output, dir=args.out)
        COMMANDS[args.command](cfg, args)
    except (_config.ConfigError, GeometryError) as err:
        print(f"config error: {err}", file=sys.stderr)
        return EXIT_CONFIG
    except (ConvergenceError, ValidityError, DomainError) as err:
        print(f"numerical error: {err}", file=sys.stderr)
        return EXIT_NUMERIC
    except (OSError, FormatError) as err:
        print(f"I/O error: {err}", file=sys.stderr)
        return EXIT_IO
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
