"""Command-line entry point.

Exit codes: 0 success, 1 self-test failure, 2 configuration error,
3 numerical failure during a run.
"""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from contextlib import nullcontext
from pathlib import Path

import numpy as np

from . import __version__
from .config import SimConfig, load_config, parse_config, serialize_config
from .errors import BadConfig, BiasObsError, EnvelopeExit, NonfiniteField
from .experiment import build_scene, run_experiment, simulate, start_pose
from .io import emit_plots, write_csv, write_pfm, write_pgm

log = logging.getLogger("biasobs")

EXIT_OK, EXIT_FAIL, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3


def _thread_limit():
    n = os.environ.get("BIAS_OBS_THREADS")
    if not n:
        return nullcontext()
    from threadpoolctl import threadpool_limits

    return threadpool_limits(limits=max(1, int(n)))


def _load(args):
    if args.config:
        cfg = load_config(args.config)
    else:
        cfg = SimConfig()
    if args.set:
        text = serialize_config(cfg) + "\n" + "\n".join(args.set)
        cfg = parse_config(text)
    return cfg


def _out_dir(args, cfg):
    out = Path(args.out or cfg.run.out)
    out.mkdir(parents=True, exist_ok=True)
    return out


def cmd_render(args, cfg):
    """Write measured brightness (PGM) and depth (PFM) frames."""
    out = _out_dir(args, cfg)
    every = max(1, args.every)
    n = 0
    for k, (frame, _) in enumerate(simulate(cfg)):
        if args.frames is not None and k >= args.frames:
            break
        if k % every:
            continue
        write_pgm(out / f"y_{k:05d}.pgm", frame.y)
        write_pfm(out / f"D_{k:05d}.pfm", frame.D)
        n += 1
    log.info("wrote %d frame pairs to %s", n, out)
    return EXIT_OK


def cmd_simulate(args, cfg):
    """Ground-truth pipeline without the observer: twist streams and field statistics."""
    out = _out_dir(args, cfg)
    cols = "t v_x v_y v_z w_x w_y w_z vm_x vm_y vm_z wm_x wm_y wm_z y_mean D_mean D_min".split()
    rows = []
    for k, (frame, truth) in enumerate(simulate(cfg)):
        if args.frames is not None and k >= args.frames:
            break
        tw, m = truth.twist, frame.twist_meas
        rows.append([frame.t, *tw.v, *tw.w, *m.v, *m.w, float(np.mean(frame.y)), float(np.mean(frame.D)), float(np.min(frame.D))])
    write_csv(out / "ground_truth.csv", cols, rows)
    (out / "config.cfg").write_text(serialize_config(cfg))
    log.info("simulated %d frames", len(rows))
    return EXIT_OK


def cmd_observe(args, cfg):
    """Run the bias observer and write diagnostics, summary and plots."""
    out = _out_dir(args, cfg)
    (out / "config.cfg").write_text(serialize_config(cfg))
    report = run_experiment(cfg, out)
    emit_plots(report.csv_path, out)
    (out / "summary.json").write_text(json.dumps(report.summary, indent=2) + "\n")
    s = report.summary
    print(f"final-window mean |p_v error| = {s['final_mean_norm_pv']:.4g} m/s ({100 * s['rel_pv']:.1f}% of bias)")
    print(f"final-window mean |p_w error| = {s['final_mean_norm_pw']:.4g} rad/s ({100 * s['rel_pw']:.1f}% of bias)")
    print(f"wrote {report.csv_path}")
    return EXIT_OK


def cmd_observability(args, cfg):
    """Search for stationary motions of a full-sphere render."""
    from .observability import (
        coarse_search,
        find_stationary_motion,
        orthogonality_identity_check,
    )
    from .scene import render
    from .sphere import LatLongGrid

    out = _out_dir(args, cfg)
    n = cfg.run.sphere_n_theta
    grid = LatLongGrid(n, 2 * n)
    scene = build_scene(cfg)
    y, D = render(scene, start_pose(scene, cfg), grid)
    weights = (cfg.gains.lambda_y, cfg.gains.lambda_D)
    cand = find_stationary_motion(y, D, grid, weights=weights)
    d_ref = float(np.sum(D * grid.weights) / np.sum(grid.weights))
    _, (xs, table) = coarse_search(y, D, grid, d_ref, weights=weights, refine=False)
    write_csv(out / "observability_residuals.csv", "pw_x pw_y pw_z pv_x pv_y pv_z residual_rms".split(),
              [[*x[:3], *(d_ref * x[3:]), r] for x, r in zip(xs, table)])
    orth = orthogonality_identity_check(D, grid, cand.p_w, cand.p_v)
    lines = [
        f"scene: {cfg.scene.type}",
        f"grid: {2 * n}x{n} full sphere, d_ref = {d_ref:.4g} m",
        f"best candidate p_w = {np.round(cand.p_w, 6).tolist()} rad/s, p_v = {np.round(cand.p_v, 6).tolist()} m/s",
        f"minimized residual rms = {cand.residual_rms:.6g}",
        f"coarse-grid minimum = {float(np.min(table)):.6g}",
        f"degenerate minimizer: {cand.degenerate}",
        f"orthogonality measure = {orth:.3g}",
    ]
    (out / "observability_report.txt").write_text("\n".join(lines) + "\n")
    print("\n".join(lines))
    return EXIT_OK


def cmd_selftest(args, cfg):
    """Run quick internal consistency checks."""
    from .selftest import run_selftest

    return EXIT_FAIL if run_selftest() else EXIT_OK


COMMANDS = {
    "render": cmd_render,
    "simulate": cmd_simulate,
    "observe": cmd_observe,
    "observability": cmd_observability,
    "selftest": cmd_selftest,
}


def build_parser():
    p = argparse.ArgumentParser(prog="biasobs", description="Velocity-bias observer simulation toolkit.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True)
    for name, fn in COMMANDS.items():
        sp = sub.add_parser(name, help=(fn.__doc__ or name).strip().splitlines()[0] if fn.__doc__ else name)
        sp.add_argument("config", nargs="?", help="config file (defaults are used when omitted)")
        sp.add_argument("--out", help="output directory (overrides run.out)")
        sp.add_argument("--set", action="append", metavar="KEY=VALUE", help="override a config entry")
        if name in ("render", "simulate"):
            sp.add_argument("--frames", type=int, help="stop after this many frames")
        if name == "render":
            sp.add_argument("--every", type=int, default=1, help="write every n-th frame")
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        cfg = _load(args)
    except BadConfig as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    try:
        with _thread_limit():
            return COMMANDS[args.command](args, cfg)
    except (NonfiniteField, FloatingPointError, EnvelopeExit) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC
    except BadConfig as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except BiasObsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
