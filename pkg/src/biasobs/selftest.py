"""Fast sanity checks with exact expected values, run by ``biasobs selftest``."""
from __future__ import annotations

import tempfile
import time
from pathlib import Path

import numpy as np

from . import cap as capmod
from . import observer as obs
from .config import SimConfig, parse_config, serialize_config
from .errors import BadGains, MissingCSV
from .io import emit_plots, read_csv, read_pfm, read_pgm, write_csv, write_pfm, write_pgm
from .kinematics import look_pose, qmul, quat_from_axis_angle, quat_to_matrix
from .observability import orthogonality_identity_check, stationarity_residual
from .scene import make_room_scene, make_sphere_scene, render
from .sphere import LatLongGrid, PinholeGrid, grad_dot, laplacian_dot

CHECKS = []


def check(fn):
    CHECKS.append(fn)
    return fn


@check
def geometry_identities():
    rng = np.random.default_rng(1)
    eta = rng.normal(size=(200, 3))
    eta /= np.linalg.norm(eta, axis=1, keepdims=True)
    P = rng.normal(size=(200, 3))
    g = grad_dot(eta, P)
    assert np.max(np.abs(np.sum(g * eta, axis=1))) < 1e-12
    assert np.allclose(laplacian_dot(eta, P), -2 * np.sum(eta * P, axis=1), atol=1e-12)


@check
def quaternion_roundtrip():
    q = quat_from_axis_angle((0.0, 0.0, 1.0), np.pi / 2)
    R = quat_to_matrix(qmul(q, q))
    assert np.allclose(R @ np.array([1.0, 0.0, 0.0]), [-1.0, 0.0, 0.0], atol=1e-12)


@check
def null_motion_is_stationary():
    grid = LatLongGrid(16, 32)
    scene = make_room_scene()
    y, D = render(scene, look_pose(scene.surface.center, (1.0, 0.0, 0.0)), grid)
    r_y, r_D = stationarity_residual(y, D, grid, np.zeros(3), np.zeros(3))
    assert np.all(r_y == 0) and np.all(r_D == 0)


@check
def constant_sphere_rotation_is_stationary():
    grid = LatLongGrid(16, 32)
    scene = make_sphere_scene(2.0)
    y, D = render(scene, look_pose(scene.surface.center, (1.0, 0.0, 0.0)), grid)
    r_y, r_D = stationarity_residual(y, D, grid, np.array([0.3, -0.2, 0.1]), np.zeros(3))
    assert np.max(np.abs(r_y)) < 1e-9 and np.max(np.abs(r_D)) < 1e-9


@check
def orthogonality_degenerate_inputs():
    grid = LatLongGrid(8, 16)
    D = np.full(grid.shape, 2.0)
    assert orthogonality_identity_check(D, grid, np.zeros(3), np.ones(3)) == 0.0
    assert orthogonality_identity_check(D, grid, np.ones(3), np.zeros(3)) == 0.0
    assert orthogonality_identity_check(D, grid, (1.0, 0.0, 0.0), (0.0, 1.0, 0.0)) == 0.0


@check
def observer_fixed_point():
    grid = PinholeGrid(24, 18, np.radians(50), np.radians(40))
    scene = make_room_scene()
    y, D = render(scene, look_pose(scene.surface.center, (1.0, 0.0, 0.0)), grid)
    gains = obs.ObserverGains()
    win = capmod.build_window(grid)
    st = capmod.initial_cap_state(y, D, win)
    new, _ = capmod.observer_step_cap(st, y, D, win, np.zeros(3), np.zeros(3), gains, 0.01, grid)
    assert np.all(new.p_w_hat == 0) and np.all(new.p_v_hat == 0)
    st = obs.initial_state(y, D)
    new, _ = obs.observer_step(st, y, D, np.zeros(3), np.zeros(3), gains, 0.01, grid)
    assert np.all(new.p_w_hat == 0) and np.all(new.p_v_hat == 0)


@check
def config_roundtrip():
    cfg = SimConfig()
    again = parse_config(serialize_config(cfg))
    assert serialize_config(again) == serialize_config(cfg)


@check
def file_formats_roundtrip():
    with tempfile.TemporaryDirectory() as d:
        d = Path(d)
        y = np.arange(1.0, 13.0).reshape(3, 4)
        write_pgm(d / "a.pgm", y)
        assert np.array_equal(read_pgm(d / "a.pgm"), y)
        f = np.linspace(-1, 1, 12).reshape(3, 4).astype(np.float32)
        write_pfm(d / "a.pfm", f)
        assert np.array_equal(read_pfm(d / "a.pfm"), f)
        write_csv(d / "a.csv", ["t", "x"], [[0.0, 1.5], [1.0, 2.5]])
        cols, rows = read_csv(d / "a.csv")
        assert cols == ["t", "x"] and rows.shape == (2, 2)
        try:
            emit_plots(d / "missing.csv")
        except MissingCSV:
            pass
        else:
            raise AssertionError("missing CSV not reported")


@check
def render_is_deterministic():
    grid = PinholeGrid(16, 12, np.radians(50), np.radians(40))
    scene = make_room_scene()
    pose = look_pose(scene.surface.center, (1.0, 0.2, 0.0))
    a = render(scene, pose, grid)
    b = render(scene, pose, grid)
    assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])


@check
def gains_are_validated():
    try:
        obs.ObserverGains(k_y=0.0)
    except BadGains:
        return
    raise AssertionError("zero gain accepted")


def run_selftest(out=print):
    """Run every check; returns the list of failed check names."""
    failed = []
    t0 = time.perf_counter()
    for fn in CHECKS:
        try:
            fn()
            out(f"PASS {fn.__name__}")
        except Exception as exc:  # report and keep going
            failed.append(fn.__name__)
            out(f"FAIL {fn.__name__}: {type(exc).__name__}: {exc}")
    out(f"{len(CHECKS) - len(failed)}/{len(CHECKS)} checks passed in {time.perf_counter() - t0:.1f} s")
    return failed
