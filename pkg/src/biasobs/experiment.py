"""End-to-end simulation: render, corrupt, observe, record diagnostics."""
from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import cap as capmod
from . import observer as obs
from .config import SimConfig, trajectory_terms
from .io import read_csv, write_csv, write_pfm
from .kinematics import (
    BiasPair,
    NoiseSpec,
    TrajectoryProfile,
    look_pose,
    measured_twist,
    sample_trajectory,
    simulate_poses,
    stream_rng,
)
from .scene import (
    apply_noise,
    make_axisymmetric_scene,
    make_room_scene,
    make_sphere_scene,
    ray_cast,
    sphere_texture,
    spheroid_profile,
)
from .sphere import LatLongGrid, PinholeGrid, chart_gradient

log = logging.getLogger(__name__)

CSV_COLUMNS = (
    "t pvh_x pvh_y pvh_z pwh_x pwh_y pwh_z pve_x pve_y pve_z pwe_x pwe_y pwe_z V f boundary L cfl".split()
)
FINAL_FRACTION = 0.25


@dataclass
class Frame:
    t: float
    y: np.ndarray
    D: np.ndarray
    twist_meas: object


@dataclass
class Truth:
    t: float
    y: np.ndarray
    D: np.ndarray
    twist: object
    patch: np.ndarray = None


@dataclass
class RunReport:
    csv_path: object
    summary: dict
    rows: np.ndarray = field(repr=False, default=None)


def build_scene(cfg: SimConfig):
    s = cfg.scene
    if s.type == "room":
        return make_room_scene(s.dims, s.amplitude, s.freq_h, s.freq_v)
    if s.type == "sphere":
        return make_sphere_scene(s.radius, sphere_texture(s.amplitude, s.freq_h, s.freq_v))
    prof, hr = spheroid_profile(s.radius, 1.5 * s.radius)
    tex = lambda rho, h: 128.5 + s.amplitude * np.sin(2 * np.pi * s.freq_v * h)
    return make_axisymmetric_scene((0.0, 0.0, 1.0), prof, tex, hr)


def build_grid(cfg: SimConfig):
    if cfg.run.observer == "sphere":
        n = cfg.run.sphere_n_theta
        return LatLongGrid(n, 2 * n)
    g = cfg.grid
    return PinholeGrid(g.width, g.height, np.radians(g.fov_h), np.radians(g.fov_v))


def build_profile(cfg: SimConfig):
    return TrajectoryProfile(trajectory_terms(cfg), cfg.trajectory.duration, 1.0 / cfg.frame_dt)


def start_pose(scene, cfg=None):
    """Initial camera pose: scene center plus the configured offset, z up."""
    if cfg is None:
        return look_pose(scene.surface.center, (1.0, 0.0, 0.0))
    return look_pose(scene.surface.center + np.asarray(cfg.trajectory.start), cfg.trajectory.look)


def bias_of(cfg):
    return BiasPair(cfg.bias.p_v, cfg.bias.p_w)


def noise_of(cfg):
    n = cfg.noise
    return NoiseSpec(n.sigma_y, n.sigma_D, n.sigma_v, n.sigma_w, n.seed)


def simulate(cfg: SimConfig, bias=None):
    """Yield ``(Frame, Truth)`` pairs: measured streams and ground truth.

    Poses come from RK4 integration of the trajectory (4 substeps per frame).
    Noise draws are keyed by ``(seed, stream, frame)`` so the measurement
    stream is reproducible and independent of everything else.
    """
    scene = build_scene(cfg)
    grid = build_grid(cfg)
    profile = build_profile(cfg)
    bias = bias_of(cfg) if bias is None else bias
    noise = noise_of(cfg)
    times = np.arange(cfg.n_frames) * cfg.frame_dt
    poses = simulate_poses(profile, start_pose(scene, cfg), times, substeps=4, envelope=scene.envelope)
    for k, (t, pose) in enumerate(zip(times, poses)):
        world = grid.dirs @ pose.R.T
        hit = ray_cast(scene, pose.C, world)
        y_true, D_true = apply_noise(hit.brightness, hit.distance)
        y, D = apply_noise(hit.brightness, hit.distance, noise, stream_rng(noise.seed, 0, k) if noise.enabled else None)
        tw = sample_trajectory(profile, t)
        meas = measured_twist(tw, bias, noise, stream_rng(noise.seed, 1, k) if noise.enabled else None)
        yield Frame(float(t), y, D, meas), Truth(float(t), y_true, D_true, tw, hit.patch)


def _lerp(a, b, s):
    return a + s * (b - a)


class _Runner:
    """Observer bookkeeping shared by the cap and full-sphere variants."""

    def __init__(self, cfg, grid, gains):
        self.cfg, self.grid, self.gains = cfg, grid, gains
        self.cap = cfg.run.observer == "cap"
        self.window = capmod.build_window(grid, cfg.window.k1_margin, cfg.window.k2_margin) if self.cap else None
        self.state = None

    def init(self, frame):
        if self.cap:
            self.state = capmod.initial_cap_state(frame.y, frame.D, self.window, t=frame.t)
        else:
            self.state = obs.initial_state(frame.y, frame.D, t=frame.t)

    def substeps(self, frame, dt):
        st = self.state
        tw = frame.twist_meas
        if self.cap:
            return obs.substep_count(
                st, frame.D, tw.w, tw.v, dt, self.grid, self.cfg.run.max_cfl, self.gains, self.window.phi,
                (st.X_hat, st.L_hat), self.cfg.run.scheme,
            )
        return obs.substep_count(
            st, frame.D, tw.w, tw.v, dt, self.grid, self.cfg.run.max_cfl, self.gains, scheme=self.cfg.run.scheme
        )

    def step(self, f0, f1):
        """Advance from frame ``f0`` to ``f1``; measurements are interpolated
        linearly in time across the substeps."""
        dt = f1.t - f0.t
        w0, w1 = f0.twist_meas.w, f1.twist_meas.w
        v0, v1 = f0.twist_meas.v, f1.twist_meas.v
        n = max(self.substeps(f0, dt), self.substeps(f1, dt))
        h = dt / n
        cfl_max = 0.0
        for j in range(n):
            s = (j + 0.5) / n
            args = (_lerp(f0.y, f1.y, s), _lerp(f0.D, f1.D, s))
            wm, vm = _lerp(w0, w1, s), _lerp(v0, v1, s)
            if self.cap:
                self.state, cfl = capmod.observer_step_cap(
                    self.state, *args, self.window, wm, vm, self.gains, h, self.grid, scheme=self.cfg.run.scheme
                )
            else:
                self.state, cfl = obs.observer_step(
                    self.state, *args, wm, vm, self.gains, h, self.grid, scheme=self.cfg.run.scheme
                )
            cfl_max = max(cfl_max, cfl)
        self.last_substeps = n
        self.total_substeps = getattr(self, "total_substeps", 0) + n
        return cfl_max

    def diagnostics(self, truth, bias):
        grad_D = chart_gradient(truth.D, self.grid)
        divW = obs.divergence_W(self.grid.dirs, truth.D, grad_D, truth.twist.v)
        if self.cap:
            lv, boundary = capmod.cap_lyapunov(
                self.state, truth.y, truth.D, self.window, bias, self.gains, truth.twist, self.grid
            )
            L_local = float(np.max(np.abs(divW[self.window.support])))
        else:
            L_local = float(np.max(np.abs(divW)))
            lv = obs.lyapunov_value(self.state, truth.y, truth.D, bias, self.gains, self.grid, L_local)
            boundary = 0.0
        return lv, boundary, L_local


def run_observer(cfg: SimConfig, stream, bias=None, out_dir=None):
    """Run the observer over ``(Frame, Truth)`` pairs and return the diagnostic rows."""
    import warnings

    bias = bias_of(cfg) if bias is None else bias
    grid = build_grid(cfg)
    g = cfg.gains
    gains = obs.ObserverGains(g.k_y, g.k_D, g.k_v, g.k_w, g.lambda_y, g.lambda_D)
    log.info("gains %s", gains)
    runner = _Runner(cfg, grid, gains)
    rows = []
    L_run = 0.0
    prev = None
    cfl = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for k, (frame, truth) in enumerate(stream):
            if prev is None:
                runner.init(frame)
            else:
                try:
                    cfl = runner.step(prev, frame)
                except FloatingPointError:
                    log.error("non-finite observer state at frame %d (t=%.4f)", k, frame.t)
                    raise
            prev = frame
            lv, boundary, L_local = runner.diagnostics(truth, bias)
            L_run = max(L_run, L_local)
            st = runner.state
            pve = st.p_v_hat - bias.p_v
            pwe = st.p_w_hat - bias.p_w
            rows.append([frame.t, *st.p_v_hat, *st.p_w_hat, *pve, *pwe, lv.V, lv.f, boundary, L_run, cfl])
            if out_dir is not None and cfg.run.pfm_every and k % cfg.run.pfm_every == 0:
                if runner.cap:
                    write_pfm(Path(out_dir) / f"xerr_{k:05d}.pfm", st.X_hat - runner.window.phi * truth.y)
                    write_pfm(Path(out_dir) / f"lerr_{k:05d}.pfm", st.L_hat - runner.window.phi * truth.D)
    return np.array(rows), runner


def summarize(rows, bias, gains_cfg=None, wall=None):
    """Final-window statistics, recomputable from the CSV rows alone."""
    rows = np.asarray(rows)
    if rows.ndim != 2 or len(rows) == 0:
        raise ValueError("no rows to summarize")
    n0 = int(np.floor(len(rows) * (1 - FINAL_FRACTION)))
    tail = rows[n0:]
    pve, pwe = tail[:, 7:10], tail[:, 10:13]
    V = rows[:, 13]
    L = float(rows[-1, 16])
    out = {
        "final_mean_abs_pv": np.mean(np.abs(pve), axis=0).tolist(),
        "final_mean_abs_pw": np.mean(np.abs(pwe), axis=0).tolist(),
        "final_mean_norm_pv": float(np.mean(np.linalg.norm(pve, axis=1))),
        "final_mean_norm_pw": float(np.mean(np.linalg.norm(pwe, axis=1))),
        "V_initial": float(V[0]),
        "V_final": float(V[-1]),
        "V_max": float(np.max(V)),
        "L": L,
        "max_cfl": float(np.max(rows[:, 17])),
    }
    bv, bw = np.linalg.norm(bias.p_v), np.linalg.norm(bias.p_w)
    out["rel_pv"] = out["final_mean_norm_pv"] / bv if bv > 0 else float("nan")
    out["rel_pw"] = out["final_mean_norm_pw"] / bw if bw > 0 else float("nan")
    if gains_cfg is not None:
        out["gain_margin"] = min(gains_cfg.k_y, gains_cfg.k_D) - L / 2
    if wall is not None:
        out["wall_clock_s"] = wall
    return out


def run_experiment(cfg: SimConfig, out_dir=None, bias=None):
    """Simulate, observe and (optionally) write ``diagnostics.csv``."""
    t0 = time.perf_counter()
    bias = bias_of(cfg) if bias is None else bias
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
    rows, _ = run_observer(cfg, simulate(cfg, bias), bias, out_dir)
    csv_path = None
    if out_dir is not None:
        csv_path = Path(out_dir) / "diagnostics.csv"
        write_csv(csv_path, CSV_COLUMNS, rows)
    summary = summarize(rows, bias, cfg.gains, time.perf_counter() - t0)
    return RunReport(csv_path, summary, rows)


def summary_from_csv(path, bias):
    _, rows = read_csv(path)
    return summarize(rows, bias)
