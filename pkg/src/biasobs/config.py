"""Flat ``section.key = value`` configuration files.

Lines starting with ``#`` are comments.  Vectors are comma separated;
trajectory channels hold ``;``-separated ``amplitude frequency phase``
triples, e.g. ``trajectory.w_z = 0.3 0.13 1.5708``.
"""
from __future__ import annotations

import dataclasses
from dataclasses import dataclass, field, fields
from pathlib import Path

import numpy as np

from .errors import BadConfig
from .kinematics import CHANNELS

MAX_FRAMES = 10**6


@dataclass
class SceneCfg:
    type: str = "room"
    dims: tuple = (4.0, 3.0, 2.5)
    radius: float = 2.0
    amplitude: float = 100.0
    freq_h: float = 0.5
    freq_v: float = 0.5


@dataclass
class GridCfg:
    width: int = 160
    height: int = 120
    fov_h: float = 50.0
    fov_v: float = 40.0
    rate: float = 42.0


@dataclass
class TrajectoryCfg:
    duration: float = 12.0
    start: tuple = (0.0, 0.0, 0.0)  # offset of the optical center from the scene center (m)
    look: tuple = (1.0, 0.0, 0.0)  # initial optical axis in world coordinates
    v_x: tuple = ((0.4, 0.15, np.pi / 2),)
    v_y: tuple = ((0.3, 0.2, np.pi / 2),)
    v_z: tuple = ((0.25, 0.25, np.pi / 2),)
    w_x: tuple = ((0.3, 0.2, np.pi / 2),)
    w_y: tuple = ((0.25, 0.17, np.pi / 2),)
    w_z: tuple = ((0.3, 0.13, np.pi / 2),)


@dataclass
class BiasCfg:
    p_v: tuple = (2.5, 0.0, 0.0)
    p_w: tuple = (0.05, 0.0, 0.0)


@dataclass
class NoiseCfg:
    sigma_y: float = 0.0
    sigma_D: float = 0.0
    sigma_v: float = 0.0
    sigma_w: float = 0.0
    seed: int = 0


@dataclass
class GainsCfg:
    k_y: float = 2.0
    k_D: float = 2.0
    k_v: float = 1e-2
    k_w: float = 1e-5
    lambda_y: float = 1.0
    lambda_D: float = 5000.0


@dataclass
class WindowCfg:
    # fractions of the frame size when < 1, pixels otherwise
    k1_margin: float = 0.16
    k2_margin: float = 0.08


@dataclass
class RunCfg:
    observer: str = "cap"
    dt: float = 0.0  # 0 means 1/rate
    out: str = "out"
    max_cfl: float = 0.5
    scheme: str = "upwind"
    sphere_n_theta: int = 64
    pfm_every: int = 0


@dataclass
class SimConfig:
    scene: SceneCfg = field(default_factory=SceneCfg)
    grid: GridCfg = field(default_factory=GridCfg)
    trajectory: TrajectoryCfg = field(default_factory=TrajectoryCfg)
    bias: BiasCfg = field(default_factory=BiasCfg)
    noise: NoiseCfg = field(default_factory=NoiseCfg)
    gains: GainsCfg = field(default_factory=GainsCfg)
    window: WindowCfg = field(default_factory=WindowCfg)
    run: RunCfg = field(default_factory=RunCfg)

    @property
    def frame_dt(self):
        return self.run.dt if self.run.dt > 0 else 1.0 / self.grid.rate

    @property
    def n_frames(self):
        return int(round(self.trajectory.duration / self.frame_dt)) + 1

    def validate(self):
        g = self.grid
        if g.width < 4 or g.height < 4:
            raise BadConfig("grid must be at least 4x4")
        if not (0 < g.fov_h < 180 and 0 < g.fov_v < 180) or g.rate <= 0:
            raise BadConfig("bad field of view or rate")
        if np.linalg.norm(self.trajectory.look) == 0:
            raise BadConfig("trajectory.look must be a nonzero vector")
        if self.trajectory.duration <= 0 or self.run.dt < 0:
            raise BadConfig("duration must be positive and dt non-negative")
        if self.n_frames > MAX_FRAMES:
            raise BadConfig(f"run has more than {MAX_FRAMES} frames")
        if self.scene.type not in ("room", "sphere", "spheroid"):
            raise BadConfig(f"unknown scene type {self.scene.type!r}")
        if self.run.observer not in ("cap", "sphere"):
            raise BadConfig(f"unknown observer {self.run.observer!r}")
        n = self.noise
        if min(n.sigma_y, n.sigma_D, n.sigma_v, n.sigma_w) < 0:
            raise BadConfig("noise levels must be non-negative")
        for f_ in fields(GainsCfg):
            if getattr(self.gains, f_.name) <= 0:
                raise BadConfig(f"gains.{f_.name} must be positive")
        if self.run.scheme not in ("upwind", "upwind3", "sobel", "central"):
            raise BadConfig(f"unknown transport scheme {self.run.scheme!r}")
        if self.run.max_cfl <= 0:
            raise BadConfig("run.max_cfl must be positive")
        return self


def _format_value(v):
    if isinstance(v, tuple) and v and isinstance(v[0], tuple):
        return "; ".join(" ".join(repr(float(x)) for x in term) for term in v)
    if isinstance(v, tuple):
        return ", ".join(repr(float(x)) for x in v)
    if isinstance(v, float):
        return repr(v)
    return str(v)


def _parse_value(text, default):
    try:
        if isinstance(default, tuple) and (not default or isinstance(default[0], tuple)):
            terms = []
            for chunk in text.split(";"):
                if chunk.strip():
                    parts = tuple(float(x) for x in chunk.split())
                    if len(parts) != 3:
                        raise BadConfig(f"trajectory term needs 3 numbers, got {chunk!r}")
                    terms.append(parts)
            return tuple(terms)
        if isinstance(default, tuple):
            vals = tuple(float(x) for x in text.split(","))
            if len(vals) != len(default):
                raise BadConfig(f"expected {len(default)} components, got {text!r}")
            return vals
        if isinstance(default, bool):
            return text.lower() in ("1", "true", "yes")
        if isinstance(default, int):
            return int(text)
        if isinstance(default, float):
            return float(text)
        return text
    except ValueError as exc:
        raise BadConfig(f"cannot parse {text!r}: {exc}") from None


def parse_config(text):
    cfg = SimConfig()
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise BadConfig(f"line {lineno}: expected 'key = value'")
        key, value = (s.strip() for s in line.split("=", 1))
        if key.count(".") != 1:
            raise BadConfig(f"line {lineno}: key {key!r} must be section.name")
        section, name = key.split(".")
        block = getattr(cfg, section, None)
        if block is None or not dataclasses.is_dataclass(block) or not hasattr(block, name):
            raise BadConfig(f"line {lineno}: unknown key {key!r}")
        setattr(block, name, _parse_value(value, getattr(block, name)))
    return cfg.validate()


def load_config(path):
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise BadConfig(f"cannot read config {path}: {exc}") from None
    return parse_config(text)


def serialize_config(cfg):
    lines = []
    for sec in fields(cfg):
        block = getattr(cfg, sec.name)
        for f_ in fields(block):
            lines.append(f"{sec.name}.{f_.name} = {_format_value(getattr(block, f_.name))}")
        lines.append("")
    return "\n".join(lines)


def trajectory_terms(cfg):
    return {c: tuple(getattr(cfg.trajectory, c)) for c in CHANNELS if getattr(cfg.trajectory, c)}
