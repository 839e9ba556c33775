"""Camera pose integration, smooth velocity profiles and biased velocity sensors.

Quaternions are scalar-first Hamilton quaternions ``(w, x, y, z)``.  A vector
``s`` in the camera frame corresponds to ``q s q*`` in the reference frame.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import EnvelopeExit, OutOfRange

CHANNELS = ("v_x", "v_y", "v_z", "w_x", "w_y", "w_z")


def qmul(a, b):
    a = np.asarray(a, float)
    b = np.asarray(b, float)
    w1, x1, y1, z1 = np.moveaxis(a, -1, 0)
    w2, x2, y2, z2 = np.moveaxis(b, -1, 0)
    return np.stack(
        [
            w1 * w2 - x1 * x2 - y1 * y2 - z1 * z2,
            w1 * x2 + x1 * w2 + y1 * z2 - z1 * y2,
            w1 * y2 - x1 * z2 + y1 * w2 + z1 * x2,
            w1 * z2 + x1 * y2 - y1 * x2 + z1 * w2,
        ],
        axis=-1,
    )


def qconj(q):
    q = np.asarray(q, float)
    return q * np.array([1.0, -1.0, -1.0, -1.0])


def qnormalize(q):
    q = np.asarray(q, float)
    return q / np.linalg.norm(q, axis=-1, keepdims=True)


def quat_to_matrix(q):
    """Rotation matrix ``R`` with ``R s = q s q*``."""
    w, x, y, z = qnormalize(q)
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ]
    )


def quat_from_axis_angle(axis, angle):
    axis = np.asarray(axis, float)
    n = np.linalg.norm(axis)
    if n == 0.0:
        return np.array([1.0, 0.0, 0.0, 0.0])
    axis = axis / n
    return np.concatenate([[np.cos(angle / 2)], np.sin(angle / 2) * axis])


def quat_from_matrix(R):
    R = np.asarray(R, float)
    tr = np.trace(R)
    if tr > 0:
        s = 2.0 * np.sqrt(tr + 1.0)
        q = [0.25 * s, (R[2, 1] - R[1, 2]) / s, (R[0, 2] - R[2, 0]) / s, (R[1, 0] - R[0, 1]) / s]
    else:
        i = int(np.argmax(np.diag(R)))
        j, k = (i + 1) % 3, (i + 2) % 3
        s = 2.0 * np.sqrt(1.0 + R[i, i] - R[j, j] - R[k, k])
        q = np.zeros(4)
        q[0] = (R[k, j] - R[j, k]) / s
        q[1 + i] = 0.25 * s
        q[1 + j] = (R[j, i] + R[i, j]) / s
        q[1 + k] = (R[k, i] + R[i, k]) / s
    q = np.asarray(q, float)
    return qnormalize(q if q[0] >= 0 else -q)


def qrotate(q, v):
    """Rotate camera-frame vectors ``v`` (shape ``(..., 3)``) into the reference frame."""
    return np.asarray(v, float) @ quat_to_matrix(q).T


@dataclass(frozen=True)
class CameraPose:
    q: np.ndarray
    C: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "q", qnormalize(np.asarray(self.q, float)))
        object.__setattr__(self, "C", np.asarray(self.C, float).copy())

    @property
    def R(self):
        return quat_to_matrix(self.q)

    def to_camera(self, points):
        """World points to camera-frame coordinates."""
        return (np.asarray(points, float) - self.C) @ self.R


@dataclass(frozen=True)
class BodyTwist:
    v: np.ndarray
    w: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "v", np.asarray(self.v, float).reshape(3))
        object.__setattr__(self, "w", np.asarray(self.w, float).reshape(3))


@dataclass(frozen=True)
class BiasPair:
    p_v: np.ndarray = field(default_factory=lambda: np.zeros(3))
    p_w: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "p_v", np.asarray(self.p_v, float).reshape(3))
        object.__setattr__(self, "p_w", np.asarray(self.p_w, float).reshape(3))


@dataclass(frozen=True)
class NoiseSpec:
    """Standard deviations of the additive Gaussian noises (zero disables)."""

    sigma_y: float = 0.0
    sigma_D: float = 0.0
    sigma_v: float = 0.0
    sigma_w: float = 0.0
    seed: int = 0

    @property
    def enabled(self):
        return any(s > 0 for s in (self.sigma_y, self.sigma_D, self.sigma_v, self.sigma_w))


def stream_rng(seed, stream, index):
    """Counter-based generator keyed by ``(seed, stream, index)``."""
    key = np.array([int(seed) & 0xFFFFFFFFFFFFFFFF, (int(stream) << 40) | int(index)], dtype=np.uint64)
    return np.random.Generator(np.random.Philox(key=key))


@dataclass(frozen=True)
class Envelope:
    """Axis-aligned box that the optical center must stay in."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "lo", np.asarray(self.lo, float))
        object.__setattr__(self, "hi", np.asarray(self.hi, float))

    def contains(self, C):
        C = np.asarray(C, float)
        return bool(np.all(C >= self.lo) and np.all(C <= self.hi))

    def corners(self):
        return np.array(
            [[x, y, z] for x in (self.lo[0], self.hi[0]) for y in (self.lo[1], self.hi[1]) for z in (self.lo[2], self.hi[2])]
        )


def _pose_derivative(q, twist):
    dq = 0.5 * qmul(q, np.concatenate([[0.0], twist.w]))
    dC = quat_to_matrix(q) @ twist.v
    return dq, dC


def integrate_pose(pose, twist, dt, envelope=None):
    """One RK4 step of ``q' = q w / 2``, ``C' = q v q*``.

    ``twist`` is either a :class:`BodyTwist` held over the step or a callable
    ``s -> BodyTwist`` for ``s`` in ``[0, dt]``.  The quaternion is
    renormalized after the step.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    tw = twist if callable(twist) else (lambda s: twist)
    q0, C0 = pose.q, pose.C
    t_mid = tw(0.5 * dt)
    k1 = _pose_derivative(q0, tw(0.0))
    k2 = _pose_derivative(q0 + 0.5 * dt * k1[0], t_mid)
    k3 = _pose_derivative(q0 + 0.5 * dt * k2[0], t_mid)
    k4 = _pose_derivative(q0 + dt * k3[0], tw(dt))
    q = q0 + dt / 6.0 * (k1[0] + 2 * k2[0] + 2 * k3[0] + k4[0])
    C = C0 + dt / 6.0 * (k1[1] + 2 * k2[1] + 2 * k3[1] + k4[1])
    new = CameraPose(q, C)
    if envelope is not None and not envelope.contains(new.C):
        raise EnvelopeExit(f"optical center {new.C} left the envelope [{envelope.lo}, {envelope.hi}]")
    return new


@dataclass(frozen=True)
class TrajectoryProfile:
    """Per-axis sums of sinusoids ``a sin(2 pi f t + phase)`` for ``v`` and ``w``.

    ``terms`` maps a channel name from :data:`CHANNELS` to a tuple of
    ``(amplitude, frequency_hz, phase_rad)`` triples.
    """

    terms: dict
    duration: float
    rate: float = 42.0

    def __post_init__(self):
        for k in self.terms:
            if k not in CHANNELS:
                raise ValueError(f"unknown trajectory channel {k!r}")

    def _channel(self, name, t, deriv=False):
        out = 0.0
        for a, f, ph in self.terms.get(name, ()):
            arg = 2 * np.pi * f * t + ph
            out = out + (a * 2 * np.pi * f * np.cos(arg) if deriv else a * np.sin(arg))
        return out

    def derivative(self, t):
        vals = [self._channel(c, t, deriv=True) for c in CHANNELS]
        return BodyTwist(vals[:3], vals[3:])

    @property
    def n_frames(self):
        return int(round(self.duration * self.rate)) + 1

    def peak(self):
        """Upper bounds on ``|v|`` and ``|w|`` from the amplitudes."""
        amp = {c: sum(abs(a) for a, _, _ in self.terms.get(c, ())) for c in CHANNELS}
        v = np.sqrt(sum(amp[c] ** 2 for c in CHANNELS[:3]))
        w = np.sqrt(sum(amp[c] ** 2 for c in CHANNELS[3:]))
        return v, w


def sample_trajectory(profile, t):
    """True body twist of the profile at time ``t``."""
    if t < -1e-9 or t > profile.duration + 1e-9:
        raise OutOfRange(f"t={t} outside [0, {profile.duration}]")
    vals = [profile._channel(c, t) for c in CHANNELS]
    return BodyTwist(vals[:3], vals[3:])


def measured_twist(true, bias, noise=None, rng=None):
    """Biased (and optionally noisy) velocity measurement of a true twist."""
    v = true.v + bias.p_v
    w = true.w + bias.p_w
    if noise is not None and rng is not None:
        if noise.sigma_v > 0:
            v = v + rng.normal(0.0, noise.sigma_v, 3)
        if noise.sigma_w > 0:
            w = w + rng.normal(0.0, noise.sigma_w, 3)
    return BodyTwist(v, w)


def simulate_poses(profile, pose0, times, substeps=4, envelope=None):
    """Integrate the profile from ``pose0`` and return the pose at each time."""
    poses = [pose0]
    pose = pose0
    for t0, t1 in zip(times[:-1], times[1:]):
        h = (t1 - t0) / substeps
        for k in range(substeps):
            ts = t0 + k * h
            pose = integrate_pose(pose, lambda s, ts=ts: sample_trajectory(profile, min(ts + s, profile.duration)), h, envelope)
        poses.append(pose)
    return poses


class PoseTrack:
    """Finely sampled pose history with interpolation at arbitrary times."""

    def __init__(self, profile, pose0, dt_fine):
        n = int(np.ceil(profile.duration / dt_fine))
        self.times = np.linspace(0.0, profile.duration, n + 1)
        poses = simulate_poses(profile, pose0, self.times, substeps=1)
        self.q = np.array([p.q for p in poses])
        self.C = np.array([p.C for p in poses])
        self.profile = profile

    def __call__(self, t):
        k = int(np.clip(np.searchsorted(self.times, t) - 1, 0, len(self.times) - 2))
        a = (t - self.times[k]) / (self.times[k + 1] - self.times[k])
        q0, q1 = self.q[k], self.q[k + 1]
        if np.dot(q0, q1) < 0:
            q1 = -q1
        return CameraPose(qnormalize((1 - a) * q0 + a * q1), (1 - a) * self.C[k] + a * self.C[k + 1])


def look_pose(C, forward, up=(0.0, 0.0, 1.0)):
    """Pose whose optical axis (camera z) points along ``forward``.

    Camera x points right and camera y down, so ``up`` maps to ``-y``.
    """
    z = np.asarray(forward, float)
    z = z / np.linalg.norm(z)
    x = np.cross(z, np.asarray(up, float))
    if np.linalg.norm(x) < 1e-12:
        raise ValueError("forward and up are parallel")
    x = x / np.linalg.norm(x)
    y = np.cross(z, x)
    return CameraPose(quat_from_matrix(np.column_stack([x, y, z])), C)
