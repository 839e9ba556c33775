"""Static convex scenes with Lambertian texture, ray casting and rendering."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from .errors import BadConfig, NonConvexProfile, NotAxisymmetric, OriginOutside
from .kinematics import Envelope, quat_to_matrix, quat_from_axis_angle
from .sphere import unit

Y_MIN, Y_MAX = 1.0, 256.0
DEPTH_FLOOR = 1e-3


@dataclass(frozen=True)
class Box:
    half: np.ndarray
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "half", np.asarray(self.half, float))
        object.__setattr__(self, "center", np.asarray(self.center, float))
        if np.any(self.half <= 0):
            raise BadConfig("box half-extents must be positive")

    def inside(self, p):
        return np.all(np.abs(np.asarray(p) - self.center) < self.half, axis=-1)

    def exit_distance(self, o, d):
        o = np.asarray(o, float) - self.center
        with np.errstate(divide="ignore", invalid="ignore"):
            t = (np.sign(d) * self.half - o) / d
        t = np.where(np.abs(d) < 1e-300, np.inf, t)
        return np.min(t, axis=-1)

    def patch(self, p):
        """Wall label ``2 * axis + (positive side)`` of surface points."""
        rel = np.asarray(p, float) - self.center
        face = np.argmax(np.abs(rel) / self.half, axis=-1)
        side = np.take_along_axis(rel, face[..., None], axis=-1)[..., 0] > 0
        return 2 * face + side

    def clearance(self, envelope):
        """Smallest distance from the envelope to the walls."""
        lo = envelope.lo - self.center
        hi = envelope.hi - self.center
        return float(np.min(self.half - np.maximum(np.abs(lo), np.abs(hi))))


@dataclass(frozen=True)
class Sphere:
    radius: float
    center: np.ndarray = field(default_factory=lambda: np.zeros(3))

    def __post_init__(self):
        object.__setattr__(self, "center", np.asarray(self.center, float))
        if self.radius <= 0:
            raise BadConfig("sphere radius must be positive")

    def inside(self, p):
        return np.linalg.norm(np.asarray(p) - self.center, axis=-1) < self.radius

    def exit_distance(self, o, d):
        oc = np.asarray(o, float) - self.center
        b = np.sum(d * oc, axis=-1)
        c = np.dot(oc, oc) - self.radius**2
        return -b + np.sqrt(b * b - c)

    def clearance(self, envelope):
        far = np.max(np.linalg.norm(envelope.corners() - self.center, axis=-1))
        return float(self.radius - far)


class SurfaceOfRevolution:
    """Closed convex body ``{p : |p_perp| <= r(h), h0 <= h <= h1}``.

    ``h`` is the coordinate of ``p - center`` along ``axis`` and ``p_perp`` its
    component orthogonal to the axis.  ``radius`` is either a callable or a
    polyline ``(h_values, r_values)``; it must be concave and non-negative.
    """

    def __init__(self, axis, radius, h0=None, h1=None, center=(0.0, 0.0, 0.0), check_samples=400):
        self.axis = unit(axis)
        self.center = np.asarray(center, float)
        if callable(radius):
            if h0 is None or h1 is None:
                raise BadConfig("callable profile needs h0 and h1")
            self._r = radius
            self.h0, self.h1 = float(h0), float(h1)
        else:
            hs, rs = (np.asarray(a, float) for a in radius)
            if np.any(np.diff(hs) <= 0):
                raise BadConfig("profile heights must increase")
            self._r = lambda h, hs=hs, rs=rs: np.interp(h, hs, rs)
            self.h0, self.h1 = float(hs[0]), float(hs[-1])
        hh = np.linspace(self.h0, self.h1, check_samples)
        rr = np.asarray(self._r(hh), float)
        if np.any(rr < -1e-12):
            raise NonConvexProfile("profile radius must be non-negative")
        second = rr[2:] - 2 * rr[1:-1] + rr[:-2]
        if np.any(second > 1e-9 * max(1.0, rr.max())):
            raise NonConvexProfile("profile radius must be concave in height")
        self.r_max = float(rr.max())
        self.bound = float(np.hypot(max(abs(self.h0), abs(self.h1)), self.r_max))

    def radius(self, h):
        return np.asarray(self._r(h), float)

    def _local(self, p):
        rel = np.asarray(p, float) - self.center
        h = rel @ self.axis
        rho = np.linalg.norm(rel - h[..., None] * self.axis, axis=-1)
        return rho, h

    def inside(self, p):
        rho, h = self._local(p)
        ok = (h > self.h0) & (h < self.h1)
        r = self.radius(np.clip(h, self.h0, self.h1))
        return ok & (rho < r)

    def exit_distance(self, o, d, iters=64):
        o = np.asarray(o, float)
        lo = np.zeros(d.shape[:-1])
        hi = np.full(d.shape[:-1], np.linalg.norm(o - self.center) + self.bound + 1e-6)
        for _ in range(iters):
            mid = 0.5 * (lo + hi)
            ins = self.inside(o + mid[..., None] * d)
            lo = np.where(ins, mid, lo)
            hi = np.where(ins, hi, mid)
        return 0.5 * (lo + hi)

    def surface_samples(self, n_h=200, n_az=72):
        hh = np.linspace(self.h0, self.h1, n_h)
        az = np.linspace(0, 2 * np.pi, n_az, endpoint=False)
        a = np.array([1.0, 0, 0]) if abs(self.axis[0]) < 0.9 else np.array([0, 1.0, 0])
        u = unit(np.cross(self.axis, a))
        w = np.cross(self.axis, u)
        H, A = np.meshgrid(hh, az, indexing="ij")
        r = self.radius(H)
        pts = self.center + H[..., None] * self.axis + r[..., None] * (
            np.cos(A)[..., None] * u + np.sin(A)[..., None] * w
        )
        return pts.reshape(-1, 3)

    def clearance(self, envelope):
        pts = self.surface_samples()
        dist = np.linalg.norm(np.maximum(np.maximum(envelope.lo - pts, pts - envelope.hi), 0.0), axis=-1)
        spacing = max((self.h1 - self.h0) / 199, 2 * np.pi * self.r_max / 72)
        return float(dist.min() - spacing)


@dataclass(frozen=True)
class Scene:
    """A convex closed surface, its texture and a depth lower bound.

    ``texture`` maps world points ``(..., 3)`` on the surface to brightness.
    """

    surface: object
    texture: Callable
    d_star: float
    envelope: Envelope | None = None

    def __post_init__(self):
        if not self.d_star > 0:
            raise BadConfig("d_star must be positive (envelope touches the surface)")


@dataclass(frozen=True)
class SurfaceHit:
    point: np.ndarray
    distance: np.ndarray
    brightness: np.ndarray
    patch: np.ndarray  # smooth-patch label; neighbors with different labels straddle a crease


def ray_cast(scene, origin, dir_world):
    """Intersect rays from an interior ``origin`` with the scene surface."""
    origin = np.asarray(origin, float)
    if not scene.surface.inside(origin):
        raise OriginOutside(f"camera origin {origin} is not inside the scene")
    d = unit(dir_world)
    t = scene.surface.exit_distance(origin, d)
    p = origin + t[..., None] * d
    patch_fn = getattr(scene.surface, "patch", None)
    patch = patch_fn(p) if patch_fn is not None else np.zeros(t.shape, int)
    return SurfaceHit(p, t, np.asarray(scene.texture(p), float), patch)


def render(scene, pose, grid, noise=None, rng=None, dirs=None):
    """Brightness and depth fields seen from ``pose`` on ``grid``.

    Noise, when enabled, is i.i.d. Gaussian per pixel; brightness is clamped
    to [1, 256] and depth floored at 1 mm afterwards.
    """
    cam_dirs = grid.dirs if dirs is None else dirs
    world = cam_dirs @ quat_to_matrix(pose.q).T
    hit = ray_cast(scene, pose.C, world)
    return apply_noise(hit.brightness, hit.distance, noise, rng)


def apply_noise(y, D, noise=None, rng=None):
    """Add per-pixel Gaussian noise, then clamp brightness and floor depth."""
    if noise is not None and rng is not None:
        if noise.sigma_y > 0:
            y = y + rng.normal(0.0, noise.sigma_y, y.shape)
        if noise.sigma_D > 0:
            D = D + rng.normal(0.0, noise.sigma_D, D.shape)
    return np.clip(y, Y_MIN, Y_MAX), np.maximum(D, DEPTH_FLOOR)


# ---------------------------------------------------------------------------
# scene factories


def _room_texture(box, amplitude, f_h, f_v):
    half, center = box.half, box.center

    def texture(p):
        rel = np.asarray(p, float) - center
        face = np.argmax(np.abs(rel) / half, axis=-1)
        corner = rel + half
        # wall-local coordinates measured from the box's lower corner
        u = np.where(face == 0, corner[..., 1], corner[..., 0])
        v = np.where(face == 2, corner[..., 1], corner[..., 2])
        return 128.5 + amplitude * np.sin(2 * np.pi * f_h * u) * np.sin(2 * np.pi * f_v * v)

    return texture


def room_texture_value(amplitude, f_h, f_v, u, v):
    """Texture of a room wall at wall-local coordinates ``(u, v)`` in meters."""
    return 128.5 + amplitude * np.sin(2 * np.pi * f_h * u) * np.sin(2 * np.pi * f_v * v)


def make_room_scene(dims=(4.0, 3.0, 2.5), amplitude=100.0, freq_h=0.5, freq_v=0.5, envelope=None, center=(0.0, 0.0, 0.0)):
    """Box room whose walls carry ``128.5 + A sin(2 pi f_h u) sin(2 pi f_v v)``."""
    dims = np.asarray(dims, float)
    if np.any(dims <= 0) or freq_h <= 0 or freq_v <= 0:
        raise BadConfig("room dimensions and texture frequencies must be positive")
    if not 0 <= amplitude <= 127.5:
        raise BadConfig("texture amplitude must lie in [0, 127.5]")
    box = Box(dims / 2.0, np.asarray(center, float))
    if envelope is None:
        envelope = Envelope(box.center - 0.5 * box.half, box.center + 0.5 * box.half)
    return Scene(box, _room_texture(box, amplitude, freq_h, freq_v), box.clearance(envelope), envelope)


def sphere_texture(amplitude, freq_h, freq_v, center=(0.0, 0.0, 0.0)):
    """Smooth texture ``128.5 + A sin(2 pi f_h (x + y)) cos(2 pi f_v z)`` about ``center``."""
    if not 0 <= amplitude <= 127.5:
        raise BadConfig("texture amplitude must lie in [0, 127.5]")
    c = np.asarray(center, float)

    def texture(p):
        rel = np.asarray(p, float) - c
        return 128.5 + amplitude * np.sin(2 * np.pi * freq_h * (rel[..., 0] + rel[..., 1])) * np.cos(
            2 * np.pi * freq_v * rel[..., 2]
        )

    return texture


def make_sphere_scene(radius=2.0, texture=None, envelope=None, center=(0.0, 0.0, 0.0)):
    surf = Sphere(radius, np.asarray(center, float))
    if texture is None:
        texture = lambda p: np.full(np.shape(p)[:-1], 128.5)  # noqa: E731
    if envelope is None:
        r = 0.4 * radius / np.sqrt(3)
        envelope = Envelope(surf.center - r, surf.center + r)
    return Scene(surf, texture, surf.clearance(envelope), envelope)


def revolved_texture(axis, center, g):
    """Texture ``p -> g(rho, h)`` depending only on distance-to-axis and height."""
    axis = unit(axis)
    center = np.asarray(center, float)

    def texture(p):
        rel = np.asarray(p, float) - center
        h = rel @ axis
        rho = np.linalg.norm(rel - h[..., None] * axis, axis=-1)
        return g(rho, h)

    return texture


def check_axisymmetric(surface, texture, n=2000, seed=0, tol=1e-9):
    """Raise :class:`NotAxisymmetric` if the texture varies with azimuth."""
    rng = np.random.default_rng(seed)
    pts = surface.surface_samples(60, 36)
    pts = pts[rng.choice(len(pts), size=min(n, len(pts)), replace=False)]
    base = np.asarray(texture(pts), float)
    for ang in rng.uniform(0.1, 2 * np.pi - 0.1, 3):
        R = quat_to_matrix(quat_from_axis_angle(surface.axis, ang))
        rot = (pts - surface.center) @ R.T + surface.center
        diff = np.max(np.abs(np.asarray(texture(rot), float) - base))
        if diff > tol * max(1.0, np.max(np.abs(base))):
            raise NotAxisymmetric(f"texture changes by {diff:.3g} under rotation about the axis")


def make_axisymmetric_scene(axis, profile, texture, h_range=None, center=(0.0, 0.0, 0.0), envelope=None):
    """Scene invariant under every rotation about ``axis`` through ``center``.

    ``profile`` is a polyline ``(h, r)`` or a callable ``r(h)`` (then
    ``h_range`` is required).  ``texture`` is either a function ``g(rho, h)``
    or, with ``texture.world=True`` semantics, any callable of world points; in
    both cases invariance is verified numerically.
    """
    h0, h1 = (None, None) if h_range is None else h_range
    surf = SurfaceOfRevolution(axis, profile, h0, h1, center)
    tex = texture if getattr(texture, "world_texture", False) else revolved_texture(surf.axis, surf.center, texture)
    check_axisymmetric(surf, tex)
    if envelope is None:
        r = 0.2 * min(surf.r_max, 0.5 * (surf.h1 - surf.h0))
        mid = surf.center + 0.5 * (surf.h0 + surf.h1) * surf.axis
        envelope = Envelope(mid - r, mid + r)
    return Scene(surf, tex, surf.clearance(envelope), envelope)


def world_texture(fn):
    """Mark a callable of world points as a texture for :func:`make_axisymmetric_scene`."""
    fn.world_texture = True
    return fn


def spheroid_profile(a, c):
    """Radius function of a spheroid with equatorial radius ``a``, half-height ``c``."""
    return (lambda h: a * np.sqrt(np.clip(1.0 - (np.asarray(h) / c) ** 2, 0.0, None))), (-c, c)
