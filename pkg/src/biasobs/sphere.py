"""Differential calculus on the unit sphere and the two chart grids used here.

Directions are plain ``numpy`` arrays whose last axis has length 3.  Scalar
fields on a grid are ``(rows, cols)`` arrays; tangent fields are
``(rows, cols, 3)`` arrays expressed in Cartesian coordinates of R^3.

Two grids are provided:

* :class:`PinholeGrid` -- the perspective chart ``eta = (z1, z2, 1)/r``;
  columns follow ``z1`` (left to right), rows follow ``z2`` (top to bottom).
* :class:`LatLongGrid` -- colatitude/longitude samples covering the whole
  sphere with a half-cell offset away from the poles.

Both expose the same attributes (``dirs``, ``weights``, ``basis``, ``dual``,
``spacing``) so the stencil code below works on either.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import GridMismatch, SingularChart

__all__ = [
    "unit",
    "grad_dot",
    "laplacian_dot",
    "div_cross",
    "pinhole_to_sphere",
    "sphere_to_pinhole",
    "PinholeGrid",
    "LatLongGrid",
    "chart_partials",
    "chart_gradient",
    "chart_velocity",
    "upwind_advection",
    "upwind3_advection",
    "cfl_number",
    "divergence",
    "laplace_beltrami",
    "sphere_quadrature",
    "tangent_basis",
]


def unit(v):
    """Normalize the last axis of ``v``."""
    v = np.asarray(v, dtype=float)
    return v / np.linalg.norm(v, axis=-1, keepdims=True)


def grad_dot(eta, P):
    """Gradient on the sphere of ``eta -> eta . P``.

    Equals ``-eta x (eta x P)``, i.e. the projection of ``P`` on the tangent
    plane at ``eta``.  Broadcasts over leading axes.
    """
    eta = np.asarray(eta, dtype=float)
    P = np.asarray(P, dtype=float)
    return -np.cross(eta, np.cross(eta, P))


def laplacian_dot(eta, P):
    """Laplace-Beltrami operator applied to ``eta -> eta . P``: ``-2 eta . P``."""
    return -2.0 * np.sum(np.asarray(eta, float) * np.asarray(P, float), axis=-1)


def div_cross(eta, P):
    """Divergence of the rotation field ``eta -> eta x P``, which is zero."""
    eta = np.asarray(eta, dtype=float)
    return np.zeros(eta.shape[:-1])


def pinhole_to_sphere(z1, z2):
    """Map pinhole chart coordinates to unit directions ``(z1, z2, 1)/r``."""
    z1, z2 = np.broadcast_arrays(np.asarray(z1, float), np.asarray(z2, float))
    v = np.stack([z1, z2, np.ones_like(z1)], axis=-1)
    return v / np.sqrt(1.0 + z1**2 + z2**2)[..., None]


def sphere_to_pinhole(eta):
    eta = np.asarray(eta, dtype=float)
    return eta[..., 0] / eta[..., 2], eta[..., 1] / eta[..., 2]


def tangent_basis(eta):
    """Two orthonormal tangent vectors at each ``eta``."""
    eta = unit(eta)
    helper = np.where(np.abs(eta[..., 2:3]) < 0.9, [0.0, 0.0, 1.0], [1.0, 0.0, 0.0])
    t1 = unit(np.cross(helper, eta))
    t2 = np.cross(eta, t1)
    return t1, t2


def _dual_basis(dirs, e_row, e_col):
    M = np.stack([dirs, e_row, e_col], axis=-2)
    det = np.linalg.det(M)
    if np.any(np.abs(det) < 1e-14):
        raise SingularChart("chart basis is degenerate")
    Minv = np.linalg.inv(M)
    return Minv[..., :, 1], Minv[..., :, 2]


@dataclass(frozen=True)
class PinholeGrid:
    """Pixel grid of a pinhole camera.

    Pixel centers span ``[-tan(fov/2), tan(fov/2)]`` in each chart coordinate.
    Quadrature weights are the chart Jacobian ``dz1 dz2 / r^3`` at the pixel
    center.
    """

    width: int
    height: int
    fov_h: float
    fov_v: float
    z1: np.ndarray = field(init=False, repr=False)
    z2: np.ndarray = field(init=False, repr=False)
    dirs: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)
    basis: tuple = field(init=False, repr=False)
    dual: tuple = field(init=False, repr=False)
    dual_cross: tuple = field(init=False, repr=False)
    spacing: tuple = field(init=False, repr=False)

    periodic = False

    def __post_init__(self):
        if self.width < 3 or self.height < 3:
            raise ValueError("pinhole grid needs at least 3x3 pixels")
        t1 = np.tan(self.fov_h / 2.0)
        t2 = np.tan(self.fov_v / 2.0)
        z1 = np.linspace(-t1, t1, self.width)
        z2 = np.linspace(-t2, t2, self.height)
        Z1, Z2 = np.meshgrid(z1, z2)
        r2 = 1.0 + Z1**2 + Z2**2
        r = np.sqrt(r2)
        dirs = np.stack([Z1, Z2, np.ones_like(Z1)], axis=-1) / r[..., None]
        # d eta / d z1 and d eta / d z2
        e_col = np.stack([1.0 / r, np.zeros_like(r), np.zeros_like(r)], axis=-1) - (Z1 / r**3)[
            ..., None
        ] * np.stack([Z1, Z2, np.ones_like(Z1)], axis=-1)
        e_row = np.stack([np.zeros_like(r), 1.0 / r, np.zeros_like(r)], axis=-1) - (Z2 / r**3)[
            ..., None
        ] * np.stack([Z1, Z2, np.ones_like(Z1)], axis=-1)
        c_row, c_col = _dual_basis(dirs, e_row, e_col)
        dz1 = z1[1] - z1[0]
        dz2 = z2[1] - z2[0]
        set_ = object.__setattr__
        set_(self, "z1", z1)
        set_(self, "z2", z2)
        set_(self, "dirs", dirs)
        set_(self, "weights", dz1 * dz2 / r2**1.5)
        set_(self, "basis", (e_row, e_col))
        set_(self, "dual", (c_row, c_col))
        set_(self, "dual_cross", (np.cross(c_row, dirs), np.cross(c_col, dirs)))
        set_(self, "spacing", (dz2, dz1))

    @property
    def shape(self):
        return (self.height, self.width)

    def footprint_solid_angle(self):
        """Exact solid angle of the rectangle covered by the pixel footprints."""
        a = np.arctan(self.z1[-1] + self.spacing[1] / 2)
        b = np.arctan(self.z2[-1] + self.spacing[0] / 2)
        return 4.0 * np.arcsin(np.sin(a) * np.sin(b))

    def pad(self, f, mode="quadratic"):
        """Add one ghost layer on every side.

        ``quadratic`` extrapolates so that a centered stencil at the edge
        becomes the second-order one-sided stencil; ``copy`` duplicates the
        edge value (zero normal derivative).
        """
        if mode == "copy":
            return np.pad(f, [(1, 1), (1, 1)] + [(0, 0)] * (f.ndim - 2), mode="edge")
        g = np.empty((f.shape[0] + 2, f.shape[1] + 2) + f.shape[2:])
        g[1:-1, 1:-1] = f
        g[0, 1:-1] = 3 * f[0] - 3 * f[1] + f[2]
        g[-1, 1:-1] = 3 * f[-1] - 3 * f[-2] + f[-3]
        g[:, 0] = 3 * g[:, 1] - 3 * g[:, 2] + g[:, 3]
        g[:, -1] = 3 * g[:, -2] - 3 * g[:, -3] + g[:, -4]
        return g

    def sample(self, field_, z1, z2):
        """Bilinear interpolation of a grid field at chart coordinates.

        Returns NaN outside the pixel-center rectangle.
        """
        fi = (np.asarray(z1) - self.z1[0]) / self.spacing[1]
        fj = (np.asarray(z2) - self.z2[0]) / self.spacing[0]
        return _bilinear(field_, fj, fi)


def _bilinear(f, fj, fi):
    H, W = f.shape[:2]
    eps = 1e-9
    inside = (fi >= -eps) & (fi <= W - 1 + eps) & (fj >= -eps) & (fj <= H - 1 + eps)
    fi = np.clip(fi, 0, W - 1)
    fj = np.clip(fj, 0, H - 1)
    i0 = np.minimum(np.floor(fi).astype(int), W - 2)
    j0 = np.minimum(np.floor(fj).astype(int), H - 2)
    a = fi - i0
    b = fj - j0
    if f.ndim == 3:
        a = a[..., None]
        b = b[..., None]
    out = (
        (1 - a) * (1 - b) * f[j0, i0]
        + a * (1 - b) * f[j0, i0 + 1]
        + (1 - a) * b * f[j0 + 1, i0]
        + a * b * f[j0 + 1, i0 + 1]
    )
    mask = inside if f.ndim == 2 else inside[..., None]
    return np.where(mask, out, np.nan)


def _fejer_weights(n):
    """Fejer's first rule on Chebyshev angles, for integrals of f(theta) sin(theta)."""
    theta = (np.arange(n) + 0.5) * np.pi / n
    j = np.arange(1, n // 2 + 1)
    s = np.cos(2.0 * np.outer(theta, j)) / (4.0 * j**2 - 1.0)
    return theta, (2.0 / n) * (1.0 - 2.0 * s.sum(axis=1))


def _latlong_frame(theta, phi):
    st, ct = np.sin(theta), np.cos(theta)
    sp, cp = np.sin(phi), np.cos(phi)
    dirs = np.stack([st * cp, st * sp, ct * np.ones_like(phi)], axis=-1)
    e_theta = np.stack([ct * cp, ct * sp, -st * np.ones_like(phi)], axis=-1)
    e_phi = np.stack([-st * sp, st * cp, np.zeros_like(st * cp)], axis=-1)
    return dirs, e_theta, e_phi


@dataclass(frozen=True)
class LatLongGrid:
    """Colatitude (rows) by longitude (columns) samples of the whole sphere.

    Rows sit at ``theta_k = (k + 1/2) pi / n_theta``; ``n_phi`` must be even so
    that a row continues across the pole at ``phi + pi``.  Weights combine
    Fejer's rule in ``cos(theta)`` with the trapezoid rule in ``phi`` and sum
    to ``4 pi`` up to rounding.
    """

    n_theta: int
    n_phi: int
    theta: np.ndarray = field(init=False, repr=False)
    phi: np.ndarray = field(init=False, repr=False)
    dirs: np.ndarray = field(init=False, repr=False)
    weights: np.ndarray = field(init=False, repr=False)
    basis: tuple = field(init=False, repr=False)
    dual: tuple = field(init=False, repr=False)
    dual_cross: tuple = field(init=False, repr=False)
    spacing: tuple = field(init=False, repr=False)

    periodic = True

    def __post_init__(self):
        if self.n_phi % 2 or self.n_phi < 4 or self.n_theta < 2:
            raise ValueError("LatLongGrid needs an even n_phi >= 4 and n_theta >= 2")
        theta, wt = _fejer_weights(self.n_theta)
        phi = np.arange(self.n_phi) * 2.0 * np.pi / self.n_phi
        T, Ph = np.meshgrid(theta, phi, indexing="ij")
        dirs, e_theta, e_phi = _latlong_frame(T, Ph)
        st = np.sin(T)[..., None]
        set_ = object.__setattr__
        set_(self, "theta", theta)
        set_(self, "phi", phi)
        set_(self, "dirs", dirs)
        set_(self, "weights", np.outer(wt, np.full(self.n_phi, 2.0 * np.pi / self.n_phi)))
        set_(self, "basis", (e_theta, e_phi))
        set_(self, "dual", (e_theta, e_phi / st**2))
        set_(self, "dual_cross", (np.cross(e_theta, dirs), np.cross(e_phi / st**2, dirs)))
        set_(self, "spacing", (np.pi / self.n_theta, 2.0 * np.pi / self.n_phi))

    @property
    def shape(self):
        return (self.n_theta, self.n_phi)

    def pad(self, f, mode=None):
        """Ghost layer continuing periodically in phi and across both poles."""
        half = self.n_phi // 2
        top = np.roll(f[0], half, axis=0)
        bottom = np.roll(f[-1], half, axis=0)
        g = np.concatenate([top[None], f, bottom[None]], axis=0)
        return np.concatenate([g[:, -1:], g, g[:, :1]], axis=1)

    def padded_frame(self):
        """Analytic frame on the padded grid (signed sin(theta) in ghost rows)."""
        dth, dph = self.spacing
        theta = np.concatenate([[-self.theta[0]], self.theta, [np.pi + self.theta[0]]])
        phi = np.concatenate([[self.phi[0] - dph], self.phi, [self.phi[-1] + dph]])
        T, Ph = np.meshgrid(theta, phi, indexing="ij")
        return T, Ph

    def sample(self, field_, eta):
        """Bilinear interpolation at arbitrary directions (periodic in phi)."""
        eta = unit(eta)
        th = np.arccos(np.clip(eta[..., 2], -1.0, 1.0))
        ph = np.mod(np.arctan2(eta[..., 1], eta[..., 0]), 2.0 * np.pi)
        g = self.pad(field_)
        fj = (th - (-self.theta[0])) / self.spacing[0]
        fi = (ph - (self.phi[0] - self.spacing[1])) / self.spacing[1]
        return _bilinear(g, fj, fi)


# ---------------------------------------------------------------------------
# stencils

_SOBEL_COL = np.array([[-1.0, 0.0, 1.0], [-2.0, 0.0, 2.0], [-1.0, 0.0, 1.0]]) / 8.0
_CENTRAL_COL = np.array([[0.0, 0.0, 0.0], [-1.0, 0.0, 1.0], [0.0, 0.0, 0.0]]) / 2.0


def _apply3x3(g, kernel):
    H, W = g.shape[0] - 2, g.shape[1] - 2
    out = np.zeros((H, W) + g.shape[2:])
    for a in range(3):
        for b in range(3):
            k = kernel[a, b]
            if k != 0.0:
                out += k * g[a : a + H, b : b + W]
    return out


def chart_partials(f, grid, stencil="sobel"):
    """Partial derivatives of ``f`` along the row and column chart coordinates.

    ``stencil`` is ``"sobel"`` (3x3 Sobel normalized by ``8 h``) or
    ``"central"`` (plain centered difference).  Returns ``(d_row, d_col)``.
    """
    if f.shape[:2] != grid.shape:
        raise GridMismatch(f"field shape {f.shape[:2]} does not match grid {grid.shape}")
    if stencil == "sobel":
        kc = _SOBEL_COL
    elif stencil == "central":
        kc = _CENTRAL_COL
    else:
        raise ValueError(f"unknown stencil {stencil!r}")
    g = grid.pad(f, "quadratic")
    h_row, h_col = grid.spacing
    d_col = _apply3x3(g, kc) / h_col
    d_row = _apply3x3(g, kc.T) / h_row
    return d_row, d_col


def chart_gradient(f, grid, stencil="sobel"):
    """Spherical gradient of a grid field, identified from its chart partials.

    The result ``g`` is the tangent vector with ``g . eta = 0`` and
    ``g . d(eta)/dz_k = df/dz_k`` for both chart coordinates.
    """
    d_row, d_col = chart_partials(f, grid, stencil)
    c_row, c_col = grid.dual
    return d_row[..., None] * c_row + d_col[..., None] * c_col


def chart_velocity(A, grid):
    """Chart components ``(a_row, a_col)`` of a tangent field ``A``."""
    c_row, c_col = grid.dual
    return np.sum(A * c_row, axis=-1), np.sum(A * c_col, axis=-1)


def upwind_advection(f, grid, a_row, a_col):
    """First-order upwind approximation of ``grad f . A``.

    On a pinhole grid the ghost layer copies the edge pixel, which imposes a
    zero normal derivative wherever the flow enters through the frame edge.
    """
    g = grid.pad(f, "copy")
    h_row, h_col = grid.spacing
    c = g[1:-1, 1:-1]
    back_col = (c - g[1:-1, :-2]) / h_col
    fwd_col = (g[1:-1, 2:] - c) / h_col
    back_row = (c - g[:-2, 1:-1]) / h_row
    fwd_row = (g[2:, 1:-1] - c) / h_row
    return np.where(a_col > 0, a_col * back_col, a_col * fwd_col) + np.where(
        a_row > 0, a_row * back_row, a_row * fwd_row
    )


def _pad2(f, grid):
    if isinstance(grid, LatLongGrid):
        half = grid.n_phi // 2
        top = np.roll(f[1::-1], half, axis=1)
        bottom = np.roll(f[:-3:-1], half, axis=1)
        g = np.concatenate([top, f, bottom], axis=0)
        return np.concatenate([g[:, -2:], g, g[:, :2]], axis=1)
    return np.pad(f, [(2, 2), (2, 2)], mode="edge")


def _upwind3_diffs(g, h):
    # third-order upwind-biased differences along axis 0 of a 2-padded array
    n = g.shape[0] - 4
    m2, m1, c, p1, p2 = (g[k : k + n] for k in range(5))
    pos = (2 * p1 + 3 * c - 6 * m1 + m2) / (6 * h)
    neg = (-p2 + 6 * p1 - 3 * c - 2 * m1) / (6 * h)
    return pos, neg


def upwind3_advection(f, grid, a_row, a_col):
    """Third-order upwind-biased approximation of ``grad f . A``.

    Its leading error is a fourth-derivative damping, far weaker than the
    first-order scheme's numerical diffusion on smooth textures.  With
    explicit Euler it is only stable together with the relaxation term;
    see :func:`biasobs.observer.substep_count`.
    """
    g = _pad2(f, grid)
    h_row, h_col = grid.spacing
    pr, nr = _upwind3_diffs(g[:, 2:-2], h_row)
    pc, nc = _upwind3_diffs(g[2:-2, :].T, h_col)
    return np.where(a_row > 0, a_row * pr, a_row * nr) + np.where(a_col > 0, a_col * pc.T, a_col * nc.T)


def cfl_number(grid, a_row, a_col, dt):
    return float(np.max(np.abs(a_row) / grid.spacing[0] + np.abs(a_col) / grid.spacing[1]) * dt)


def divergence(F, grid):
    """Discrete divergence of a tangent field with centered differences.

    Uses ``div F = (1/sqrt g) d_k (sqrt g F^k)`` in the grid's chart.
    """
    if F.shape[:2] != grid.shape:
        raise GridMismatch("field does not match grid")
    h_row, h_col = grid.spacing
    if isinstance(grid, LatLongGrid):
        Fp = grid.pad(F)
        T, Ph = grid.padded_frame()
        _, e_theta, e_phi = _latlong_frame(T, Ph)
        st = np.sin(T)
        # sqrt(g) F^theta and sqrt(g) F^phi on the padded grid
        J_row = st * np.sum(Fp * e_theta, axis=-1)
        J_col = np.sum(Fp * e_phi, axis=-1) / st
        d = (J_row[2:, 1:-1] - J_row[:-2, 1:-1]) / (2 * h_row) + (
            J_col[1:-1, 2:] - J_col[1:-1, :-2]
        ) / (2 * h_col)
        return d / st[1:-1, 1:-1]
    e_row, e_col = grid.basis
    sqrtg = np.linalg.norm(np.cross(e_row, e_col), axis=-1)
    a_row, a_col = chart_velocity(F, grid)
    J_row = grid.pad(sqrtg * a_row, "quadratic")
    J_col = grid.pad(sqrtg * a_col, "quadratic")
    d = (J_row[2:, 1:-1] - J_row[:-2, 1:-1]) / (2 * h_row) + (
        J_col[1:-1, 2:] - J_col[1:-1, :-2]
    ) / (2 * h_col)
    return d / sqrtg


def laplace_beltrami(f, grid):
    """Discrete Laplace-Beltrami operator as divergence of the centered gradient."""
    return divergence(chart_gradient(f, grid, "central"), grid)


def sphere_quadrature(f, grid):
    """Weighted sum ``sum_k f(k) w(k)``; vector integrands give a 3-vector."""
    f = np.asarray(f, dtype=float)
    if f.shape[:2] != grid.shape:
        raise GridMismatch(f"field shape {f.shape[:2]} does not match grid {grid.shape}")
    if f.ndim == 2:
        return float(np.sum(f * grid.weights))
    return np.tensordot(grid.weights, f, axes=([0, 1], [0, 1]))
