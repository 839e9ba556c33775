"""Lyapunov-based observer for constant velocity biases on the whole sphere.

The estimator state is ``(y_hat, D_hat, p_w_hat, p_v_hat)``.  Fields are
transported with the bias-corrected advection field

    A = eta x (w_m - p_w_hat + (1/D) eta x (v_m - p_v_hat)),

relaxed toward the measurements, and the bias estimates integrate the
gradient-weighted innovation over the sphere.  Time stepping is explicit
Euler; :func:`advance` splits a frame interval into CFL-limited substeps.
"""
from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np

from .errors import BadGains, NonfiniteField
from .sphere import (
    upwind3_advection,
    chart_partials,
    chart_velocity,
    cfl_number,
    sphere_quadrature,
    upwind_advection,
)

log = logging.getLogger(__name__)

DEPTH_FLOOR = 1e-3
INV_DEPTH_FLOOR = 0.05
CFL_WARN = 0.5


@dataclass(frozen=True)
class ObserverGains:
    """Correction gains and weights.

    ``k_y, k_D`` in 1/s; ``k_w, k_v`` and the weights ``lambda_y, lambda_D``
    are plain positive numbers in the conventions of the brightness (gray
    levels) and depth (meters) fields.
    """

    k_y: float = 2.0
    k_D: float = 2.0
    k_v: float = 1e-2
    k_w: float = 1e-5
    lambda_y: float = 1.0
    lambda_D: float = 5000.0

    def __post_init__(self):
        for name in ("k_y", "k_D", "k_v", "k_w", "lambda_y", "lambda_D"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val > 0):
                raise BadGains(f"gain {name}={val!r} must be strictly positive")


@dataclass(frozen=True)
class ObserverState:
    y_hat: np.ndarray
    D_hat: np.ndarray
    p_w_hat: np.ndarray
    p_v_hat: np.ndarray
    t: float = 0.0


@dataclass(frozen=True)
class LyapunovSample:
    V: float
    f: float
    t: float


def initial_state(y, D, p_w_hat=None, p_v_hat=None, t=0.0):
    z = np.zeros(3)
    return ObserverState(
        np.array(y, float),
        np.array(D, float),
        z.copy() if p_w_hat is None else np.asarray(p_w_hat, float).copy(),
        z.copy() if p_v_hat is None else np.asarray(p_v_hat, float).copy(),
        t,
    )


def advection_field(dirs, D, w, v):
    """``eta x (w + (1/D) eta x v)`` with ``1/D`` taken from the floored depth."""
    inv_d = 1.0 / np.maximum(D, INV_DEPTH_FLOOR)
    return np.cross(dirs, np.asarray(w, float) + inv_d[..., None] * np.cross(dirs, np.asarray(v, float)))


def chart_advection(grid, inv_d, w, v):
    """Chart components of ``eta x (w + inv_d eta x v)`` without forming the vectors.

    Uses ``c . (eta x w) = (c x eta) . w`` and ``c . (eta x (eta x v)) = -c . v``
    for tangent dual vectors ``c``.
    """
    (x_row, x_col), (c_row, c_col) = grid.dual_cross, grid.dual
    w = np.asarray(w, float)
    v = np.asarray(v, float)
    return x_row @ w - inv_d * (c_row @ v), x_col @ w - inv_d * (c_col @ v)


def transport_term(f, grid, A, scheme="upwind", stencil="sobel"):
    """Approximation of ``grad f . A`` on the grid."""
    a_row, a_col = chart_velocity(A, grid)
    return _transport(f, grid, a_row, a_col, scheme, stencil)


def _transport(f, grid, a_row, a_col, scheme="upwind", stencil="sobel"):
    if scheme == "upwind":
        return upwind_advection(f, grid, a_row, a_col)
    if scheme == "upwind3":
        return upwind3_advection(f, grid, a_row, a_col)
    d_row, d_col = chart_partials(f, grid, scheme)
    return d_row * a_row + d_col * a_col


def _check_finite(*arrays):
    for a in arrays:
        if not np.all(np.isfinite(a)):
            raise NonfiniteField("non-finite value in observer state (CFL violation?)")


def bias_rates(grid, dirs, D, y_err, D_err, grad_y, grad_D, gains):
    """Right-hand sides of the two bias-estimate equations (vector form).

    ``grad_y`` and ``grad_D`` are tangent vector fields.  The stepping code
    uses the equivalent chart form in :func:`_bias_rates_chart`.
    """
    inv_d = (1.0 / np.maximum(D, INV_DEPTH_FLOOR))[..., None]
    ey = gains.lambda_y * y_err[..., None]
    eD = gains.lambda_D * D_err[..., None]
    w_int = ey * np.cross(grad_y, dirs) + eD * np.cross(grad_D, dirs)
    v_int = (
        eD * dirs
        + ey * inv_d * np.cross(dirs, np.cross(dirs, grad_y))
        + eD * inv_d * np.cross(dirs, np.cross(dirs, grad_D))
    )
    return -gains.k_w * sphere_quadrature(w_int, grid), -gains.k_v * sphere_quadrature(v_int, grid)


def _bias_rates_chart(grid, inv_d, y_err, D_err, py, pD, gains):
    """Chart form of :func:`bias_rates`; ``py, pD`` are (row, col) partial pairs."""
    sy = gains.lambda_y * y_err * grid.weights
    sD = gains.lambda_D * D_err * grid.weights
    m_row = sy * py[0] + sD * pD[0]
    m_col = sy * py[1] + sD * pD[1]
    (x_row, x_col), (c_row, c_col) = grid.dual_cross, grid.dual
    w_int = np.tensordot(m_row, x_row, axes=2) + np.tensordot(m_col, x_col, axes=2)
    v_int = (
        np.tensordot(sD, grid.dirs, axes=2)
        - np.tensordot(inv_d * m_row, c_row, axes=2)
        - np.tensordot(inv_d * m_col, c_col, axes=2)
    )
    return -gains.k_w * w_int, -gains.k_v * v_int


def observer_step(state, y, D, wm, vm, gains, dt, grid, scheme="upwind", stencil="sobel", update_bias=True):
    """One explicit Euler step of the full-sphere observer.

    ``y, D`` are the measured fields on ``grid`` and ``wm, vm`` the measured
    (biased) angular and linear velocities.  Returns ``(new_state, cfl)``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    inv_d = 1.0 / np.maximum(D, INV_DEPTH_FLOOR)
    v_eff = np.asarray(vm, float) - state.p_v_hat
    a_row, a_col = chart_advection(grid, inv_d, np.asarray(wm, float) - state.p_w_hat, v_eff)
    cfl = cfl_number(grid, a_row, a_col, dt)
    if cfl > CFL_WARN:
        warnings.warn(f"CFL number {cfl:.2f} exceeds {CFL_WARN}", RuntimeWarning, stacklevel=2)

    y_err = state.y_hat - y
    D_err = state.D_hat - D
    dy = -_transport(state.y_hat, grid, a_row, a_col, scheme, stencil) - gains.k_y * y_err
    dD = -_transport(state.D_hat, grid, a_row, a_col, scheme, stencil) - grid.dirs @ v_eff - gains.k_D * D_err
    if update_bias:
        py = chart_partials(state.y_hat, grid, stencil)
        pD = chart_partials(state.D_hat, grid, stencil)
        dpw, dpv = _bias_rates_chart(grid, inv_d, y_err, D_err, py, pD, gains)
    else:
        dpw = dpv = np.zeros(3)

    new = ObserverState(
        state.y_hat + dt * dy,
        np.maximum(state.D_hat + dt * dD, DEPTH_FLOOR),
        state.p_w_hat + dt * dpw,
        state.p_v_hat + dt * dpv,
        state.t + dt,
    )
    _check_finite(new.y_hat, new.D_hat, new.p_w_hat, new.p_v_hat)
    return new, cfl


def observer_step_sphere(state, y_meas, D_meas, wm, vm, gains, dt, grid, **kw):
    """Euler step of the observer on a :class:`~biasobs.sphere.LatLongGrid`."""
    return observer_step(state, y_meas, D_meas, wm, vm, gains, dt, grid, **kw)[0]


def bias_loop_rate(f_hat, g_hat, D, grid, gains, weight=None):
    """Fastest rate of the bias correction loop (1/s).

    Largest eigenvalue of ``K^(1/2) M K^(1/2)`` with ``K = diag(k_w, k_v)``
    and ``M = int (lambda_y/k_y) J_y^T J_y + (lambda_D/k_D) J_D^T J_D``,
    where the columns of ``J`` are the field responses to unit rotation and
    translation biases.  Explicit Euler on the loop is stable for substeps
    below ``1 / rate``.  ``f_hat, g_hat`` are the brightness- and depth-type
    estimates; ``weight`` (a window) multiplies the depth source and the
    quadrature weights.
    """
    inv_d = 1.0 / np.maximum(D, INV_DEPTH_FLOOR)
    w = grid.weights if weight is None else grid.weights * weight
    src = grid.dirs if weight is None else grid.dirs * weight[..., None]
    M = np.zeros((6, 6))
    for f, lam_k, depth in ((f_hat, gains.lambda_y / gains.k_y, False), (g_hat, gains.lambda_D / gains.k_D, True)):
        d_row, d_col = chart_partials(f, grid)
        (x_row, x_col), (c_row, c_col) = grid.dual_cross, grid.dual
        J_rot = d_row[..., None] * x_row + d_col[..., None] * x_col
        J_tr = -(d_row[..., None] * c_row + d_col[..., None] * c_col) * inv_d[..., None]
        if depth:
            J_tr = J_tr + src
        J = np.concatenate([J_rot, J_tr], axis=-1).reshape(-1, 6)
        M += lam_k * (J.T * w.reshape(-1)) @ J
    s = np.sqrt(np.array([gains.k_w] * 3 + [gains.k_v] * 3))
    return float(np.linalg.eigvalsh(s[:, None] * M * s[None, :])[-1])


def substep_count(state, D, wm, vm, dt, grid, max_cfl=CFL_WARN, gains=None, weight=None, fields=None, scheme="upwind"):
    """Number of equal Euler substeps keeping the CFL number below ``max_cfl``.

    With ``gains`` given, the substep is also kept below ``0.9 / rate`` with
    ``rate`` from :func:`bias_loop_rate` on ``fields`` (default: the state's
    brightness and depth estimates).
    """
    inv_d = 1.0 / np.maximum(D, INV_DEPTH_FLOOR)
    a_row, a_col = chart_advection(grid, inv_d, np.asarray(wm) - state.p_w_hat, np.asarray(vm) - state.p_v_hat)
    c = cfl_number(grid, a_row, a_col, dt)
    n = max(1, int(np.ceil(c / max_cfl)))
    if gains is not None and scheme == "upwind3":
        # Euler growth of the third-order scheme is about 0.8 CFL_sub^3 per
        # step; keep it below 0.75 k h so the relaxation absorbs it
        k = min(gains.k_y, gains.k_D)
        n = max(n, int(np.ceil(np.sqrt(1.1 * c**3 / (k * dt)))))
    elif gains is not None and scheme != "upwind":
        # centered transport is neutral; the relaxation must absorb the
        # Euler growth: CFL_sub^2 <= k h (2 - k h)
        k = min(gains.k_y, gains.k_D)
        n = max(n, int(np.ceil(1.25 * c * c / (k * dt) + k * dt / 2)))
    if gains is not None:
        if fields is None:
            fields = (state.y_hat, state.D_hat)
        rate = bias_loop_rate(fields[0], fields[1], D, grid, gains, weight)
        n = max(n, int(np.ceil(dt * rate / 0.9)))
    return n


def advance(state, y, D, wm, vm, gains, dt, grid, max_cfl=CFL_WARN, **kw):
    """Advance by ``dt`` in equal Euler substeps limited by CFL and loop stiffness.

    Measurements are held over the interval.  Returns ``(state, cfl, n_sub)``
    where ``cfl`` is the largest substep CFL number.
    """
    n = substep_count(state, D, wm, vm, dt, grid, max_cfl, gains)
    h = dt / n
    cfl_max = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for _ in range(n):
            state, cfl = observer_step(state, y, D, wm, vm, gains, h, grid, **kw)
            cfl_max = max(cfl_max, cfl)
    return state, cfl_max, n


# ---------------------------------------------------------------------------
# Lyapunov diagnostics


def divergence_W(dirs, D, grad_D, v):
    """Pointwise divergence of ``eta x ((1/D) eta x v)``.

    ``(1/D) (2 eta.v - (grad D / D) . (eta x (eta x v)))``.
    """
    v = np.asarray(v, float)
    etav = dirs @ v
    proj = np.cross(dirs, np.cross(dirs, v))
    return (2.0 * etav - np.sum(grad_D * proj, axis=-1) / D) / D


def compute_L(D_seq, grad_D_seq, v_seq, dirs):
    """Sup over all samples of ``|div W|`` (1/s)."""
    L = 0.0
    for D, gD, v in zip(D_seq, grad_D_seq, v_seq):
        L = max(L, float(np.max(np.abs(divergence_W(dirs, D, gD, v)))))
    return L


def check_gain_condition(gains, L):
    """``(ok, margin)`` with ``margin = min(k_y, k_D) - L/2``."""
    if L < 0:
        raise ValueError("L must be non-negative")
    margin = min(gains.k_y, gains.k_D) - L / 2.0
    return margin > 0, margin


def lyapunov_value(state, y_meas, D_meas, true_bias, gains, grid, L=0.0):
    """Lyapunov function and its dissipation bound (uses ground-truth biases)."""
    y_err = state.y_hat - y_meas
    D_err = state.D_hat - D_meas
    pw_err = state.p_w_hat - true_bias.p_w
    pv_err = state.p_v_hat - true_bias.p_v
    field_part = 0.5 * sphere_quadrature(gains.lambda_y * y_err**2 + gains.lambda_D * D_err**2, grid)
    V = field_part + pw_err @ pw_err / (2 * gains.k_w) + pv_err @ pv_err / (2 * gains.k_v)
    ly = gains.lambda_y * (gains.k_y - L / 2.0)
    lD = gains.lambda_D * (gains.k_D - L / 2.0)
    f = sphere_quadrature(ly * y_err**2 + lD * D_err**2, grid)
    return LyapunovSample(float(V), float(f), state.t)
