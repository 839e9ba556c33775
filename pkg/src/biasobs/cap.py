"""Observer restricted to the field of view of a real camera.

The whole-sphere observer needs the fields everywhere; here it runs on the
windowed quantities ``X = phi y`` and ``Lambda = phi D`` where ``phi`` is a
smooth window equal to one in an inner rectangle ``K1`` and vanishing (with
its gradient) outside ``K2``.  Bias integrals run over the visible region only.
"""
from __future__ import annotations

import warnings
from dataclasses import dataclass

import numpy as np

from .errors import BadMargins
from .observer import (
    CFL_WARN,
    INV_DEPTH_FLOOR,
    LyapunovSample,
    _bias_rates_chart,
    _check_finite,
    _transport,
    advection_field,
    chart_advection,
    divergence_W,
    substep_count,
)
from .sphere import LatLongGrid, chart_gradient, chart_partials, cfl_number, sphere_quadrature

_trapz = getattr(np, "trapezoid", None) or np.trapz  # renamed in numpy 2


@dataclass(frozen=True)
class WindowFunction:
    phi: np.ndarray
    grad_phi: np.ndarray
    support: np.ndarray  # pixels where phi > 0 (interior of K2)
    K1_margin: float
    K2_margin: float
    dphi: tuple = None  # chart partials (row, col) of phi


@dataclass(frozen=True)
class CapObserverState:
    X_hat: np.ndarray
    L_hat: np.ndarray
    p_w_hat: np.ndarray
    p_v_hat: np.ndarray
    t: float = 0.0


def smoothstep(x):
    """Quintic ``6x^5 - 15x^4 + 10x^3`` clamped to [0, 1], and its derivative."""
    x = np.clip(x, 0.0, 1.0)
    return x**3 * (10 - 15 * x + 6 * x**2), 30 * x**2 * (1 - x) ** 2


def _edge_profile(coord, spacing, m1, m2):
    # distance (in chart units) from the nearer frame edge, measured from pixel centers
    lo, hi = coord[0], coord[-1]
    dist = np.minimum(coord - lo, hi - coord)
    sign = np.where(coord - lo <= hi - coord, 1.0, -1.0)
    width = (m1 - m2) * spacing
    s, ds = smoothstep((dist - m2 * spacing) / width)
    return s, sign * ds / width


def build_window(grid, K1_margin=None, K2_margin=None):
    """Separable quintic window on a pinhole grid.

    Margins are measured from the frame edge, as fractions of each frame
    dimension when below 1 and in pixels otherwise: ``phi = 0`` within
    ``K2_margin`` of an edge, ``phi = 1`` beyond ``K1_margin``.  Defaults are
    8% and 16%.
    """
    if K2_margin is None:
        K2_margin = 0.08
    if K1_margin is None:
        K1_margin = 0.16
    m2 = np.array([K2_margin * (grid.height - 1), K2_margin * (grid.width - 1)]) if K2_margin < 1 else np.array([K2_margin, K2_margin], float)
    m1 = np.array([K1_margin * (grid.height - 1), K1_margin * (grid.width - 1)]) if K1_margin < 1 else np.array([K1_margin, K1_margin], float)
    if not (np.all(m2 > 0) and np.all(m1 > m2)):
        raise BadMargins("need 0 < K2 margin < K1 margin (a boundary band is required)")
    if 2 * m1[0] >= grid.height - 1 or 2 * m1[1] >= grid.width - 1:
        raise BadMargins("K1 is empty for these margins")
    s_row, ds_row = _edge_profile(grid.z2, grid.spacing[0], m1[0], m2[0])
    s_col, ds_col = _edge_profile(grid.z1, grid.spacing[1], m1[1], m2[1])
    phi = np.outer(s_row, s_col)
    d_row = np.outer(ds_row, s_col)
    d_col = np.outer(s_row, ds_col)
    c_row, c_col = grid.dual
    grad = d_row[..., None] * c_row + d_col[..., None] * c_col
    return WindowFunction(phi, grad, phi > 0, float(K1_margin), float(K2_margin), (d_row, d_col))


def unit_window(grid):
    """``phi = 1`` everywhere (reduces the cap observer to the sphere observer)."""
    ones = np.ones(grid.shape)
    zero = np.zeros(grid.shape)
    return WindowFunction(ones, np.zeros(grid.shape + (3,)), ones > 0, 0.0, 0.0, (zero, zero))


def initial_cap_state(y, D, window, p_w_hat=None, p_v_hat=None, t=0.0):
    z = np.zeros(3)
    return CapObserverState(
        window.phi * y,
        window.phi * D,
        z.copy() if p_w_hat is None else np.asarray(p_w_hat, float).copy(),
        z.copy() if p_v_hat is None else np.asarray(p_v_hat, float).copy(),
        t,
    )


def observer_step_cap(state, y, D, window, wm, vm, gains, dt, grid, scheme="upwind", stencil="sobel"):
    """One explicit Euler step of the windowed observer.

    Gains are shared with the whole-sphere observer: ``k_X = k_y``,
    ``k_Lambda = k_D``, ``lambda_X = lambda_y``, ``lambda_Lambda = lambda_D``.
    On a pinhole grid, frame-edge ghosts copy the edge pixel, i.e. a zero
    normal derivative where the flow enters.  Returns ``(new_state, cfl)``.
    """
    if dt <= 0:
        raise ValueError("dt must be positive")
    phi = window.phi
    ph_row, ph_col = window.dphi
    inv_d = 1.0 / np.maximum(D, INV_DEPTH_FLOOR)
    v_eff = np.asarray(vm, float) - state.p_v_hat
    a_row, a_col = chart_advection(grid, inv_d, np.asarray(wm, float) - state.p_w_hat, v_eff)
    cfl = cfl_number(grid, a_row, a_col, dt)
    if cfl > CFL_WARN:
        warnings.warn(f"CFL number {cfl:.2f} exceeds {CFL_WARN}", RuntimeWarning, stacklevel=2)

    X_err = state.X_hat - phi * y
    L_err = state.L_hat - phi * D
    gphi_A = ph_row * a_row + ph_col * a_col
    dX = -_transport(state.X_hat, grid, a_row, a_col, scheme, stencil) + y * gphi_A - gains.k_y * X_err
    dL = (
        -_transport(state.L_hat, grid, a_row, a_col, scheme, stencil)
        + D * gphi_A
        - phi * (grid.dirs @ v_eff)
        - gains.k_D * L_err
    )

    # chart partials of grad X_hat - y grad phi and grad L_hat - D grad phi
    pX = chart_partials(state.X_hat, grid, stencil)
    pL = chart_partials(state.L_hat, grid, stencil)
    gX = (pX[0] - y * ph_row, pX[1] - y * ph_col)
    gL = (pL[0] - D * ph_row, pL[1] - D * ph_col)
    dpw, dpv = _bias_rates_chart(grid, inv_d, X_err, L_err, gX, gL, gains)

    outside = ~window.support
    X_new = state.X_hat + dt * dX
    L_new = state.L_hat + dt * dL
    X_new[outside] = 0.0
    L_new[outside] = 0.0
    new = CapObserverState(X_new, L_new, state.p_w_hat + dt * dpw, state.p_v_hat + dt * dpv, state.t + dt)
    _check_finite(new.X_hat, new.L_hat, new.p_w_hat, new.p_v_hat)
    return new, cfl


def advance_cap(state, y, D, window, wm, vm, gains, dt, grid, max_cfl=CFL_WARN, **kw):
    """Advance the cap observer by ``dt`` in stability-limited Euler substeps.

    Returns ``(state, cfl, n_substeps)``.
    """
    n = substep_count(state, D, wm, vm, dt, grid, max_cfl, gains, window.phi, (state.X_hat, state.L_hat))
    h = dt / n
    cfl_max = 0.0
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        for _ in range(n):
            state, cfl = observer_step_cap(state, y, D, window, wm, vm, gains, h, grid, **kw)
            cfl_max = max(cfl_max, cfl)
    return state, cfl_max, n


def _edge_line_integral(grid, F, W):
    """``oint F (W . n) dl`` over the frame boundary (trapezoid rule)."""
    if isinstance(grid, LatLongGrid):
        return 0.0
    e_row, e_col = grid.basis
    c_row, c_col = grid.dual
    total = 0.0
    # left/right edges run along z2; normal is -/+ c_col
    for col, sgn in ((0, -1.0), (-1, 1.0)):
        n = sgn * c_col[:, col] / np.linalg.norm(c_col[:, col], axis=-1, keepdims=True)
        integrand = F[:, col] * np.sum(W[:, col] * n, axis=-1) * np.linalg.norm(e_row[:, col], axis=-1)
        total += _trapz(integrand, dx=grid.spacing[0])
    for row, sgn in ((0, -1.0), (-1, 1.0)):
        n = sgn * c_row[row] / np.linalg.norm(c_row[row], axis=-1, keepdims=True)
        integrand = F[row] * np.sum(W[row] * n, axis=-1) * np.linalg.norm(e_col[row], axis=-1)
        total += _trapz(integrand, dx=grid.spacing[1])
    return float(total)


def cap_lyapunov(state, y, D, window, true_bias, gains, true_twist, grid, stencil="sobel"):
    """Cap Lyapunov function, interior dissipation and boundary term.

    Returns ``(LyapunovSample, boundary_term)`` where the boundary term is
    ``-oint (lambda_X X~^2 + lambda_L L~^2) (W/2) . n dl`` with the true
    advection field ``W``.
    """
    X_err = state.X_hat - window.phi * y
    L_err = state.L_hat - window.phi * D
    pw_err = state.p_w_hat - true_bias.p_w
    pv_err = state.p_v_hat - true_bias.p_v
    energy = gains.lambda_y * X_err**2 + gains.lambda_D * L_err**2
    V = 0.5 * sphere_quadrature(energy, grid) + pw_err @ pw_err / (2 * gains.k_w) + pv_err @ pv_err / (2 * gains.k_v)
    grad_D = chart_gradient(D, grid, stencil)
    divW = divergence_W(grid.dirs, D, grad_D, true_twist.v)
    f = sphere_quadrature(
        gains.lambda_y * (gains.k_y - divW / 2) * X_err**2 + gains.lambda_D * (gains.k_D - divW / 2) * L_err**2, grid
    )
    W = advection_field(grid.dirs, D, true_twist.w, true_twist.v)
    boundary = -0.5 * _edge_line_integral(grid, energy, W)
    return LyapunovSample(float(V), float(f), state.t), boundary
