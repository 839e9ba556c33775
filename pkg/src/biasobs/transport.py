"""Transport equations for brightness and depth, and a characteristics solver.

For a camera moving with body twist ``(v, w)`` the rendered fields satisfy

    d_t y = -grad y . (eta x (w + (1/D) eta x v))
    d_t D = -grad D . (eta x (w + (1/D) eta x v)) - v . eta

:func:`pde_residual` evaluates these on a frame sequence.  The observer's
field equations are linear transport with relaxation, so along the curves

    d eta/dt = eta x (w_m - p_w_hat + (1/D) eta x (v_m - p_v_hat))

they reduce to scalar ODEs with explicit solutions.  That gives an
independent reference for the grid schemes.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import InsufficientFrames, LeftDomain
from .sphere import chart_gradient



@dataclass(frozen=True)
class CharacteristicPath:
    times: np.ndarray
    eta: np.ndarray  # (n_steps + 1, ..., 3)

    @property
    def t0(self):
        return float(self.times[0])

    @property
    def t1(self):
        return float(self.times[-1])


def flow_field(dirs, D, twist, include_rotation=True):
    """``eta x (w + (1/D) eta x v)``; drop ``w`` to get the Lyapunov field."""
    dirs = np.asarray(dirs, float)
    inner = np.cross(dirs, twist.v) / np.asarray(D, float)[..., None]
    if include_rotation:
        inner = inner + twist.w
    return np.cross(dirs, inner)


def pde_residual(f_seq, twist_seq, D_seq, grid, t_index, dt, depth=False, stencil="sobel"):
    """Per-pixel residual of the transport equation at frame ``t_index``.

    Time derivative by central difference over frames ``t_index -/+ 1``.
    ``depth=True`` adds the ``v . eta`` source of the depth equation.
    """
    if t_index < 1 or t_index + 1 >= len(f_seq):
        raise InsufficientFrames(f"need frames {t_index - 1}..{t_index + 1}, have {len(f_seq)}")
    f = np.asarray(f_seq[t_index], float)
    tw = twist_seq[t_index]
    dfdt = (np.asarray(f_seq[t_index + 1], float) - np.asarray(f_seq[t_index - 1], float)) / (2 * dt)
    W = flow_field(grid.dirs, D_seq[t_index], tw)
    r = dfdt + np.sum(chart_gradient(f, grid, stencil) * W, axis=-1)
    if depth:
        r = r + grid.dirs @ tw.v
    return r


def smooth_mask(patch_seq, t_index, radius=1):
    """Pixels whose ``radius`` neighborhood sees one surface patch in frames
    ``t_index -/+ 1``.  The transport equations hold classically only there;
    stencils straddling a crease of the surface pick up O(1) errors.
    """
    stack = np.asarray(patch_seq[t_index - 1 : t_index + 2])
    ref = stack[1]
    H, W = ref.shape
    pad = np.pad(stack, ((0, 0), (radius, radius), (radius, radius)), mode="edge")
    ok = np.ones((H, W), bool)
    for i in range(2 * radius + 1):
        for j in range(2 * radius + 1):
            ok &= np.all(pad[:, i : i + H, j : j + W] == ref, axis=0)
    return ok


def _as_fn(x):
    if callable(x):
        return x
    c = np.asarray(x, float)
    return lambda t: c


def characteristic_flow(eta0, t0, t1, wm, vm, bias_hat, depth, n_steps=100):
    """RK4 path of the bias-corrected advection field from ``t0`` to ``t1``.

    ``wm, vm`` are 3-vectors or callables of time.  ``bias_hat`` is a
    :class:`~biasobs.kinematics.BiasPair` or a callable returning one.
    ``depth(t, eta)`` returns the depth along ``eta`` (any leading shape) and
    NaN where it is unknown; a path reaching such a point raises
    :class:`LeftDomain`.  ``t1 < t0`` integrates backward.
    """
    wm, vm = _as_fn(wm), _as_fn(vm)
    bias_fn = bias_hat if callable(bias_hat) else (lambda t: bias_hat)
    h = (t1 - t0) / n_steps

    def rhs(t, eta):
        b = bias_fn(t)
        D = depth(t, eta)
        if np.any(~np.isfinite(D)):
            raise LeftDomain(f"characteristic left the known-depth domain at t={t:.6g}")
        return np.cross(eta, wm(t) - b.p_w + np.cross(eta, vm(t) - b.p_v) / np.asarray(D)[..., None])

    eta = np.asarray(eta0, float)
    eta = eta / np.linalg.norm(eta, axis=-1, keepdims=True)
    out = [eta]
    times = t0 + h * np.arange(n_steps + 1)
    for k in range(n_steps):
        t = times[k]
        k1 = rhs(t, eta)
        k2 = rhs(t + h / 2, eta + h / 2 * k1)
        k3 = rhs(t + h / 2, eta + h / 2 * k2)
        k4 = rhs(t + h, eta + h * k3)
        eta = eta + h / 6 * (k1 + 2 * k2 + 2 * k3 + k4)
        eta = eta / np.linalg.norm(eta, axis=-1, keepdims=True)
        out.append(eta)
    return CharacteristicPath(times, np.array(out))


def _relaxation_integral(g, taus, k, t):
    """``int k exp(k (tau - t)) g(tau) dtau`` with ``g`` piecewise linear in ``tau``.

    The kernel is integrated exactly on each interval, so constant and
    linear sources are reproduced to rounding.  ``taus`` must increase.
    """
    E = np.exp(k * (taus - t))
    ga, gb = g[:-1], g[1:]
    Ea, Eb = E[:-1, None], E[1:, None]
    dt = np.diff(taus)[:, None]
    return np.sum(Eb * gb - Ea * ga - (gb - ga) / dt * (Eb - Ea) / k, axis=0)


def characteristics_reference_solution(
    f0, source, t, k, wm, vm, bias_hat, depth, eta, n_steps=100, depth_field=False
):
    """Explicit solution of the observer's field equation at time ``t``.

    ``f0(eta)`` is the initial estimate, ``source(tau, eta)`` the measured
    field it relaxes toward with rate ``k``.  With ``depth_field=True`` the
    ``-(v_m - p_v_hat) . eta`` source of the depth estimate is added.
    Pixels whose backward characteristic leaves the domain of ``depth``,
    ``f0`` or ``source`` are returned as NaN.
    """
    if k <= 0:
        raise ValueError("k must be positive")
    eta = np.asarray(eta, float)
    flat = eta.reshape(-1, 3)
    out = np.full(flat.shape[0], np.nan)
    valid = np.ones(flat.shape[0], bool)

    def masked_depth(tau, e):
        D = np.asarray(depth(tau, e), float)
        return np.where(np.isfinite(D), D, 1.0)

    # trace all paths once; invalid ones are tracked per pixel
    path = characteristic_flow(flat, t, 0.0, wm, vm, bias_hat, masked_depth, n_steps)
    taus = path.times
    vm_fn = _as_fn(vm)
    bias_fn = bias_hat if callable(bias_hat) else (lambda s: bias_hat)
    # relaxation target along the path: source, plus the depth source scaled by 1/k
    target = np.empty((len(taus), flat.shape[0]))
    for j, tau in enumerate(taus):
        e = path.eta[j]
        valid &= np.isfinite(np.asarray(depth(tau, e), float))
        g = np.asarray(source(tau, e), float)
        if depth_field:
            g = g - e @ (vm_fn(tau) - bias_fn(tau).p_v) / k
        valid &= np.isfinite(g)
        target[j] = g
    start = np.asarray(f0(path.eta[-1]), float)
    valid &= np.isfinite(start)
    # path.times runs from t down to 0; integrate in increasing time
    integral = _relaxation_integral(target[::-1], taus[::-1], k, t)
    res = start * np.exp(-k * t) + integral
    out[valid] = res[valid]
    return out.reshape(eta.shape[:-1])


def rotation_path(eta0, omega, t):
    """Closed-form path under constant effective rotation ``omega``.

    ``d eta/dt = eta x omega`` is rotation by ``-omega t`` (Rodrigues).
    """
    omega = np.asarray(omega, float)
    n = np.linalg.norm(omega)
    eta0 = np.asarray(eta0, float)
    if n == 0:
        return eta0.copy()
    a = -omega / n
    th = n * t
    return (
        eta0 * np.cos(th)
        + np.cross(a, eta0) * np.sin(th)
        + np.outer(eta0 @ a, a).reshape(eta0.shape) * (1 - np.cos(th))
    )
