"""Stationary motions of a scene.

A constant motion ``(p_w, p_v)`` is stationary for a frame ``(y, D)`` when

    grad D . eta x (p_w + (1/D) eta x p_v) + eta . p_v = 0
    grad y . eta x (p_w + (1/D) eta x p_v) = 0

everywhere.  A nonzero stationary motion is a bias the observer cannot see.
Only scenes with a rotation axis admit one, so the minimized residual
separates axisymmetric scenes from generic ones.

Both residuals are linear in ``x = (p_w, p_v / d_ref)``.  The weighted mean
square residual is therefore a quadratic form ``x^T G x`` and its minimum on
the unit sphere is the smallest eigenpair of the 6x6 matrix ``G``.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .sphere import LatLongGrid, chart_gradient, sphere_quadrature

DEFAULT_WEIGHTS = (1.0, 5000.0)  # (lambda_y, lambda_D), the observer's defaults


@dataclass(frozen=True)
class StationaryCandidate:
    p_w: np.ndarray
    p_v: np.ndarray
    residual_rms: float
    normalized: bool = True
    degenerate: bool = False  # minimizer not unique (second eigenvalue as small)
    conjectural: bool = False  # computed on a cap rather than the whole sphere

    def __post_init__(self):
        if not self.residual_rms >= 0:
            raise ValueError("residual_rms must be non-negative")


def stationarity_residual(y, D, grid, p_w, p_v, stencil="sobel"):
    """Per-sample left-hand sides ``(r_y, r_D)`` of the stationarity equations."""
    p_w = np.asarray(p_w, float)
    p_v = np.asarray(p_v, float)
    eta = grid.dirs
    inner = p_w + np.cross(eta, p_v) / np.asarray(D, float)[..., None]
    flow = np.cross(eta, inner)
    r_y = np.sum(chart_gradient(y, grid, stencil) * flow, axis=-1)
    r_D = np.sum(chart_gradient(D, grid, stencil) * flow, axis=-1) + eta @ p_v
    return r_y, r_D


def residual_rms(r_y, r_D, grid, weights=DEFAULT_WEIGHTS):
    """Area-weighted RMS of ``lambda_y r_y^2 + lambda_D r_D^2``."""
    lam_y, lam_D = weights
    area = sphere_quadrature(np.ones(grid.shape), grid)
    ms = sphere_quadrature(lam_y * r_y**2 + lam_D * r_D**2, grid) / area
    return float(np.sqrt(max(ms, 0.0)))


def _basis_residuals(y, D, grid, d_ref, stencil):
    gy = chart_gradient(y, grid, stencil)
    gD = chart_gradient(D, grid, stencil)
    eta = grid.dirs
    inv_d = 1.0 / np.asarray(D, float)
    rys, rDs = [], []
    for i in range(6):
        e = np.zeros(3)
        e[i % 3] = 1.0
        if i < 3:
            flow = np.cross(eta, e)
            src = 0.0
        else:
            # p_v = d_ref e
            flow = d_ref * inv_d[..., None] * np.cross(eta, np.cross(eta, e))
            src = d_ref * eta[..., i - 3]
        rys.append(np.sum(gy * flow, axis=-1))
        rDs.append(np.sum(gD * flow, axis=-1) + src)
    return np.array(rys), np.array(rDs)


def residual_gram(y, D, grid, d_ref, weights=DEFAULT_WEIGHTS, stencil="sobel"):
    """6x6 matrix ``G`` with ``residual_rms(x)^2 = x^T G x`` for ``x = (p_w, p_v/d_ref)``."""
    lam_y, lam_D = weights
    ry, rD = _basis_residuals(y, D, grid, d_ref, stencil)
    w = grid.weights / np.sum(grid.weights)
    G = lam_y * np.einsum("ihw,jhw,hw->ij", ry, ry, w) + lam_D * np.einsum("ihw,jhw,hw->ij", rD, rD, w)
    return 0.5 * (G + G.T)


def find_stationary_motion(y, D, grid, d_ref=None, weights=DEFAULT_WEIGHTS, stencil="sobel", degenerate_ratio=1.5):
    """Best unit-norm stationary-motion candidate for one frame.

    ``d_ref`` defaults to the mean depth.  The candidate is normalized so
    that ``|(p_w, p_v / d_ref)| = 1`` (sign fixed by the largest component).
    ``degenerate`` is set when the second smallest eigenvalue is within
    ``degenerate_ratio`` of the smallest, i.e. the minimizer is not unique.
    """
    if d_ref is None:
        d_ref = float(sphere_quadrature(D, grid) / sphere_quadrature(np.ones(grid.shape), grid))
    G = residual_gram(y, D, grid, d_ref, weights, stencil)
    ev, V = np.linalg.eigh(G)
    x = V[:, 0]
    x = x * np.sign(x[np.argmax(np.abs(x))])
    ev = np.maximum(ev, 0.0)
    degenerate = bool(ev[1] <= degenerate_ratio * ev[0]) if ev[1] > 0 else True
    return StationaryCandidate(
        x[:3].copy(),
        d_ref * x[3:].copy(),
        float(np.sqrt(ev[0])),
        True,
        degenerate,
        not isinstance(grid, LatLongGrid),
    )


def candidate_directions(n_az=12, n_el=7):
    """Deterministic spread of unit vectors on the 5-sphere for coarse searches.

    Products of a 3-sphere-like sampling would be huge; instead a fixed
    Gaussian sample is normalized, which covers S^5 evenly on average.
    """
    rng = np.random.default_rng(12345)
    x = rng.standard_normal((n_az * n_el * 10, 6))
    x /= np.linalg.norm(x, axis=1, keepdims=True)
    return np.concatenate([np.eye(6), -np.eye(6), x])


def coarse_search(y, D, grid, d_ref, candidates=None, weights=DEFAULT_WEIGHTS, stencil="sobel", refine=True):
    """Direct residual minimization over sampled unit candidates.

    Evaluates :func:`stationarity_residual` on each candidate and, with
    ``refine``, polishes the best one by a Nelder-Mead simplex on the
    sphere chart.  Slower than :func:`find_stationary_motion` but it never
    forms the quadratic form, so it serves as a cross-check.  Returns the
    candidate plus the ``(x, rms)`` table of evaluated samples.
    """
    if candidates is None:
        candidates = candidate_directions()

    def rms(x):
        x = np.asarray(x, float)
        x = x / np.linalg.norm(x)
        r_y, r_D = stationarity_residual(y, D, grid, x[:3], d_ref * x[3:], stencil)
        return residual_rms(r_y, r_D, grid, weights)

    table = np.array([rms(x) for x in candidates])
    best = candidates[int(np.argmin(table))]
    if refine:
        best = _nelder_mead(rms, best)
    best = best / np.linalg.norm(best)
    best = best * np.sign(best[np.argmax(np.abs(best))])
    cand = StationaryCandidate(best[:3].copy(), d_ref * best[3:].copy(), rms(best), True, False,
                               not isinstance(grid, LatLongGrid))
    return cand, (np.asarray(candidates), table)


def _nelder_mead(fn, x0, step=0.2, iters=400, tol=1e-10):
    # plain Nelder-Mead in R^6; fn normalizes, so this searches the sphere chart
    n = len(x0)
    simplex = [np.asarray(x0, float)]
    for i in range(n):
        p = simplex[0].copy()
        p[i] += step
        simplex.append(p)
    vals = [fn(p) for p in simplex]
    for _ in range(iters):
        order = np.argsort(vals)
        simplex = [simplex[i] for i in order]
        vals = [vals[i] for i in order]
        if vals[-1] - vals[0] < tol:
            break
        c = np.mean(simplex[:-1], axis=0)
        xr = c + (c - simplex[-1])
        fr = fn(xr)
        if fr < vals[0]:
            xe = c + 2 * (c - simplex[-1])
            fe = fn(xe)
            simplex[-1], vals[-1] = (xe, fe) if fe < fr else (xr, fr)
        elif fr < vals[-2]:
            simplex[-1], vals[-1] = xr, fr
        else:
            xc = c + 0.5 * (simplex[-1] - c)
            fc = fn(xc)
            if fc < vals[-1]:
                simplex[-1], vals[-1] = xc, fc
            else:
                simplex = [simplex[0] + 0.5 * (p - simplex[0]) for p in simplex]
                vals = [fn(p) for p in simplex]
    return simplex[int(np.argmin(vals))]


def orthogonality_identity_check(D, grid, p_w, p_v, eps=1e-12):
    """Normalized moment ``(p_v . p_w) int D^3 / (|p_v| |p_w| int D^3)``.

    Vanishes for exact stationary motions.  Returns 0 when either vector
    is (numerically) zero.
    """
    p_w = np.asarray(p_w, float)
    p_v = np.asarray(p_v, float)
    nw, nv = np.linalg.norm(p_w), np.linalg.norm(p_v)
    m3 = sphere_quadrature(np.asarray(D, float) ** 3, grid)
    denom = nw * nv * m3
    if nw <= eps or nv <= eps or denom <= 0:
        return 0.0
    return float(abs(p_v @ p_w) * m3 / denom)


def classify_scene(y, D, grid, baseline_rms, margin=5.0, **kw):
    """Report (never a verdict) comparing the minimized residual to a baseline.

    ``baseline_rms`` is the minimized residual of a reference frame (e.g. the
    same scene with a rotated texture).  Returns ``(candidate, ratio, label)``.
    """
    cand = find_stationary_motion(y, D, grid, **kw)
    ratio = cand.residual_rms / baseline_rms if baseline_rms > 0 else np.inf
    label = "observable" if ratio > margin else "possibly unobservable"
    if cand.conjectural:
        label += " (cap fields: conjectural)"
    return cand, ratio, label
