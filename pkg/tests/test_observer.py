import warnings

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from biasobs import observer as obs
from biasobs.errors import BadGains, NonfiniteField
from biasobs.kinematics import BiasPair, look_pose
from biasobs.scene import make_room_scene, make_sphere_scene, render
from biasobs.sphere import LatLongGrid, PinholeGrid, chart_gradient, chart_partials, chart_velocity, divergence

small3 = arrays(np.float64, 3, elements=st.floats(-1, 1))


@pytest.fixture(scope="module")
def room_frame():
    grid = PinholeGrid(40, 30, np.radians(50), np.radians(40))
    scene = make_room_scene((8.0, 6.0, 3.0), 100.0, 1.0, 1.0)
    y, D = render(scene, look_pose(np.array([0.2, -0.3, 0.1]), (1, 0.3, -0.2)), grid)
    return grid, y, D


@pytest.mark.parametrize("name", ["k_y", "k_D", "k_v", "k_w", "lambda_y", "lambda_D"])
def test_gains_must_be_positive(name):
    with pytest.raises(BadGains):
        obs.ObserverGains(**{name: 0.0})
    with pytest.raises(BadGains):
        obs.ObserverGains(**{name: np.inf})


@settings(max_examples=25, deadline=None)
@given(small3, small3)
def test_chart_advection_matches_vector_field(w, v):
    grid = PinholeGrid(12, 9, np.radians(50), np.radians(40))
    D = 1.0 + grid.dirs[..., 0] ** 2
    A = obs.advection_field(grid.dirs, D, w, v)
    a_row, a_col = obs.chart_advection(grid, 1.0 / D, w, v)
    r, c = chart_velocity(A, grid)
    assert np.allclose(a_row, r, atol=1e-12) and np.allclose(a_col, c, atol=1e-12)


def test_bias_rates_chart_matches_vector_form(room_frame):
    grid, y, D = room_frame
    rng = np.random.default_rng(3)
    y_hat = y + rng.normal(0, 5, y.shape)
    D_hat = D + rng.normal(0, 0.05, D.shape)
    gains = obs.ObserverGains()
    ref = obs.bias_rates(
        grid, grid.dirs, D, y_hat - y, D_hat - D, chart_gradient(y_hat, grid), chart_gradient(D_hat, grid), gains
    )
    inv_d = 1.0 / np.maximum(D, obs.INV_DEPTH_FLOOR)
    got = obs._bias_rates_chart(
        grid, inv_d, y_hat - y, D_hat - D, chart_partials(y_hat, grid), chart_partials(D_hat, grid), gains
    )
    for a, b in zip(ref, got):
        assert np.allclose(a, b, rtol=1e-10, atol=1e-14)


def test_exact_init_keeps_bias_estimates_at_zero(room_frame):
    grid, y, D = room_frame
    st0 = obs.initial_state(y, D)
    new, _ = obs.observer_step(st0, y, D, np.zeros(3), np.zeros(3), obs.ObserverGains(), 0.01, grid)
    assert np.array_equal(new.p_w_hat, np.zeros(3)) and np.array_equal(new.p_v_hat, np.zeros(3))
    # static camera, exact fields: nothing moves
    assert np.array_equal(new.y_hat, y) and np.array_equal(new.D_hat, D)


def test_nonfinite_input_raises(room_frame):
    grid, y, D = room_frame
    bad = y.copy()
    bad[3, 4] = np.nan
    with pytest.raises(NonfiniteField):
        obs.observer_step(obs.initial_state(y, D), bad, D, np.zeros(3), np.zeros(3), obs.ObserverGains(), 0.01, grid)


def test_cfl_warning(room_frame):
    grid, y, D = room_frame
    with pytest.warns(RuntimeWarning, match="CFL"):
        obs.observer_step(obs.initial_state(y, D), y, D, np.array([0, 3.0, 0]), np.zeros(3), obs.ObserverGains(), 0.05, grid)


def test_substeps_respect_cfl(room_frame):
    grid, y, D = room_frame
    st0 = obs.initial_state(y, D)
    wm, vm = np.array([0.0, 0.3, 0.1]), np.array([0.5, 0.0, 0.2])
    n = obs.substep_count(st0, D, wm, vm, 1 / 42, grid, 0.5)
    inv_d = 1 / np.maximum(D, obs.INV_DEPTH_FLOOR)
    from biasobs.sphere import cfl_number

    assert cfl_number(grid, *obs.chart_advection(grid, inv_d, wm, vm), 1 / 42 / n) <= 0.5
    gains = obs.ObserverGains()
    n_stiff = obs.substep_count(st0, D, wm, vm, 1 / 42, grid, 0.5, gains)
    rate = obs.bias_loop_rate(y, D, D, grid, gains)
    assert (1 / 42 / n_stiff) * rate <= 0.9 + 1e-12
    assert obs.substep_count(st0, D, wm, vm, 1 / 42, grid, 0.5, gains, scheme="upwind3") >= n_stiff


def test_bias_loop_rate_is_largest_eigenvalue(room_frame):
    # brute force: bias rates are linear in the field errors produced by a unit bias
    grid, y, D = room_frame
    gains = obs.ObserverGains()
    rate = obs.bias_loop_rate(y, D, D, grid, gains)
    inv_d = 1.0 / np.maximum(D, obs.INV_DEPTH_FLOOR)
    py, pD = chart_partials(y, grid), chart_partials(D, grid)
    cols = []
    for i in range(6):
        e = np.zeros(3)
        e[i % 3] = 1.0
        w, v = (e, np.zeros(3)) if i < 3 else (np.zeros(3), e)
        a_row, a_col = obs.chart_advection(grid, inv_d, w, v)
        # quasi-static field errors for a bias step: -(J b) / k
        ey = -(py[0] * a_row + py[1] * a_col) / gains.k_y
        eD = -(pD[0] * a_row + pD[1] * a_col + grid.dirs @ v) / gains.k_D
        dpw, dpv = obs._bias_rates_chart(grid, inv_d, ey, eD, py, pD, gains)
        cols.append(np.concatenate([dpw, dpv]))
    # an estimate error of -e produces the rate column; this is the decay-rate matrix
    M = np.array(cols).T
    assert np.max(np.real(np.linalg.eigvals(M))) == pytest.approx(rate, rel=1e-8)


def test_divergence_W_matches_discrete_divergence():
    scene = make_sphere_scene(2.0)
    v = np.array([0.2, -0.3, 0.4])
    errs = []
    for n in (32, 64):
        grid = LatLongGrid(n, 2 * n)
        _, D = render(scene, look_pose(np.array([0.3, 0.1, -0.2]), (1, 0, 0)), grid)
        W = np.cross(grid.dirs, np.cross(grid.dirs, v) / D[..., None])
        exact = obs.divergence_W(grid.dirs, D, chart_gradient(D, grid, "central"), v)
        band = np.abs(np.cos(grid.theta)) < 0.9  # the lat-long chart is singular at the poles
        errs.append(np.max(np.abs(divergence(W, grid) - exact)[band]))
    assert errs[1] < errs[0] / 3


def test_gain_condition():
    ok, margin = obs.check_gain_condition(obs.ObserverGains(k_y=2.0, k_D=3.0), 1.0)
    assert ok and margin == pytest.approx(1.5)
    assert not obs.check_gain_condition(obs.ObserverGains(), 5.0)[0]
    with pytest.raises(ValueError):
        obs.check_gain_condition(obs.ObserverGains(), -1.0)


def test_lyapunov_value_bias_part():
    grid = LatLongGrid(8, 16)
    y = np.full(grid.shape, 100.0)
    D = np.full(grid.shape, 2.0)
    gains = obs.ObserverGains()
    st0 = obs.initial_state(y, D, p_w_hat=[0.05, 0, 0], p_v_hat=[2.5, 0, 0])
    lv = obs.lyapunov_value(st0, y, D, BiasPair(), gains, grid)
    assert lv.V == pytest.approx(0.05**2 / (2 * 1e-5) + 2.5**2 / (2 * 1e-2))
    assert lv.f == 0.0


def test_compute_L_sphere_center():
    # from the center of a sphere, div W = 2 eta.v / R
    grid = LatLongGrid(16, 32)
    D = np.full(grid.shape, 2.0)
    v = np.array([0.0, 0.0, 0.4])
    L = obs.compute_L([D], [np.zeros(grid.shape + (3,))], [v], grid.dirs)
    assert L == pytest.approx(2 * 0.4 * np.max(np.abs(grid.dirs[..., 2])) / 2.0)


def test_advance_converges_on_static_sphere():
    # whole-sphere observer, camera off-center and still, measured twist carries the bias
    grid = LatLongGrid(24, 48)
    scene = make_sphere_scene(2.0, texture=lambda p: 128.5 + 60 * np.sin(2 * p[..., 0]) * np.cos(1.5 * p[..., 2]))
    y, D = render(scene, look_pose(np.array([0.3, -0.2, 0.1]), (1, 0, 0)), grid)
    bias = BiasPair((0.3, 0.0, 0.0), (0.0, 0.0, 0.0))
    gains = obs.ObserverGains(k_v=0.05)
    st = obs.initial_state(y, D)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        errs = []
        for _ in range(160):
            st, _, _ = obs.advance(st, y, D, bias.p_w, bias.p_v, gains, 0.05, grid)
            errs.append(np.linalg.norm(st.p_v_hat - bias.p_v))
    assert np.mean(errs[-40:]) < 0.1 * 0.3
