import numpy as np
import pytest

from biasobs import cap as capmod
from biasobs import observer as obs
from biasobs.errors import BadMargins
from biasobs.kinematics import BiasPair, BodyTwist, look_pose
from biasobs.scene import make_room_scene, render
from biasobs.sphere import PinholeGrid, chart_partials


@pytest.fixture(scope="module")
def frame():
    grid = PinholeGrid(48, 36, np.radians(50), np.radians(40))
    scene = make_room_scene((8.0, 6.0, 3.0), 100.0, 1.0, 1.0)
    y, D = render(scene, look_pose(np.array([0.2, -0.3, 0.1]), (1, 0.3, -0.2)), grid)
    return grid, y, D


def test_smoothstep_endpoints():
    s, ds = capmod.smoothstep(np.array([-1.0, 0.0, 0.5, 1.0, 2.0]))
    assert np.array_equal(s, [0.0, 0.0, 0.5, 1.0, 1.0])
    assert np.array_equal(ds, [0.0, 0.0, 1.875, 0.0, 0.0])


def test_window_regions(frame):
    grid, _, _ = frame
    win = capmod.build_window(grid, 0.2, 0.1)
    H, W = grid.shape
    assert win.phi.min() == 0.0 and win.phi.max() == 1.0
    # K1: beyond 20% of the frame from each edge
    r0, c0 = int(np.ceil(0.2 * (H - 1))), int(np.ceil(0.2 * (W - 1)))
    assert np.all(win.phi[r0 : H - r0, c0 : W - c0] == 1.0)
    assert np.all(win.phi[0] == 0.0) and np.all(win.phi[:, -1] == 0.0)
    assert np.array_equal(win.support, win.phi > 0)


def test_window_gradient_matches_finite_differences():
    # central differences of phi approach the analytic partials at second order
    errs = []
    for w in (48, 96):
        grid = PinholeGrid(w, w * 3 // 4, np.radians(50), np.radians(40))
        win = capmod.build_window(grid, 0.3, 0.1)
        d_row, d_col = chart_partials(win.phi, grid, "central")
        inner = (slice(1, -1), slice(1, -1))
        errs.append(max(np.max(np.abs(d_row - win.dphi[0])[inner]), np.max(np.abs(d_col - win.dphi[1])[inner])))
        assert np.max(np.abs(np.sum(win.grad_phi * grid.dirs, axis=-1))) < 1e-12
    assert errs[1] < errs[0] / 3.0


@pytest.mark.parametrize("m1, m2", [(0.1, 0.2), (0.1, 0.0), (0.6, 0.1)])
def test_bad_margins(frame, m1, m2):
    grid, _, _ = frame
    with pytest.raises(BadMargins):
        capmod.build_window(grid, m1, m2)


def test_pixel_margins(frame):
    grid, _, _ = frame
    win = capmod.build_window(grid, 8, 3)
    assert np.all(win.phi[:3] == 0) and np.allclose(win.phi[8:-8, 8:-8], 1.0, atol=1e-12)


def test_unit_window_reduces_to_sphere_observer(frame):
    grid, y, D = frame
    rng = np.random.default_rng(0)
    y_hat = y + rng.normal(0, 3, y.shape)
    D_hat = D + rng.normal(0, 0.02, D.shape)
    gains = obs.ObserverGains()
    wm, vm = np.array([0.05, -0.1, 0.02]), np.array([0.3, 0.1, -0.2])
    s1 = obs.ObserverState(y_hat, D_hat, np.array([0.01, 0, 0]), np.array([0.1, 0, 0]))
    s2 = capmod.CapObserverState(y_hat, D_hat, s1.p_w_hat, s1.p_v_hat)
    win = capmod.unit_window(grid)
    a, _ = obs.observer_step(s1, y, D, wm, vm, gains, 0.002, grid)
    b, _ = capmod.observer_step_cap(s2, y, D, win, wm, vm, gains, 0.002, grid)
    assert np.allclose(a.y_hat, b.X_hat, atol=1e-12) and np.allclose(a.D_hat, b.L_hat, atol=1e-12)
    assert np.allclose(a.p_w_hat, b.p_w_hat, atol=1e-15) and np.allclose(a.p_v_hat, b.p_v_hat, atol=1e-14)


def test_exact_init_fixed_point(frame):
    grid, y, D = frame
    win = capmod.build_window(grid)
    st = capmod.initial_cap_state(y, D, win)
    for _ in range(5):
        st, _ = capmod.observer_step_cap(st, y, D, win, np.zeros(3), np.zeros(3), obs.ObserverGains(), 0.01, grid)
    assert np.array_equal(st.p_w_hat, np.zeros(3)) and np.array_equal(st.p_v_hat, np.zeros(3))
    assert np.array_equal(st.X_hat, win.phi * y)


def test_estimates_vanish_outside_support(frame):
    grid, y, D = frame
    win = capmod.build_window(grid)
    st = capmod.initial_cap_state(y + 5.0, D, win)
    st, _ = capmod.observer_step_cap(st, y, D, win, np.array([0, 0.1, 0]), np.zeros(3), obs.ObserverGains(), 0.01, grid)
    assert np.all(st.X_hat[~win.support] == 0) and np.all(st.L_hat[~win.support] == 0)


def test_cap_lyapunov_parts(frame):
    grid, y, D = frame
    win = capmod.build_window(grid)
    gains = obs.ObserverGains()
    st = capmod.initial_cap_state(y, D, win, p_v_hat=[0.5, 0, 0])
    lv, boundary = capmod.cap_lyapunov(st, y, D, win, BiasPair(), gains, BodyTwist(np.zeros(3), np.zeros(3)), grid)
    assert lv.V == pytest.approx(0.25 / (2 * gains.k_v))
    assert lv.f == 0.0 and boundary == 0.0


def test_edge_line_integral_of_constant_normal_flux():
    # a field W = c_col/|c_col| on the right edge contributes its edge length
    grid = PinholeGrid(30, 20, np.radians(50), np.radians(40))
    c_row, c_col = grid.dual
    e_row, _ = grid.basis
    W = np.zeros(grid.shape + (3,))
    # corners are left at zero so the top and bottom edges contribute nothing
    W[1:-1, -1] = c_col[1:-1, -1] / np.linalg.norm(c_col[1:-1, -1], axis=-1, keepdims=True)
    F = np.ones(grid.shape)
    got = capmod._edge_line_integral(grid, F, W)
    lengths = np.linalg.norm(e_row[:, -1], axis=-1)
    lengths[[0, -1]] = 0.0
    assert got == pytest.approx(np.trapezoid(lengths, dx=grid.spacing[0]))


def test_advance_cap_uses_substeps(frame):
    grid, y, D = frame
    win = capmod.build_window(grid)
    st = capmod.initial_cap_state(y, D, win)
    st, cfl, n = capmod.advance_cap(st, y, D, win, np.array([0, 0.5, 0]), np.zeros(3), obs.ObserverGains(), 1 / 42, grid)
    assert n >= 1 and cfl <= 0.5 + 1e-12
