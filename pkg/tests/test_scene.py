import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from biasobs.errors import BadConfig, NonConvexProfile, NotAxisymmetric, OriginOutside
from biasobs.kinematics import NoiseSpec, look_pose, stream_rng
from biasobs.scene import (
    apply_noise,
    make_axisymmetric_scene,
    make_room_scene,
    make_sphere_scene,
    ray_cast,
    render,
    room_texture_value,
    spheroid_profile,
    world_texture,
)
from biasobs.sphere import LatLongGrid, PinholeGrid, unit

dirs3 = arrays(np.float64, 3, elements=st.floats(-1, 1)).filter(lambda v: np.linalg.norm(v) > 0.1)


def test_room_axis_distances():
    scene = make_room_scene((4.0, 3.0, 2.5))
    hit = ray_cast(scene, np.zeros(3), np.array([[1.0, 0, 0], [0, -1.0, 0], [0, 0, 1.0]]))
    assert np.allclose(hit.distance, [2.0, 1.5, 1.25])


def test_room_texture_on_walls():
    scene = make_room_scene((4.0, 3.0, 2.5), 100.0, 0.5, 0.5)
    # point on the +x wall: wall coordinates are (y, z) measured from the min corner
    p = np.array([2.0, 0.3, -0.2])
    expected = room_texture_value(100.0, 0.5, 0.5, 0.3 + 1.5, -0.2 + 1.25)
    assert scene.texture(p) == pytest.approx(expected)


@settings(max_examples=50)
@given(dirs3)
def test_sphere_distance_closed_form(d):
    # off-center origin: |o + t d| = R  =>  t = -o.d + sqrt((o.d)^2 - |o|^2 + R^2)
    scene = make_sphere_scene(2.0)
    o = np.array([0.3, -0.2, 0.1])
    d = unit(d)
    t = ray_cast(scene, o, d[None]).distance[0]
    b = o @ d
    assert t == pytest.approx(-b + np.sqrt(b * b - o @ o + 4.0), rel=1e-12)


@settings(max_examples=30)
@given(dirs3)
def test_spheroid_distance_against_quadratic(d):
    a, c = 2.0, 3.0
    prof, hr = spheroid_profile(a, c)
    scene = make_axisymmetric_scene((0, 0, 1), prof, lambda rho, h: 128.5 + 0 * h, hr)
    o = np.array([0.1, 0.2, 0.3])
    d = unit(d)
    t = ray_cast(scene, o, d[None]).distance[0]
    # (ox + t dx)^2/a^2 + (oy + t dy)^2/a^2 + (oz + t dz)^2/c^2 = 1
    s = np.array([1 / a**2, 1 / a**2, 1 / c**2])
    A, B, C = np.sum(s * d * d), 2 * np.sum(s * o * d), np.sum(s * o * o) - 1
    assert t == pytest.approx((-B + np.sqrt(B * B - 4 * A * C)) / (2 * A), abs=1e-9)


def test_sphere_from_center_renders_constant_fields():
    scene = make_sphere_scene(2.0)
    y, D = render(scene, look_pose(np.zeros(3), (1, 0, 0)), LatLongGrid(8, 16))
    assert np.allclose(D, 2.0) and np.allclose(y, 128.5)


def test_noise_clamps():
    rng = stream_rng(0, 0, 0)
    y, D = apply_noise(np.full((50, 50), 250.0), np.full((50, 50), 0.01), NoiseSpec(30, 0.25, 0, 0), rng)
    assert y.max() <= 256.0 and y.min() >= 1.0 and D.min() >= 1e-3
    y0, D0 = apply_noise(np.array([300.0, -5.0]), np.array([-1.0, 2.0]))
    assert np.array_equal(y0, [256.0, 1.0]) and np.array_equal(D0, [1e-3, 2.0])


def test_origin_outside():
    scene = make_room_scene()
    with pytest.raises(OriginOutside):
        ray_cast(scene, np.array([10.0, 0, 0]), np.array([[1.0, 0, 0]]))


def test_bad_room_parameters():
    with pytest.raises(BadConfig):
        make_room_scene((4.0, -3.0, 2.5))
    with pytest.raises(BadConfig):
        make_room_scene(amplitude=200.0)


def test_non_concave_profile_rejected():
    with pytest.raises(NonConvexProfile):
        make_axisymmetric_scene((0, 0, 1), ([-1.0, 0.0, 1.0], [1.0, 0.5, 1.0]), lambda rho, h: 100 + 0 * h)


def test_asymmetric_texture_rejected():
    prof, hr = spheroid_profile(2.0, 3.0)
    tex = world_texture(lambda p: 128.5 + 50 * np.sin(3 * np.asarray(p)[..., 0]))
    with pytest.raises(NotAxisymmetric):
        make_axisymmetric_scene((0, 0, 1), prof, tex, hr)


def test_depth_lower_bound_is_positive():
    scene = make_room_scene((4.0, 3.0, 2.5))
    # envelope is center +/- half/2, so the nearest wall is 2.5/4 away
    assert scene.d_star == pytest.approx(0.625)


def test_pinhole_render_shapes():
    scene = make_room_scene()
    g = PinholeGrid(16, 12, np.radians(50), np.radians(40))
    y, D = render(scene, look_pose(np.zeros(3), (1, 0, 0)), g)
    assert y.shape == D.shape == (12, 16)
    # optical axis hits the +x wall head on near the image center
    assert D.min() >= 2.0 - 1e-12
