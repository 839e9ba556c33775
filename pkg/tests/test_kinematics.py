import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from biasobs.errors import EnvelopeExit, OutOfRange
from biasobs.kinematics import (
    BiasPair,
    BodyTwist,
    CameraPose,
    Envelope,
    NoiseSpec,
    PoseTrack,
    TrajectoryProfile,
    integrate_pose,
    look_pose,
    measured_twist,
    qconj,
    qmul,
    quat_from_axis_angle,
    quat_from_matrix,
    quat_to_matrix,
    sample_trajectory,
    simulate_poses,
    stream_rng,
)

quats = arrays(np.float64, 4, elements=st.floats(-1, 1)).filter(lambda q: np.linalg.norm(q) > 0.1)


def skew(w):
    return np.array([[0, -w[2], w[1]], [w[2], 0, -w[0]], [-w[1], w[0], 0]])


def expm_so3(w):
    th = np.linalg.norm(w)
    if th == 0:
        return np.eye(3)
    K = skew(w / th)
    return np.eye(3) + np.sin(th) * K + (1 - np.cos(th)) * K @ K


@given(quats)
def test_quat_matrix_is_rotation(q):
    R = quat_to_matrix(q)
    assert np.allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(R) == pytest.approx(1.0)


@given(quats)
def test_quat_matrix_roundtrip(q):
    q = q / np.linalg.norm(q)
    R = quat_to_matrix(q)
    assert np.allclose(quat_to_matrix(quat_from_matrix(R)), R, atol=1e-12)


@given(quats, arrays(np.float64, 3, elements=st.floats(-5, 5)))
def test_quat_rotation_action(q, s):
    q = q / np.linalg.norm(q)
    rotated = qmul(qmul(q, np.concatenate([[0.0], s])), qconj(q))
    assert np.allclose(rotated[1:], quat_to_matrix(q) @ s, atol=1e-12)


def test_axis_angle_quarter_turn():
    R = quat_to_matrix(quat_from_axis_angle((0, 0, 1), np.pi / 2))
    assert np.allclose(R @ [1, 0, 0], [0, 1, 0], atol=1e-15)


def test_rk4_matches_screw_motion_closed_form():
    # constant body twist: R(t) = R0 exp(t [w]x), C(t) = C0 + R0 int_0^t exp(s [w]x) v ds
    w = np.array([0.3, -0.2, 0.5])
    v = np.array([0.4, 0.1, -0.2])
    pose = CameraPose(quat_from_axis_angle((1, 1, 0), 0.4), np.array([0.5, -1.0, 2.0]))
    R0, C0 = pose.R, pose.C
    T, n = 2.0, 200
    for _ in range(n):
        pose = integrate_pose(pose, BodyTwist(v, w), T / n)
    R_exact = R0 @ expm_so3(w * T)
    s = np.linspace(0, T, 4001)
    integrand = np.array([expm_so3(w * si) @ v for si in s])
    C_exact = C0 + R0 @ np.trapezoid(integrand, s, axis=0)
    assert np.allclose(pose.R, R_exact, atol=1e-10)
    assert np.allclose(pose.C, C_exact, atol=1e-7)


def test_pure_translation_is_exact():
    pose0 = look_pose((0, 0, 0), (1, 0, 0))
    pose = integrate_pose(pose0, BodyTwist((0, 0, 1.0), (0, 0, 0)), 0.5)
    # camera z is the world x axis for this pose
    assert np.allclose(pose.C, [0.5, 0.0, 0.0], atol=1e-15)


def test_look_pose_axes():
    R = look_pose((0, 0, 0), (1, 0, 0)).R
    assert np.allclose(R[:, 2], [1, 0, 0])
    assert np.allclose(R[:, 0], [0, -1, 0])
    assert np.allclose(R[:, 1], [0, 0, -1])


def test_envelope_exit():
    env = Envelope((-0.1, -0.1, -0.1), (0.1, 0.1, 0.1))
    pose = look_pose((0, 0, 0), (1, 0, 0))
    with pytest.raises(EnvelopeExit):
        integrate_pose(pose, BodyTwist((0, 0, 1.0), (0, 0, 0)), 0.2, env)


def test_profile_sampling_and_derivative():
    prof = TrajectoryProfile({"v_x": ((0.4, 0.15, 0.3),), "w_z": ((0.2, 0.5, 0.0), (0.1, 1.0, 1.0))}, 5.0)
    tw = sample_trajectory(prof, 1.2)
    assert tw.v[0] == pytest.approx(0.4 * np.sin(2 * np.pi * 0.15 * 1.2 + 0.3))
    h = 1e-5
    fd = (sample_trajectory(prof, 1.2 + h).w[2] - sample_trajectory(prof, 1.2 - h).w[2]) / (2 * h)
    assert prof.derivative(1.2).w[2] == pytest.approx(fd, rel=1e-8)
    with pytest.raises(OutOfRange):
        sample_trajectory(prof, 5.5)
    v, w = prof.peak()
    assert v == pytest.approx(0.4) and w == pytest.approx(0.3)


def test_unknown_channel_rejected():
    with pytest.raises(ValueError):
        TrajectoryProfile({"v_q": ((1, 1, 0),)}, 1.0)


def test_measured_twist_adds_bias_exactly():
    true = BodyTwist((0.1, 0.2, 0.3), (0.01, 0.02, 0.03))
    m = measured_twist(true, BiasPair((2.5, 0, 0), (0.05, 0, 0)))
    assert np.array_equal(m.v, true.v + [2.5, 0, 0])
    assert np.array_equal(m.w, true.w + [0.05, 0, 0])


def test_noise_streams_are_keyed():
    a = stream_rng(7, 1, 3).normal(size=4)
    b = stream_rng(7, 1, 3).normal(size=4)
    c = stream_rng(7, 1, 4).normal(size=4)
    d = stream_rng(7, 0, 3).normal(size=4)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, c) and not np.array_equal(a, d)
    noise = NoiseSpec(0, 0, 0.05, 0.005, 7)
    true = BodyTwist(np.zeros(3), np.zeros(3))
    m = measured_twist(true, BiasPair(), noise, stream_rng(7, 1, 0))
    assert 0 < np.linalg.norm(m.v) < 1.0


def test_pose_track_interpolates_simulated_poses():
    prof = TrajectoryProfile({"v_x": ((0.3, 0.2, 0.0),), "w_y": ((0.2, 0.3, 0.0),)}, 2.0)
    pose0 = look_pose((0, 0, 0), (1, 0, 0))
    track = PoseTrack(prof, pose0, 0.01)
    ref = simulate_poses(prof, pose0, np.array([0.0, 1.0]), substeps=100)[-1]
    got = track(1.0)
    assert np.allclose(got.C, ref.C, atol=1e-8)
    assert np.allclose(got.R, ref.R, atol=1e-8)
