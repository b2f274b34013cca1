"""Kinematics tests, anchored on an independent homogeneous-matrix oracle."""
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from lapkit.errors import DegenerateTip, InvalidAction
from lapkit.kinematics import (
    IDENTITY_RCM,
    InstrumentLimits,
    PTSDState,
    RcmFrame,
    clamp_action,
    euler_xyz_deg,
    matrix_to_quat,
    oblique_camera_pose,
    pose_to_ptsd,
    ptsd_to_pose,
    quat_to_matrix,
    shaft_axis,
    wrap_angle,
)


# -- independent oracle --------------------------------------------------
def _homogeneous(rotation=None, translation=None):
    t = np.eye(4)
    if rotation is not None:
        t[:3, :3] = rotation
    if translation is not None:
        t[:3, 3] = translation
    return t


def _rx(deg):
    r = math.radians(deg)
    c, s = math.cos(r), math.sin(r)
    return np.array([[1.0, 0.0, 0.0], [0.0, c, -s], [0.0, s, c]])


def _ry(deg):
    r = math.radians(deg)
    c, s = math.cos(r), math.sin(r)
    return np.array([[c, 0.0, s], [0.0, 1.0, 0.0], [-s, 0.0, c]])


def _rz(deg):
    r = math.radians(deg)
    c, s = math.cos(r), math.sin(r)
    return np.array([[c, -s, 0.0], [s, c, 0.0], [0.0, 0.0, 1.0]])


def oracle_tip_transform(ptsd: PTSDState, rcm: RcmFrame) -> np.ndarray:
    """4x4 chain: translate to pivot, orient pivot, rotate TPS, push depth."""
    a, b, c = rcm.orientation
    chain = (
        _homogeneous(translation=rcm.position)
        @ _homogeneous(rotation=_rx(a) @ _ry(b) @ _rz(c))
        @ _homogeneous(rotation=_rx(ptsd.tilt) @ _ry(ptsd.pan) @ _rz(ptsd.spin))
        @ _homogeneous(translation=[0.0, 0.0, ptsd.depth])
    )
    return chain


def random_states(rng, n):
    for _ in range(n):
        yield PTSDState(
            rng.uniform(-89, 89), rng.uniform(-89, 89),
            rng.uniform(-180, 180), rng.uniform(1.0, 200.0),
        ), RcmFrame(
            tuple(rng.uniform(-100, 100, 3)), tuple(rng.uniform(-180, 180, 3))
        )


# -- forward kinematics --------------------------------------------------
def test_forward_matches_matrix_oracle():
    rng = np.random.default_rng(11)
    for ptsd, rcm in random_states(rng, 500):
        oracle = oracle_tip_transform(ptsd, rcm)
        pose = ptsd_to_pose(ptsd, rcm)
        assert np.allclose(pose.position, oracle[:3, 3], atol=1e-9)
        assert np.allclose(pose.rotation_matrix(), oracle[:3, :3], atol=1e-9)


def test_zero_state_is_pivot():
    pose = ptsd_to_pose(PTSDState(0, 0, 0, 0), IDENTITY_RCM)
    assert np.allclose(pose.position, [0, 0, 0])
    assert np.allclose(pose.rotation_matrix(), np.eye(3))


def test_depth_moves_along_local_z():
    rcm = RcmFrame((5.0, -3.0, 40.0), (10.0, 20.0, 30.0))
    ptsd = PTSDState(15.0, -25.0, 40.0, 0.0)
    base = ptsd_to_pose(ptsd, rcm)
    deeper = ptsd_to_pose(PTSDState(15.0, -25.0, 40.0, 70.0), rcm)
    axis = shaft_axis(ptsd, rcm)
    assert np.allclose(deeper.position, base.position + 70.0 * axis, atol=1e-9)


def test_rcm_invariant_line_through_tip():
    """Shaft line through tip and shaft axis always passes through the pivot."""
    rng = np.random.default_rng(3)
    for ptsd, rcm in random_states(rng, 300):
        pose = ptsd_to_pose(ptsd, rcm)
        axis = shaft_axis(ptsd, rcm)
        pivot = np.asarray(rcm.position)
        rejection = (pivot - pose.position) - (
            (pivot - pose.position) @ axis
        ) * axis
        assert np.linalg.norm(rejection) < 1e-9


# -- inverse ------------------------------------------------------------
def test_inverse_round_trip():
    rng = np.random.default_rng(21)
    for ptsd, rcm in random_states(rng, 300):
        pose = ptsd_to_pose(ptsd, rcm)
        back = pose_to_ptsd(pose.position, rcm, spin=ptsd.spin)
        again = ptsd_to_pose(back, rcm)
        assert np.allclose(again.position, pose.position, atol=1e-6)


def test_inverse_degenerate_tip():
    with pytest.raises(DegenerateTip):
        pose_to_ptsd(np.zeros(3), IDENTITY_RCM)


def test_inverse_straight_down():
    rcm = RcmFrame((0.0, 0.0, 120.0), (180.0, 0.0, 0.0))
    ptsd = pose_to_ptsd(np.array([0.0, 0.0, 20.0]), rcm)
    assert ptsd.tilt == pytest.approx(0.0, abs=1e-9)
    assert ptsd.pan == pytest.approx(0.0, abs=1e-9)
    assert ptsd.depth == pytest.approx(100.0, abs=1e-9)


# -- angle/quaternion helpers -------------------------------------------
@given(st.floats(min_value=-1e4, max_value=1e4, allow_nan=False))
def test_wrap_angle_range(deg):
    w = wrap_angle(deg)
    assert -180.0 < w <= 180.0
    # same direction modulo 360
    assert math.isclose(
        math.cos(math.radians(deg)), math.cos(math.radians(w)), abs_tol=1e-9
    )
    assert math.isclose(
        math.sin(math.radians(deg)), math.sin(math.radians(w)), abs_tol=1e-9
    )


@settings(max_examples=200)
@given(
    st.floats(-180, 180), st.floats(-180, 180), st.floats(-180, 180)
)
def test_quat_matrix_round_trip(a, b, c):
    r = euler_xyz_deg(a, b, c)
    assert np.allclose(quat_to_matrix(matrix_to_quat(r)), r, atol=1e-9)


# -- action clamping -----------------------------------------------------
def _limits():
    return InstrumentLimits(
        ptsd_low=PTSDState(-60, -60, -180, 0),
        ptsd_high=PTSDState(60, 60, 180, 200),
        cartesian_low=(-80, -80, 0),
        cartesian_high=(80, 80, 120),
        velocity_limits=(30, 30, 60, 50),
    )


def test_clamp_action_integrates_velocity():
    rcm = RcmFrame((0, 0, 120), (180, 0, 0))
    new, flags = clamp_action(
        PTSDState(0, 0, 0, 50), np.array([1.0, 0, 0, 0]), _limits(), rcm, 0.1
    )
    assert new.tilt == pytest.approx(3.0)
    assert not flags["state_limit_violated"]
    assert not flags["workspace_violated"]


def test_clamp_action_state_limit_flag():
    rcm = RcmFrame((0, 0, 120), (180, 0, 0))
    new, flags = clamp_action(
        PTSDState(59.0, 0, 0, 50), np.array([1.0, 0, 0, 0]), _limits(), rcm, 0.1
    )
    assert new.tilt == pytest.approx(60.0)
    assert flags["state_limit_violated"]


def test_clamp_action_workspace_keeps_state():
    rcm = RcmFrame((0, 0, 120), (180, 0, 0))
    limits = InstrumentLimits(
        ptsd_low=PTSDState(-60, -60, -180, 0),
        ptsd_high=PTSDState(60, 60, 180, 200),
        cartesian_low=(-80, -80, 0),
        cartesian_high=(80, 80, 70),  # ceiling right at the start tip
        velocity_limits=(30, 30, 60, 50),
    )
    start = PTSDState(0, 0, 0, 50.0)  # tip at z = 70, on the ceiling
    new, flags = clamp_action(
        start, np.array([0, 0, 0, -1.0]), limits, rcm, 0.1
    )
    assert new == start
    assert flags["workspace_violated"]


def test_clamp_action_rejects_bad_action():
    with pytest.raises(InvalidAction):
        clamp_action(
            PTSDState(0, 0, 0, 50), np.array([2.0, 0, 0, 0]), _limits(),
            IDENTITY_RCM, 0.1,
        )
    with pytest.raises(InvalidAction):
        clamp_action(
            PTSDState(0, 0, 0, 50), np.array([np.nan, 0, 0, 0]), _limits(),
            IDENTITY_RCM, 0.1,
        )


# -- oblique optic -------------------------------------------------------
def test_oblique_zero_angle_is_forward_view():
    rng = np.random.default_rng(5)
    for ptsd, rcm in random_states(rng, 50):
        base = ptsd_to_pose(ptsd, rcm)
        cam = oblique_camera_pose(ptsd, rcm, 0.0, rng.uniform(-180, 180))
        assert np.allclose(cam.rotation_matrix(), base.rotation_matrix(),
                           atol=1e-9)


def test_oblique_rotation_mirrors_view_direction():
    ptsd = PTSDState(10.0, -20.0, 35.0, 80.0)
    rcm = RcmFrame((2.0, 3.0, 110.0), (175.0, 5.0, -10.0))
    fwd0 = oblique_camera_pose(ptsd, rcm, 30.0, 0.0).rotation_matrix()[:, 2]
    fwd180 = oblique_camera_pose(ptsd, rcm, 30.0, 180.0).rotation_matrix()[:, 2]
    axis = shaft_axis(ptsd, rcm)
    # the two oblique views are mirror images about the shaft axis
    assert np.allclose(fwd0 @ axis, fwd180 @ axis, atol=1e-9)
    perp0 = fwd0 - (fwd0 @ axis) * axis
    perp180 = fwd180 - (fwd180 @ axis) * axis
    assert np.allclose(perp0, -perp180, atol=1e-9)


def test_oblique_rotation_90_tilts_toward_local_x():
    ptsd = PTSDState(0.0, 0.0, 0.0, 50.0)
    cam = oblique_camera_pose(ptsd, IDENTITY_RCM, 30.0, 90.0)
    fwd = cam.rotation_matrix()[:, 2]
    assert fwd[0] == pytest.approx(math.sin(math.radians(30.0)), abs=1e-9)
    assert fwd[1] == pytest.approx(0.0, abs=1e-9)
