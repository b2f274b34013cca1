"""Pivotized instrument kinematics around a remote center of motion.

A laparoscopic instrument passing through a trocar has 4 degrees of
freedom: three rotations (tilt, pan, spin) about the pivot frame and one
translation (depth) along the shaft.  The forward map composes four
homogeneous transforms:

    T = T_t(pivot position) * R_xyz(pivot orientation)
      * R_xyz(tilt, pan, spin) * T_t([0, 0, depth])

Euler convention: intrinsic XYZ, i.e. R = Rx(a) @ Ry(b) @ Rz(c).  The
shaft axis is the local z-axis.  Angles are degrees at the API boundary,
lengths are millimeters.  Output angles are normalized to (-180, 180].

All functions here are pure and thread-safe.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .errors import DegenerateTip, InvalidAction

_EPS_TIP = 1e-6


@dataclass(frozen=True)
class PTSDState:
    """Instrument configuration: tilt/pan/spin in degrees, depth in mm."""

    tilt: float
    pan: float
    spin: float
    depth: float

    def as_array(self) -> np.ndarray:
        return np.array([self.tilt, self.pan, self.spin, self.depth], dtype=float)

    @staticmethod
    def from_array(a) -> "PTSDState":
        t, p, s, d = (float(v) for v in a)
        return PTSDState(t, p, s, d)


@dataclass(frozen=True)
class RcmFrame:
    """Pivot frame: position (mm) and intrinsic-XYZ Euler orientation (deg)."""

    position: tuple
    orientation: tuple

    def rotation(self) -> np.ndarray:
        return _cached_rotation(tuple(float(v) for v in self.orientation))


IDENTITY_RCM = RcmFrame((0.0, 0.0, 0.0), (0.0, 0.0, 0.0))


@dataclass(frozen=True)
class Pose:
    """Rigid pose: position in mm and a unit quaternion (w, x, y, z)."""

    position: np.ndarray
    orientation: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "position", np.asarray(self.position, dtype=float))
        q = np.asarray(self.orientation, dtype=float)
        n = np.linalg.norm(q)
        if abs(n - 1.0) > 1e-9:
            q = q / n
        object.__setattr__(self, "orientation", q)

    def rotation_matrix(self) -> np.ndarray:
        return quat_to_matrix(self.orientation)

    def as_vector(self) -> np.ndarray:
        """Serialize as position (3) + quaternion (4)."""
        return np.concatenate([self.position, self.orientation])


@dataclass(frozen=True)
class InstrumentLimits:
    """State bounds, Cartesian workspace box, and per-axis velocity limits."""

    ptsd_low: PTSDState
    ptsd_high: PTSDState
    cartesian_low: tuple
    cartesian_high: tuple
    velocity_limits: tuple  # (deg/s, deg/s, deg/s, mm/s)

    def __post_init__(self):
        lo, hi = self.ptsd_low.as_array(), self.ptsd_high.as_array()
        if np.any(lo > hi):
            raise ValueError("ptsd_low must be <= ptsd_high componentwise")
        clo = np.asarray(self.cartesian_low, dtype=float)
        chi = np.asarray(self.cartesian_high, dtype=float)
        if np.any(chi < clo):
            raise ValueError("cartesian box must have non-negative extents")

    def contains_tip(self, tip: np.ndarray) -> bool:
        lo = np.asarray(self.cartesian_low, dtype=float)
        hi = np.asarray(self.cartesian_high, dtype=float)
        return bool(np.all(tip >= lo) and np.all(tip <= hi))


def rot_x(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[1, 0, 0], [0, c, -s], [0, s, c]], dtype=float)


def rot_y(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[c, 0, s], [0, 1, 0], [-s, 0, c]], dtype=float)


def rot_z(deg: float) -> np.ndarray:
    c, s = math.cos(math.radians(deg)), math.sin(math.radians(deg))
    return np.array([[c, -s, 0], [s, c, 0], [0, 0, 1]], dtype=float)


def euler_xyz_deg(a: float, b: float, c: float) -> np.ndarray:
    """Intrinsic XYZ rotation: Rx(a) @ Ry(b) @ Rz(c), expanded in closed form."""
    ra, rb, rc = math.radians(a), math.radians(b), math.radians(c)
    ca, sa = math.cos(ra), math.sin(ra)
    cb, sb = math.cos(rb), math.sin(rb)
    cc, sc = math.cos(rc), math.sin(rc)
    return np.array(
        [
            [cb * cc, -cb * sc, sb],
            [ca * sc + sa * sb * cc, ca * cc - sa * sb * sc, -sa * cb],
            [sa * sc - ca * sb * cc, sa * cc + ca * sb * sc, ca * cb],
        ],
        dtype=float,
    )


@lru_cache(maxsize=256)
def _cached_rotation(orientation: tuple) -> np.ndarray:
    r = euler_xyz_deg(*orientation)
    r.setflags(write=False)
    return r


def matrix_to_quat(r: np.ndarray) -> np.ndarray:
    """Rotation matrix -> unit quaternion (w, x, y, z), w >= 0."""
    tr = r[0, 0] + r[1, 1] + r[2, 2]
    if tr > 0:
        s = math.sqrt(tr + 1.0) * 2.0
        w = 0.25 * s
        x = (r[2, 1] - r[1, 2]) / s
        y = (r[0, 2] - r[2, 0]) / s
        z = (r[1, 0] - r[0, 1]) / s
    elif r[0, 0] > r[1, 1] and r[0, 0] > r[2, 2]:
        s = math.sqrt(1.0 + r[0, 0] - r[1, 1] - r[2, 2]) * 2.0
        w = (r[2, 1] - r[1, 2]) / s
        x = 0.25 * s
        y = (r[0, 1] + r[1, 0]) / s
        z = (r[0, 2] + r[2, 0]) / s
    elif r[1, 1] > r[2, 2]:
        s = math.sqrt(1.0 + r[1, 1] - r[0, 0] - r[2, 2]) * 2.0
        w = (r[0, 2] - r[2, 0]) / s
        x = (r[0, 1] + r[1, 0]) / s
        y = 0.25 * s
        z = (r[1, 2] + r[2, 1]) / s
    else:
        s = math.sqrt(1.0 + r[2, 2] - r[0, 0] - r[1, 1]) * 2.0
        w = (r[1, 0] - r[0, 1]) / s
        x = (r[0, 2] + r[2, 0]) / s
        y = (r[1, 2] + r[2, 1]) / s
        z = 0.25 * s
    q = np.array([w, x, y, z], dtype=float)
    if q[0] < 0:
        q = -q
    return q / np.linalg.norm(q)


def quat_to_matrix(q: np.ndarray) -> np.ndarray:
    w, x, y, z = q
    return np.array(
        [
            [1 - 2 * (y * y + z * z), 2 * (x * y - w * z), 2 * (x * z + w * y)],
            [2 * (x * y + w * z), 1 - 2 * (x * x + z * z), 2 * (y * z - w * x)],
            [2 * (x * z - w * y), 2 * (y * z + w * x), 1 - 2 * (x * x + y * y)],
        ],
        dtype=float,
    )


def wrap_angle(deg: float) -> float:
    """Normalize an angle to (-180, 180]."""
    a = math.fmod(deg, 360.0)
    if a <= -180.0:
        a += 360.0
    elif a > 180.0:
        a -= 360.0
    return a


def ptsd_to_pose(ptsd: PTSDState, rcm: RcmFrame) -> Pose:
    """Forward kinematics: instrument tip pose for a given configuration."""
    r = rcm.rotation() @ euler_xyz_deg(ptsd.tilt, ptsd.pan, ptsd.spin)
    tip = np.asarray(rcm.position, dtype=float) + r @ np.array([0.0, 0.0, ptsd.depth])
    return Pose(tip, matrix_to_quat(r))


def shaft_axis(ptsd: PTSDState, rcm: RcmFrame) -> np.ndarray:
    """Unit vector along the instrument shaft (local z) in world frame."""
    r = rcm.rotation() @ euler_xyz_deg(ptsd.tilt, ptsd.pan, ptsd.spin)
    return r[:, 2]


def pose_to_ptsd(tip, rcm: RcmFrame, spin: float = 0.0) -> PTSDState:
    """Geometric inverse: configuration whose tip is at the given point.

    Spin is not recoverable from position alone and is passed through.
    Raises DegenerateTip when the tip coincides with the pivot.
    """
    tip = np.asarray(tip, dtype=float)
    delta = tip - np.asarray(rcm.position, dtype=float)
    depth = float(np.linalg.norm(delta))
    if depth <= _EPS_TIP:
        raise DegenerateTip("tip coincides with the pivot point")
    v = rcm.rotation().T @ (delta / depth)
    # v = Rx(tilt) @ Ry(pan) @ e_z = (sin pan, -sin tilt cos pan, cos tilt cos pan)
    pan = math.degrees(math.atan2(v[0], math.hypot(v[1], v[2])))
    tilt = math.degrees(math.atan2(-v[1], v[2]))
    return PTSDState(wrap_angle(tilt), wrap_angle(pan), wrap_angle(spin), depth)


def clamp_action(
    ptsd: PTSDState,
    action,
    limits: InstrumentLimits,
    rcm: RcmFrame,
    dt: float,
):
    """Integrate a normalized action for dt seconds under the limits.

    Returns (new_ptsd, flags) with flags {state_limit_violated,
    workspace_violated}.  A workspace violation keeps the previous state.
    """
    a = np.asarray(action, dtype=float)
    if a.shape != (4,) or not np.all(np.isfinite(a)) or np.any(np.abs(a) > 1.0):
        raise InvalidAction(f"action must be 4 finite values in [-1, 1], got {action!r}")
    if dt <= 0:
        raise ValueError("dt must be positive")

    vel = np.asarray(limits.velocity_limits, dtype=float)
    candidate = ptsd.as_array() + a * vel * dt
    lo, hi = limits.ptsd_low.as_array(), limits.ptsd_high.as_array()
    clamped = np.clip(candidate, lo, hi)
    state_limit_violated = bool(np.any(clamped != candidate))

    new = PTSDState.from_array(clamped)
    tip = ptsd_to_pose(new, rcm).position
    if not limits.contains_tip(tip):
        return ptsd, {"state_limit_violated": state_limit_violated, "workspace_violated": True}
    new = PTSDState(
        wrap_angle(new.tilt), wrap_angle(new.pan), wrap_angle(new.spin), new.depth
    )
    return new, {"state_limit_violated": state_limit_violated, "workspace_violated": False}


def oblique_camera_pose(
    ptsd: PTSDState, rcm: RcmFrame, optic_angle: float, optic_rotation: float
) -> Pose:
    """Camera pose for an angled optic rotated about the shaft axis.

    The optic tilts the view by optic_angle about a shaft-perpendicular
    axis whose direction is set by optic_rotation about the shaft; a
    zero optic_angle reduces exactly to the forward-viewing pose.
    """
    base = ptsd_to_pose(ptsd, rcm)
    r = base.rotation_matrix()
    extra = rot_z(optic_rotation) @ rot_x(optic_angle) @ rot_z(-optic_rotation)
    return Pose(base.position, matrix_to_quat(r @ extra))
