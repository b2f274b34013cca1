"""Shared helpers for the shipped environments."""
from __future__ import annotations

import math

import numpy as np

from ..kinematics import (
    InstrumentLimits,
    Pose,
    PTSDState,
    RcmFrame,
    clamp_action,
    matrix_to_quat,
    ptsd_to_pose,
    shaft_axis,
)
from ..sensors import CameraModel
from ..softbody import ToolCapsule

TOOL_HEAD_LENGTH = 20.0  # mm of shaft modeled as the collision capsule


class Instrument:
    """A pivotized tool: TPSD state, limits, and a collision capsule."""

    def __init__(self, rcm: RcmFrame, limits: InstrumentLimits,
                 ptsd: PTSDState, capsule_radius: float):
        self.rcm = rcm
        self.limits = limits
        self.ptsd = ptsd
        self.tool = ToolCapsule(
            np.zeros(3), np.zeros(3), capsule_radius
        )
        self._sync_tool()

    def _sync_tool(self):
        axis = shaft_axis(self.ptsd, self.rcm)
        rcm_pos = np.asarray(self.rcm.position, dtype=float)
        tip = rcm_pos + axis * self.ptsd.depth
        a_depth = max(self.ptsd.depth - TOOL_HEAD_LENGTH, 0.0)
        self.tool.endpoint_a = rcm_pos + axis * a_depth
        self.tool.endpoint_b = tip

    def apply(self, action, dt: float) -> dict:
        self.ptsd, flags = clamp_action(self.ptsd, action, self.limits, self.rcm, dt)
        self._sync_tool()
        return flags

    @property
    def tip(self) -> np.ndarray:
        return self.tool.endpoint_b

    def pose(self) -> Pose:
        return ptsd_to_pose(self.ptsd, self.rcm)


def look_at(eye, target, resolution: int, fov_deg: float = 45.0,
            near: float = 1.0, far: float = 1000.0) -> CameraModel:
    """Camera at eye looking at target, image up aligned with world +z."""
    eye = np.asarray(eye, dtype=float)
    target = np.asarray(target, dtype=float)
    z = target - eye
    z = z / np.linalg.norm(z)
    up = np.array([0.0, 0.0, 1.0])
    if abs(z @ up) > 0.99:
        up = np.array([0.0, 1.0, 0.0])
    y = -(up - (up @ z) * z)  # image v axis points away from world up
    y = y / np.linalg.norm(y)
    x = np.cross(y, z)
    r = np.column_stack([x, y, z])
    return CameraModel(Pose(eye, matrix_to_quat(r)), fov_deg, resolution, near, far)


def workspace_diagonal(limits: InstrumentLimits) -> float:
    lo = np.asarray(limits.cartesian_low, dtype=float)
    hi = np.asarray(limits.cartesian_high, dtype=float)
    return float(np.linalg.norm(hi - lo))


def sample_in_box(rng: np.random.Generator, low, high) -> np.ndarray:
    low = np.asarray(low, dtype=float)
    high = np.asarray(high, dtype=float)
    return low + rng.random(3) * (high - low)


def default_limits(
    tilt=60.0, pan=60.0, spin=180.0, depth_max=200.0,
    box_low=(-80.0, -80.0, 0.0), box_high=(80.0, 80.0, 120.0),
    velocity=(30.0, 30.0, 60.0, 50.0),
) -> InstrumentLimits:
    return InstrumentLimits(
        ptsd_low=PTSDState(-tilt, -pan, -spin, 0.0),
        ptsd_high=PTSDState(tilt, pan, spin, depth_max),
        cartesian_low=box_low,
        cartesian_high=box_high,
        velocity_limits=velocity,
    )
