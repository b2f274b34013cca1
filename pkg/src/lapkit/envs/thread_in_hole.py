"""Navigate the free end of a grasped thread into a hollow cylinder."""
from __future__ import annotations

import math

import numpy as np

from ..envcore import BaseEnv, EnvConfig
from ..errors import InvalidConfig, UnstableSimulation
from ..kinematics import PTSDState, RcmFrame
from ..sensors import Capsule, Sphere, Triangle
from ..softbody import SoftWorld, build_rope, grasp, step_world
from .base import Instrument, look_at, workspace_diagonal

REWARD_WEIGHTS = (
    ("tip_distance_to_hole", -0.1),
    ("change_in_tip_distance", -0.1),
    ("com_distance_to_hole", -0.0),
    ("change_in_com_distance", -0.0),
    ("unstable_simulation", 0.0),
    ("thread_velocity", 0.0),
    ("grasper_velocity", 0.0),
    ("state_limit_violation", 0.0),
    ("workspace_violation", 0.0),
    ("ratio_in_hole", 0.1),
    ("change_in_ratio", 1.0),
    ("gripper_collision", -0.1),
    ("success", 100.0),
)

THREAD_PRESETS = {
    # length mm, particle count, stiffness, cylinder inner radius mm
    "normal": {"length": 60.0, "particles": 15, "stiffness": 1.0, "hole_radius": 10.0},
    "flexible": {"length": 80.0, "particles": 20, "stiffness": 0.6, "hole_radius": 10.0},
    "inverted": {"length": 50.0, "particles": 12, "stiffness": 1.0, "hole_radius": 14.0},
}

DEFAULT_PARAMS = {
    "thread_preset": "normal",
    "insertion_ratio": 0.5,  # fraction of particles inside for success
    "camera_pose_noise": False,
    "cylinder_height": 30.0,  # mm
    "wall_thickness": 3.0,  # mm
    "tool_radius": 2.0,
}

RCM_POSITION = (0.0, 0.0, 150.0)
SUBSTEPS = 1
ITERATIONS = 10


class ThreadInHoleEnv(BaseEnv):
    """TPSD grasper holding a thread above a hollow cylinder; action dim 4."""

    action_dim = 4

    def __init__(self, config: EnvConfig):
        super().__init__(config)
        self.params = dict(DEFAULT_PARAMS)
        unknown = set(config.env_params) - set(self.params)
        if unknown:
            raise InvalidConfig(f"unknown thread-in-hole params: {sorted(unknown)}")
        self.params.update(config.env_params)
        if self.params["thread_preset"] not in THREAD_PRESETS:
            raise InvalidConfig(
                f"thread_preset must be one of {sorted(THREAD_PRESETS)}"
            )
        if not 0 < self.params["insertion_ratio"] <= 1:
            raise InvalidConfig("insertion_ratio must be in (0, 1]")
        self._diag = workspace_diagonal(config.limits)

    def _build(self, rng):
        preset = THREAD_PRESETS[self.params["thread_preset"]]
        self.hole_radius = preset["hole_radius"]
        self.cyl_height = self.params["cylinder_height"]
        self.hole_center = np.array([0.0, 0.0, self.cyl_height])

        self.world = SoftWorld()
        jitter = rng.uniform(-3.0, 3.0, size=2)
        top = np.array([12.0 + jitter[0], jitter[1],
                        self.cyl_height + preset["length"] + 15.0])
        bottom = top - np.array([0.0, 0.0, preset["length"]])
        self.thread = build_rope(
            self.world, "thread", top, bottom, preset["particles"],
            stiffness=preset["stiffness"],
        )
        self.world.static_colliders.append(self._collide_cylinder)

        self.grasper = Instrument(
            RcmFrame(RCM_POSITION, (180.0, 0.0, 0.0)),
            self.config.limits,
            PTSDState(0.0, 0.0, 0.0, 0.0),
            self.params["tool_radius"],
        )
        # start the grasper tip exactly at the thread's upper end, then grasp
        from ..kinematics import pose_to_ptsd

        self.grasper.ptsd = pose_to_ptsd(top, self.grasper.rcm, spin=0.0)
        self.grasper._sync_tool()
        self.grasper.tool.jaw_closed = True
        self.world.register_tool(self.grasper.tool)
        attached = grasp(self.world, self.grasper.tool, grasp_radius=2.0)
        if attached is None:
            raise InvalidConfig("grasper failed to reach the thread at reset")

        self._camera = look_at(
            (0.0, -150.0, 120.0), (0.0, 0.0, 40.0), self.config.resolution
        )
        if self.params["camera_pose_noise"]:
            jitter = rng.uniform(-10.0, 10.0, size=3)
            self._camera = look_at(
                np.array([0.0, -150.0, 120.0]) + jitter,
                (0.0, 0.0, 40.0),
                self.config.resolution,
            )
        self._unstable = False
        self._flags = {"state_limit_violated": False, "workspace_violated": False}
        self._prev_tip = self.grasper.tip.copy()
        self._prev_tip_distance = self._tip_distance()
        self._prev_com_distance = self._com_distance()
        self._prev_ratio = self._ratio_in_hole()

    # -- geometry -------------------------------------------------------
    def _collide_cylinder(self, positions):
        """Keep particles out of the cylinder wall and above the floor."""
        p = positions
        r = np.hypot(p[:, 0], p[:, 1])
        in_band = (p[:, 2] > 0.0) & (p[:, 2] < self.cyl_height)
        inner, outer = self.hole_radius, self.hole_radius + self.params["wall_thickness"]
        in_wall = in_band & (r > inner) & (r < outer)
        if np.any(in_wall):
            idx = np.nonzero(in_wall)[0]
            mid = 0.5 * (inner + outer)
            for i in idx:
                ri = r[i]
                target = inner if ri < mid else outer
                if ri > 1e-9:
                    p[i, 0] *= target / ri
                    p[i, 1] *= target / ri
        below = p[:, 2] < 0.5
        p[below, 2] = 0.5
        return p

    def _thread_tip(self) -> np.ndarray:
        return self.world.positions[self.thread[-1]]

    def _tip_distance(self) -> float:
        return float(np.linalg.norm(self._thread_tip() - self.hole_center))

    def _com(self) -> np.ndarray:
        return self.world.positions[list(self.thread)].mean(axis=0)

    def _com_distance(self) -> float:
        return float(np.linalg.norm(self._com() - self.hole_center))

    def _ratio_in_hole(self) -> float:
        p = self.world.positions[list(self.thread)]
        r = np.hypot(p[:, 0], p[:, 1])
        inside = (r < self.hole_radius) & (p[:, 2] > 0.0) & (p[:, 2] < self.cyl_height)
        return float(np.count_nonzero(inside)) / len(self.thread)

    def _gripper_collision(self) -> bool:
        tip = self.grasper.tip
        r = math.hypot(tip[0], tip[1])
        inner = self.hole_radius
        outer = inner + self.params["wall_thickness"]
        near_wall = (
            0.0 < tip[2] < self.cyl_height
            and inner - self.grasper.tool.radius < r < outer + self.grasper.tool.radius
        )
        return bool(near_wall)

    # -- lifecycle ------------------------------------------------------
    def _apply_action(self, action):
        dt = self.config.sim.delta_t_s
        self._prev_tip = self.grasper.tip.copy()
        for _ in range(self.config.sim.frame_skip):
            self._flags = self.grasper.apply(action, dt)
            try:
                step_world(self.world, [self.grasper.tool], dt,
                           substeps=SUBSTEPS, iterations=ITERATIONS)
            except UnstableSimulation:
                self._unstable = True
                break

    def _features(self):
        dt_o = self.config.sim.observation_dt
        tip_d = self._tip_distance()
        com_d = self._com_distance()
        ratio = self._ratio_in_hole()
        thread_v = float(
            np.mean(np.linalg.norm(self.world.velocities[list(self.thread)], axis=1))
        )
        grasper_v = float(np.linalg.norm(self.grasper.tip - self._prev_tip)) / dt_o
        success = ratio >= self.params["insertion_ratio"]
        features = {
            "tip_distance_to_hole": tip_d / self._diag,
            "change_in_tip_distance": (tip_d - self._prev_tip_distance) / self._diag,
            "com_distance_to_hole": com_d / self._diag,
            "change_in_com_distance": (com_d - self._prev_com_distance) / self._diag,
            "unstable_simulation": 1.0 if self._unstable else 0.0,
            "thread_velocity": thread_v / 1000.0,
            "grasper_velocity": grasper_v / 1000.0,
            "state_limit_violation": 1.0 if self._flags["state_limit_violated"] else 0.0,
            "workspace_violation": 1.0 if self._flags["workspace_violated"] else 0.0,
            "ratio_in_hole": ratio,
            "change_in_ratio": ratio - self._prev_ratio,
            "gripper_collision": 1.0 if self._gripper_collision() else 0.0,
            "success": 1.0 if success else 0.0,
        }
        self._prev_tip_distance = tip_d
        self._prev_com_distance = com_d
        self._prev_ratio = ratio
        return features, success, success

    def state_observation(self):
        idx = list(self.thread)
        sample = [idx[int(round(t))] for t in np.linspace(0, len(idx) - 1, 4)]
        return np.concatenate(
            [
                self.grasper.pose().as_vector(),
                self.grasper.ptsd.as_array(),
                self._com(),
                self.hole_center,
                self.world.positions[sample].ravel(),
            ]
        )

    def scene(self):
        prims = []
        idx = list(self.thread)
        for a, b in zip(idx[:-1], idx[1:]):
            prims.append(
                Capsule(self.world.positions[a], self.world.positions[b], 1.2,
                        (220, 220, 220), 1)
            )
        # cylinder as a ring of wall quads
        seg = 16
        inner = self.hole_radius
        for j in range(seg):
            a0 = 2 * math.pi * j / seg
            a1 = 2 * math.pi * (j + 1) / seg
            p0 = np.array([inner * math.cos(a0), inner * math.sin(a0), 0.0])
            p1 = np.array([inner * math.cos(a1), inner * math.sin(a1), 0.0])
            p2 = p1 + np.array([0, 0, self.cyl_height])
            p3 = p0 + np.array([0, 0, self.cyl_height])
            prims.append(Triangle(np.array([p0, p1, p2]), (200, 120, 120), 2))
            prims.append(Triangle(np.array([p0, p2, p3]), (200, 120, 120), 2))
        prims.append(
            Capsule(self.grasper.tool.endpoint_a, self.grasper.tool.endpoint_b,
                    self.grasper.tool.radius, (90, 130, 255), 3)
        )
        prims.append(Sphere(self.hole_center, 1.5, (60, 220, 60), 4))
        return prims

    def camera(self):
        return self._camera
