"""Steer a tissue landmark onto an image-space target with a grasper."""
from __future__ import annotations

import numpy as np

from ..envcore import BaseEnv, EnvConfig
from ..errors import BehindCamera, InvalidConfig, UnstableSimulation
from ..sensors import Sphere, Triangle, project
from ..softbody import SoftWorld, ToolCapsule, build_tissue_patch, grasp, step_world
from .base import look_at

REWARD_WEIGHTS = (
    ("distance_to_target", -1.0),
    ("stuck", -5.0),
    ("workspace_violation", 0.0),
    ("unstable_simulation", 0.0),
    ("success", 10.0),
)

DEFAULT_PARAMS = {
    "success_threshold": 4.0,  # image-plane distance, pixels
    "randomize_landmark": True,
    "min_reset_distance": 8.0,  # pixels between landmark and target at reset
    "patch_size": 60.0,  # mm
    "grid_n": 9,
    "grasper_speed": 25.0,  # mm/s per unit action
    "target_offset_range": 12.0,  # mm, in-plane target displacement
}

STUCK_EPSILON = 0.01  # mm of landmark motion
STUCK_STEPS = 50
SUBSTEPS = 10
ITERATIONS = 15


class TissueManipulationEnv(BaseEnv):
    """Cartesian grasper pre-attached to a deformable patch; action dim 3."""

    action_dim = 3

    def __init__(self, config: EnvConfig):
        super().__init__(config)
        self.params = dict(DEFAULT_PARAMS)
        unknown = set(config.env_params) - set(self.params)
        if unknown:
            raise InvalidConfig(f"unknown tissue params: {sorted(unknown)}")
        self.params.update(config.env_params)
        if self.params["success_threshold"] <= 0:
            raise InvalidConfig("success_threshold must be positive")

    def _build(self, rng):
        size = self.params["patch_size"]
        n = self.params["grid_n"]
        self.world = SoftWorld()
        self.patch = build_tissue_patch(
            self.world, "tissue", (-size / 2, -size / 2, 30.0), size, n=n,
            pinned_edge="y1",
        )
        # the grasper holds the middle of the free edge
        self.grasp_particle = self.patch[n // 2]
        grasp_pos = self.world.positions[self.grasp_particle]
        self.grasper = ToolCapsule(
            grasp_pos + np.array([0.0, 0.0, 15.0]), grasp_pos.copy(), 2.0,
            jaw_closed=True,
        )
        self.world.register_tool(self.grasper)
        attached = grasp(self.world, self.grasper, grasp_radius=1.0)
        assert attached == self.grasp_particle

        free = [
            p for p in self.patch
            if self.world.inverse_mass[p] > 0 and p != self.grasp_particle
        ]
        if self.params["randomize_landmark"]:
            self.landmark = int(rng.choice(free))
        else:
            self.landmark = free[len(free) // 2]

        self._camera = look_at(
            (0.0, -150.0, 120.0), (0.0, 0.0, 25.0), self.config.resolution
        )
        lm = self.world.positions[self.landmark]
        r = self.params["target_offset_range"]
        for attempt in range(10000):
            # widen the sampling range if the camera is too far for the
            # requested pixel separation at the nominal offset range
            scale = 1.0 + attempt / 100.0
            offset = rng.uniform(-r * scale, r * scale, size=3)
            offset *= np.array([1.0, 1.0, 0.4])
            self.target_point = lm + offset
            try:
                target_px = np.array(project(self.target_point, self._camera))
                lm_px = np.array(project(lm, self._camera))
            except BehindCamera:  # pragma: no cover - camera is far away
                continue
            if np.linalg.norm(target_px - lm_px) >= self.params["min_reset_distance"]:
                break
        else:
            raise InvalidConfig(
                "cannot place a target min_reset_distance pixels from the landmark"
            )
        self._flags = {"workspace_violated": False}
        self._unstable = False
        self._last_landmark = lm.copy()
        self._still_steps = 0

    def _image_distance(self) -> float:
        lm = np.array(project(self.world.positions[self.landmark], self._camera))
        tg = np.array(project(self.target_point, self._camera))
        return float(np.linalg.norm(lm - tg))

    def _apply_action(self, action):
        dt = self.config.sim.delta_t_s
        lo = np.asarray(self.config.limits.cartesian_low, dtype=float)
        hi = np.asarray(self.config.limits.cartesian_high, dtype=float)
        violated = False
        for _ in range(self.config.sim.frame_skip):
            move = np.clip(action, -1, 1) * self.params["grasper_speed"] * dt
            candidate = self.grasper.endpoint_b + move
            clipped = np.clip(candidate, lo, hi)
            if np.any(clipped != candidate):
                violated = True
            delta = clipped - self.grasper.endpoint_b
            self.grasper.endpoint_a = self.grasper.endpoint_a + delta
            self.grasper.endpoint_b = clipped
            try:
                step_world(self.world, [self.grasper], dt, substeps=SUBSTEPS,
                           iterations=ITERATIONS)
            except UnstableSimulation:
                self._unstable = True
                break
        self._flags = {"workspace_violated": violated}

    def _features(self):
        lm = self.world.positions[self.landmark]
        if np.linalg.norm(lm - self._last_landmark) < STUCK_EPSILON:
            self._still_steps += 1
        else:
            self._still_steps = 0
        self._last_landmark = lm.copy()
        stuck = self._still_steps >= STUCK_STEPS

        d = self._image_distance()
        success = d < self.params["success_threshold"]
        features = {
            "distance_to_target": d / self.config.resolution,
            "stuck": 1.0 if stuck else 0.0,
            "workspace_violation": 1.0 if self._flags["workspace_violated"] else 0.0,
            "unstable_simulation": 1.0 if self._unstable else 0.0,
            "success": 1.0 if success else 0.0,
        }
        return features, success, success

    def state_observation(self):
        return np.concatenate(
            [
                self.grasper.endpoint_b,
                self.world.positions[self.landmark],
                self.target_point,
            ]
        )

    def scene(self):
        prims = []
        n = self.params["grid_n"]
        pos = self.world.positions

        def pid(i, j):
            return self.patch[j * n + i]

        for j in range(n - 1):
            for i in range(n - 1):
                quad = [pid(i, j), pid(i + 1, j), pid(i + 1, j + 1), pid(i, j + 1)]
                prims.append(
                    Triangle(pos[[quad[0], quad[1], quad[2]]], (230, 210, 90), 1)
                )
                prims.append(
                    Triangle(pos[[quad[0], quad[2], quad[3]]], (230, 210, 90), 1)
                )
        prims.append(Sphere(pos[self.landmark], 2.0, (20, 20, 20), 2))
        prims.append(Sphere(self.target_point, 2.0, (60, 90, 255), 3))
        prims.append(
            Sphere(self.grasper.endpoint_b, self.grasper.radius, (150, 150, 160), 4)
        )
        return prims

    def camera(self):
        return self._camera
