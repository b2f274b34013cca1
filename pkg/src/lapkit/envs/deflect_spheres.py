"""Deflect the highlighted sphere on its flexible stalk with the hook."""
from __future__ import annotations

import numpy as np

from ..envcore import BaseEnv, EnvConfig
from ..errors import InvalidConfig, UnstableSimulation
from ..kinematics import PTSDState, RcmFrame
from ..sensors import Capsule, Sphere, Triangle
from ..softbody import SoftWorld, build_stalk, step_world
from .base import Instrument, look_at, workspace_diagonal

REWARD_WEIGHTS = (
    ("workspace_violations", 0.0),
    ("state_limit_violations", 0.0),
    ("instrument_collision", 0.0),
    ("distance_to_active_sphere", 0.0),
    ("change_in_distance_to_active_sphere", -5.0),
    ("inactive_sphere_deflections", -0.005),
    ("active_sphere_deflection", 0.0),
    ("change_in_active_sphere_deflection", 1.0),
    ("sphere_done", 10.0),
    ("success", 100.0),
)

DEFAULT_PARAMS = {
    "num_spheres": 5,
    "deflections_to_win": 1,
    "min_sphere_spacing": 18.0,  # mm
    "stalk_stiffness": 1.0,
    "bimanual": False,
    "min_deflection_distance": 3.0,  # mm
    "stalk_height": 20.0,  # mm
    "sphere_radius": 4.0,  # visual, mm
    "tool_radius": 4.0,  # mm
}

RCM_POSITION = (0.0, 0.0, 120.0)
RCM_POSITION_LEFT = (-50.0, 0.0, 120.0)
BOARD_HALF = 45.0
SPAWN_HALF = 35.0
SUBSTEPS = 10
ITERATIONS = 15


class DeflectSpheresEnv(BaseEnv):
    """TPSD hook(s) deflecting spheres mounted on flexible stalks."""

    def __init__(self, config: EnvConfig):
        super().__init__(config)
        self.params = dict(DEFAULT_PARAMS)
        unknown = set(config.env_params) - set(self.params)
        if unknown:
            raise InvalidConfig(f"unknown deflect params: {sorted(unknown)}")
        self.params.update(config.env_params)
        n, m = self.params["num_spheres"], self.params["deflections_to_win"]
        if not n >= m >= 1:
            raise InvalidConfig("require num_spheres >= deflections_to_win >= 1")
        if self.params["min_deflection_distance"] <= 0:
            raise InvalidConfig("min_deflection_distance must be positive")
        self.bimanual = bool(self.params["bimanual"])
        self.action_dim = 8 if self.bimanual else 4
        self._diag = workspace_diagonal(config.limits)

    def _build(self, rng):
        self.world = SoftWorld()
        n = self.params["num_spheres"]
        positions = []
        attempts = 0
        while len(positions) < n:
            attempts += 1
            if attempts > 10000:
                raise InvalidConfig("cannot place spheres with the given spacing")
            p = rng.uniform(-SPAWN_HALF, SPAWN_HALF, size=2)
            if all(
                np.linalg.norm(p - q) >= self.params["min_sphere_spacing"]
                for q in positions
            ):
                positions.append(p)
        self.tip_particles = []
        for k, (x, y) in enumerate(positions):
            idx = build_stalk(
                self.world,
                f"stalk{k}",
                (x, y, 0.0),
                self.params["stalk_height"],
                stiffness=self.params["stalk_stiffness"],
            )
            self.tip_particles.append(idx[-1])
        self.rest_positions = self.world.positions[self.tip_particles].copy()

        self.instruments = [
            Instrument(
                RcmFrame(RCM_POSITION, (180.0, 0.0, 0.0)),
                self.config.limits,
                PTSDState(0.0, 0.0, 0.0, 50.0),
                self.params["tool_radius"],
            )
        ]
        if self.bimanual:
            self.instruments.append(
                Instrument(
                    RcmFrame(RCM_POSITION_LEFT, (180.0, 0.0, 0.0)),
                    self.config.limits,
                    PTSDState(0.0, 0.0, 0.0, 50.0),
                    self.params["tool_radius"],
                )
            )
        for inst in self.instruments:
            self.world.register_tool(inst.tool)

        self._rng = rng
        self.completed = np.zeros(n, dtype=bool)
        self.active = int(rng.integers(n))
        self.done_count = 0
        self._unstable = False
        self._flags = [
            {"state_limit_violated": False, "workspace_violated": False}
            for _ in self.instruments
        ]
        self._prev_distance = self._distance_to_active()
        self._prev_active_deflection = self._deflections()[self.active]

    def _deflections(self):
        return np.linalg.norm(
            self.world.positions[self.tip_particles] - self.rest_positions, axis=1
        )

    def _active_instrument(self) -> Instrument:
        return self.instruments[0]

    def _distance_to_active(self) -> float:
        tip = self._active_instrument().tip
        sphere = self.world.positions[self.tip_particles[self.active]]
        return float(np.linalg.norm(tip - sphere))

    def _apply_action(self, action):
        dt = self.config.sim.delta_t_s
        tools = [inst.tool for inst in self.instruments]
        for _ in range(self.config.sim.frame_skip):
            for i, inst in enumerate(self.instruments):
                self._flags[i] = inst.apply(action[4 * i : 4 * i + 4], dt)
            try:
                step_world(self.world, tools, dt, substeps=SUBSTEPS,
                           iterations=ITERATIONS)
            except UnstableSimulation:
                self._unstable = True
                break

    def _features(self):
        deflections = self._deflections()
        d = self._distance_to_active()
        active_deflection = float(deflections[self.active])
        inactive = float(
            np.sum(deflections[[i for i in range(len(deflections))
                                if i != self.active and not self.completed[i]]])
        ) if len(deflections) > 1 else 0.0

        sphere_done = 0.0
        if active_deflection >= self.params["min_deflection_distance"]:
            self.completed[self.active] = True
            self.done_count += 1
            sphere_done = 1.0
            remaining = np.nonzero(~self.completed)[0]
            if len(remaining) and self.done_count < self.params["deflections_to_win"]:
                self.active = int(self._rng.choice(remaining))
                self._prev_distance = self._distance_to_active()
                self._prev_active_deflection = float(
                    self._deflections()[self.active]
                )
                d = self._prev_distance
                active_deflection = self._prev_active_deflection

        success = self.done_count >= self.params["deflections_to_win"]
        features = {
            "workspace_violations": float(
                sum(f["workspace_violated"] for f in self._flags)
            ),
            "state_limit_violations": float(
                sum(f["state_limit_violated"] for f in self._flags)
            ),
            "instrument_collision": self._instrument_collision(),
            "distance_to_active_sphere": d / self._diag,
            "change_in_distance_to_active_sphere": (d - self._prev_distance) / self._diag,
            "inactive_sphere_deflections": inactive / self._diag,
            "active_sphere_deflection": active_deflection / self._diag,
            "change_in_active_sphere_deflection": (
                (active_deflection - self._prev_active_deflection) / self._diag
            ),
            "sphere_done": sphere_done,
            "success": 1.0 if success else 0.0,
        }
        self._prev_distance = d
        self._prev_active_deflection = active_deflection
        return features, success, success

    def _instrument_collision(self) -> float:
        if len(self.instruments) < 2:
            return 0.0
        a, b = self.instruments[0].tool, self.instruments[1].tool
        from ..softbody import _segment_segment_distance

        d = _segment_segment_distance(
            a.endpoint_a, a.endpoint_b, b.endpoint_a, b.endpoint_b
        )
        return 1.0 if d < a.radius + b.radius else 0.0

    def state_observation(self):
        parts = [self.world.positions[self.tip_particles].ravel()]
        parts.append(self.world.positions[self.tip_particles[self.active]])
        inst = self.instruments[0]
        parts.append(inst.pose().as_vector())
        parts.append(inst.ptsd.as_array())
        if self.bimanual:
            inst2 = self.instruments[1]
            parts.append(inst2.pose().as_vector())
            parts.append(inst2.ptsd.as_array())
            parts.append(np.array([0.0]))  # id of the active instrument
        return np.concatenate(parts)

    def scene(self):
        prims = [
            Triangle(
                np.array([[-BOARD_HALF, -BOARD_HALF, 0], [BOARD_HALF, -BOARD_HALF, 0],
                          [BOARD_HALF, BOARD_HALF, 0]]),
                (120, 120, 120), 1,
            ),
            Triangle(
                np.array([[-BOARD_HALF, -BOARD_HALF, 0], [BOARD_HALF, BOARD_HALF, 0],
                          [-BOARD_HALF, BOARD_HALF, 0]]),
                (120, 120, 120), 1,
            ),
        ]
        for k, p in enumerate(self.tip_particles):
            if k == self.active and not self.completed[k]:
                color = (80, 120, 255)  # matches the controlling instrument
            elif self.completed[k]:
                color = (60, 220, 60)
            else:
                color = (200, 200, 60)
            prims.append(
                Sphere(self.world.positions[p], self.params["sphere_radius"],
                       color, 10 + k)
            )
        for i, inst in enumerate(self.instruments):
            prims.append(
                Capsule(inst.tool.endpoint_a, inst.tool.endpoint_b,
                        inst.tool.radius, (80, 120, 255) if i == 0 else (255, 80, 80),
                        2 + i)
            )
        return prims

    def camera(self):
        return look_at((0.0, -140.0, 110.0), (0.0, 0.0, 10.0), self.config.resolution)
