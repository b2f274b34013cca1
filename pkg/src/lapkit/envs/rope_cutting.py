"""Cut the highlighted rope with the electrocautery hook; wrong cuts fail."""
from __future__ import annotations

import numpy as np

from ..envcore import BaseEnv, EnvConfig
from ..errors import InvalidConfig, UnstableSimulation
from ..kinematics import PTSDState, RcmFrame
from ..sensors import Capsule, Triangle
from ..softbody import SoftWorld, build_rope, cut, step_world
from .base import Instrument, look_at, workspace_diagonal

REWARD_WEIGHTS = (
    ("distance_to_active_rope", 0.0),
    ("change_in_distance_to_active_rope", -5.0),
    ("cut_active_rope", 5.0),
    ("cut_inactive_rope", -5.0),
    ("state_limit_violation", 0.0),
    ("workspace_violation", 0.0),
    ("failed", -20.0),
    ("success", 10.0),
)

DEFAULT_PARAMS = {
    "num_ropes": 5,
    "ropes_to_cut": 3,
    "rope_mass": 1.0,  # g per particle
    "rope_stiffness": 1.0,
    "wall_half_span": 40.0,  # walls at x = +/- this, mm
    "wall_height": 80.0,  # mm
    "min_rope_spacing": 10.0,  # mm in the y-z plane
    "points_per_rope": 3,  # state observation points
    "rope_particles": 10,
    "tool_radius": 2.5,
}

RCM_POSITION = (0.0, 0.0, 150.0)
SUBSTEPS = 10
ITERATIONS = 15


class RopeCuttingEnv(BaseEnv):
    """Electrocautery hook in TPSD space; action dim 5 (motion + activation)."""

    action_dim = 5

    def __init__(self, config: EnvConfig):
        super().__init__(config)
        self.params = dict(DEFAULT_PARAMS)
        unknown = set(config.env_params) - set(self.params)
        if unknown:
            raise InvalidConfig(f"unknown rope-cutting params: {sorted(unknown)}")
        self.params.update(config.env_params)
        r, c = self.params["num_ropes"], self.params["ropes_to_cut"]
        if not r >= c >= 1:
            raise InvalidConfig("require num_ropes >= ropes_to_cut >= 1")
        self._diag = workspace_diagonal(config.limits)

    def _build(self, rng):
        self.world = SoftWorld()
        r = self.params["num_ropes"]
        span = self.params["wall_half_span"]
        placements = []
        attempts = 0
        while len(placements) < r:
            attempts += 1
            if attempts > 10000:
                raise InvalidConfig("cannot place ropes with the given spacing")
            yz = np.array(
                [rng.uniform(-25.0, 25.0), rng.uniform(20.0, self.params["wall_height"] - 15.0)]
            )
            if all(
                np.linalg.norm(yz - q) >= self.params["min_rope_spacing"]
                for q in placements
            ):
                placements.append(yz)
        self.rope_names = []
        for k, (y, z) in enumerate(placements):
            name = f"rope{k}"
            build_rope(
                self.world, name, (-span, y, z), (span, y, z),
                self.params["rope_particles"],
                mass_per_particle=self.params["rope_mass"],
                stiffness=self.params["rope_stiffness"],
                pin_ends=(True, True),
            )
            self.rope_names.append(name)

        self.hook = Instrument(
            RcmFrame(RCM_POSITION, (180.0, 0.0, 0.0)),
            self.config.limits,
            PTSDState(0.0, 0.0, 0.0, 60.0),
            self.params["tool_radius"],
        )
        self.world.register_tool(self.hook.tool)

        self._rng = rng
        self.rope_cut = np.zeros(r, dtype=bool)
        self.active = int(rng.integers(r))
        self.correct_cuts = 0
        self._cut_active_this_step = 0.0
        self._cut_inactive_this_step = 0.0
        self._failed = False
        self._unstable = False
        self._flags = {"state_limit_violated": False, "workspace_violated": False}
        self._prev_distance = self._distance_to_active()

    def _rope_particle_indices(self, k):
        return list(self.world.body_particles(self.rope_names[k]))

    def _distance_to_active(self) -> float:
        pts = self.world.positions[self._rope_particle_indices(self.active)]
        return float(np.min(np.linalg.norm(pts - self.hook.tip, axis=1)))

    def _rope_is_cut(self, k) -> bool:
        return self.world.body_connected_components(self.rope_names[k]) > 1

    def _apply_action(self, action):
        dt = self.config.sim.delta_t_s
        self._cut_active_this_step = 0.0
        self._cut_inactive_this_step = 0.0
        self.hook.tool.active = bool(action[4] > 0)
        for _ in range(self.config.sim.frame_skip):
            self._flags = self.hook.apply(action[:4], dt)
            if self.hook.tool.active:
                cut(self.world, self.hook.tool)
            try:
                step_world(self.world, [self.hook.tool], dt, substeps=SUBSTEPS,
                           iterations=ITERATIONS)
            except UnstableSimulation:
                self._unstable = True
                break
        # account newly severed ropes once, after the skip block
        for k in range(len(self.rope_names)):
            if not self.rope_cut[k] and self._rope_is_cut(k):
                self.rope_cut[k] = True
                if k == self.active:
                    self._cut_active_this_step += 1.0
                    self.correct_cuts += 1
                    self._activate_next()
                else:
                    self._cut_inactive_this_step += 1.0
        remaining = int(np.sum(~self.rope_cut))
        needed = self.params["ropes_to_cut"] - self.correct_cuts
        if needed > 0 and remaining < needed:
            self._failed = True

    def _activate_next(self):
        if self.correct_cuts >= self.params["ropes_to_cut"]:
            return
        remaining = np.nonzero(~self.rope_cut)[0]
        if len(remaining):
            self.active = int(self._rng.choice(remaining))
            self._prev_distance = self._distance_to_active()

    def _features(self):
        success = self.correct_cuts >= self.params["ropes_to_cut"]
        failed = self._failed and not success
        d = self._distance_to_active()
        features = {
            "distance_to_active_rope": d / self._diag,
            "change_in_distance_to_active_rope": (d - self._prev_distance) / self._diag,
            "cut_active_rope": self._cut_active_this_step,
            "cut_inactive_rope": self._cut_inactive_this_step,
            "state_limit_violation": 1.0 if self._flags["state_limit_violated"] else 0.0,
            "workspace_violation": 1.0 if self._flags["workspace_violated"] else 0.0,
            "failed": 1.0 if failed else 0.0,
            "success": 1.0 if success else 0.0,
        }
        self._prev_distance = d
        terminated = success or failed
        return features, terminated, success

    def _rope_points(self, k):
        idx = self._rope_particle_indices(k)
        n = self.params["points_per_rope"]
        chosen = [idx[int(round(t))] for t in np.linspace(0, len(idx) - 1, n)]
        return self.world.positions[chosen].ravel()

    def state_observation(self):
        inst = self.hook
        parts = [
            inst.pose().as_vector(),
            inst.ptsd.as_array(),
            np.array([1.0 if inst.tool.active else 0.0]),
        ]
        for k in range(len(self.rope_names)):
            parts.append(self._rope_points(k))
        parts.append(self._rope_points(self.active))
        return np.concatenate(parts)

    def scene(self):
        span = self.params["wall_half_span"]
        h = self.params["wall_height"]
        prims = []
        for sx, oid in ((-span, 1), (span, 2)):
            prims.append(
                Triangle(np.array([[sx, -30, 0], [sx, 30, 0], [sx, 30, h]]),
                         (140, 140, 140), oid)
            )
            prims.append(
                Triangle(np.array([[sx, -30, 0], [sx, 30, h], [sx, -30, h]]),
                         (140, 140, 140), oid)
            )
        for k, name in enumerate(self.rope_names):
            idx = self._rope_particle_indices(k)
            color = (60, 220, 60) if k == self.active and not self.rope_cut[k] \
                else (200, 120, 80)
            for a, b in zip(idx[:-1], idx[1:]):
                prims.append(
                    Capsule(self.world.positions[a], self.world.positions[b],
                            1.5, color, 10 + k)
                )
        prims.append(
            Capsule(self.hook.tool.endpoint_a, self.hook.tool.endpoint_b,
                    self.hook.tool.radius, (90, 130, 255), 3)
        )
        return prims

    def camera(self):
        return look_at((0.0, -150.0, 110.0), (0.0, 0.0, 40.0), self.config.resolution)
