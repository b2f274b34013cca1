"""Reach task: drive a Cartesian end-effector onto a target sphere."""
from __future__ import annotations

import numpy as np

from ..envcore import BaseEnv, EnvConfig
from ..errors import InvalidConfig
from ..sensors import Sphere
from .base import look_at, sample_in_box, workspace_diagonal

REWARD_WEIGHTS = (
    ("distance_to_target", -1.0),
    ("change_in_distance", -10.0),
    ("time_step_cost", 0.0),
    ("workspace_violation", 0.0),
    ("success", 100.0),
)

DEFAULT_PARAMS = {
    "target_radius": 8.0,  # visual sphere radius, mm
    "success_threshold": 3.0,  # mm
    "randomize_start": True,
    "min_reset_distance": 30.0,  # mm
    "ee_speed": 25.0,  # mm/s per unit action
}


class ReachEnv(BaseEnv):
    """End-effector controlled directly in Cartesian space; action dim 3."""

    action_dim = 3

    def __init__(self, config: EnvConfig):
        super().__init__(config)
        self.params = dict(DEFAULT_PARAMS)
        unknown = set(config.env_params) - set(self.params)
        if unknown:
            raise InvalidConfig(f"unknown reach params: {sorted(unknown)}")
        self.params.update(config.env_params)
        if self.params["success_threshold"] <= 0:
            raise InvalidConfig("success_threshold must be positive")
        if self.params["target_radius"] <= 0:
            raise InvalidConfig("target_radius must be positive")
        self._diag = workspace_diagonal(config.limits)

    def _build(self, rng):
        lo = np.asarray(self.config.limits.cartesian_low, dtype=float)
        hi = np.asarray(self.config.limits.cartesian_high, dtype=float)
        margin = 0.15 * (hi - lo)
        center = 0.5 * (lo + hi)
        if self.params["randomize_start"]:
            self.ee = sample_in_box(rng, lo + margin, hi - margin)
        else:
            self.ee = center.copy()
        while True:
            self.target = sample_in_box(rng, lo + margin, hi - margin)
            if np.linalg.norm(self.target - self.ee) >= self.params["min_reset_distance"]:
                break
        self._prev_distance = self._distance()
        self._flags = {"workspace_violated": False}

    def _distance(self) -> float:
        return float(np.linalg.norm(self.ee - self.target))

    def _apply_action(self, action):
        dt = self.config.sim.delta_t_s
        speed = self.params["ee_speed"]
        lo = np.asarray(self.config.limits.cartesian_low, dtype=float)
        hi = np.asarray(self.config.limits.cartesian_high, dtype=float)
        violated = False
        for _ in range(self.config.sim.frame_skip):
            candidate = self.ee + np.clip(action, -1, 1) * speed * dt
            clipped = np.clip(candidate, lo, hi)
            if np.any(clipped != candidate):
                violated = True
            self.ee = clipped
        self._flags = {"workspace_violated": violated}

    def _features(self):
        d = self._distance()
        success = d < self.params["success_threshold"]
        features = {
            "distance_to_target": d / self._diag,
            "change_in_distance": (d - self._prev_distance) / self._diag,
            "time_step_cost": 1.0,
            "workspace_violation": 1.0 if self._flags["workspace_violated"] else 0.0,
            "success": 1.0 if success else 0.0,
        }
        self._prev_distance = d
        return features, success, success

    def state_observation(self):
        return np.concatenate([self.ee, self.target])

    def scene(self):
        return [
            Sphere(self.ee, 4.0, (80, 160, 255), 1),
            Sphere(self.target, self.params["target_radius"], (255, 80, 80), 2),
        ]

    def camera(self):
        lo = np.asarray(self.config.limits.cartesian_low, dtype=float)
        hi = np.asarray(self.config.limits.cartesian_high, dtype=float)
        center = 0.5 * (lo + hi)
        eye = center + np.array([0.0, -1.6, 1.2]) * (hi - lo).max()
        return look_at(eye, center, self.config.resolution)
