"""Environment lifecycle, frame skipping, and the weighted-feature reward.

Every environment applies one agent action for frame_skip consecutive
simulation steps of delta_t_s seconds, evaluates its reward features once
on the final state, and returns reward = sum(w_i * psi_i).  All
randomness flows from the 64-bit seed passed to reset().
"""
from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .errors import (
    ActionShapeMismatch,
    IndexOutOfRange,
    InvalidConfig,
    MissingFeature,
    NotReset,
)
from .kinematics import InstrumentLimits, PTSDState

OBSERVATION_TYPES = ("STATE", "RGB", "RGBD")
ACTION_MODES = ("continuous", "discrete")


@dataclass(frozen=True)
class SimParams:
    """Simulation time step, frame skip, and episode time limit."""

    delta_t_s: float
    frame_skip: int
    time_limit: int

    def __post_init__(self):
        if self.delta_t_s <= 0:
            raise InvalidConfig("delta_t_s must be positive")
        if self.frame_skip < 1:
            raise InvalidConfig("frame_skip must be >= 1")
        if self.time_limit < 1:
            raise InvalidConfig("time_limit must be >= 1")

    @property
    def observation_dt(self) -> float:
        """Simulated time between agent observations."""
        return self.frame_skip * self.delta_t_s


@dataclass(frozen=True)
class RewardSpec:
    """Ordered (feature id, weight) pairs."""

    weights: tuple

    def __post_init__(self):
        ids = [fid for fid, _ in self.weights]
        if len(ids) != len(set(ids)):
            raise InvalidConfig("reward feature ids must be unique")
        for fid, w in self.weights:
            if not np.isfinite(w):
                raise InvalidConfig(f"weight for {fid!r} is not finite")

    @staticmethod
    def from_pairs(pairs) -> "RewardSpec":
        return RewardSpec(tuple((str(f), float(w)) for f, w in pairs))

    def feature_ids(self):
        return [fid for fid, _ in self.weights]

    def as_dict(self) -> dict:
        return {fid: w for fid, w in self.weights}


def compute_reward(features: dict, spec: RewardSpec):
    """Weighted sum of features; returns (reward, per-term breakdown)."""
    breakdown = []
    total = 0.0
    for fid, w in spec.weights:
        if fid not in features:
            raise MissingFeature(fid)
        term = w * float(features[fid])
        breakdown.append((fid, term))
        total += term
    return total, breakdown


def discretize_action(index: int, dims: int, step_size: float) -> np.ndarray:
    """Map a discrete index to a one-hot continuous action.

    Index 0 is the no-op; index 2k+1 / 2k+2 apply +/- step_size on axis k.
    """
    if not 0 <= index < 2 * dims + 1:
        raise IndexOutOfRange(f"index {index} not in [0, {2 * dims}]")
    action = np.zeros(dims)
    if index > 0:
        axis = (index - 1) // 2
        sign = 1.0 if (index - 1) % 2 == 0 else -1.0
        action[axis] = sign * step_size
    return action


@dataclass
class EnvConfig:
    """Full environment configuration.

    env_params carries the environment-specific record (sphere counts,
    thresholds, ...) validated by the concrete environment.
    """

    observation_type: str
    resolution: int
    action_mode: str
    discrete_step_size: float
    limits: InstrumentLimits
    reward_spec: RewardSpec
    sim: SimParams
    env_params: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.observation_type not in OBSERVATION_TYPES:
            raise InvalidConfig(
                f"observation_type must be one of {OBSERVATION_TYPES}"
            )
        if self.action_mode not in ACTION_MODES:
            raise InvalidConfig(f"action_mode must be one of {ACTION_MODES}")
        if self.discrete_step_size <= 0:
            raise InvalidConfig("discrete_step_size must be positive")
        if self.resolution < 1:
            raise InvalidConfig("resolution must be positive")


_LIMIT_KEYS = {"ptsd_low", "ptsd_high", "cartesian_low", "cartesian_high", "velocity_limits"}
_SIM_KEYS = {"delta_t_s", "frame_skip", "time_limit"}
_CONFIG_KEYS = {
    "observation_type",
    "resolution",
    "action_mode",
    "discrete_step_size",
    "limits",
    "reward_weights",
    "sim",
    "env_params",
}


def _reject_unknown(d: dict, allowed: set, where: str):
    unknown = set(d) - allowed
    if unknown:
        raise InvalidConfig(f"unknown keys in {where}: {sorted(unknown)}")


def config_to_dict(config: EnvConfig) -> dict:
    lim = config.limits
    return {
        "observation_type": config.observation_type,
        "resolution": config.resolution,
        "action_mode": config.action_mode,
        "discrete_step_size": config.discrete_step_size,
        "limits": {
            "ptsd_low": list(lim.ptsd_low.as_array()),
            "ptsd_high": list(lim.ptsd_high.as_array()),
            "cartesian_low": list(lim.cartesian_low),
            "cartesian_high": list(lim.cartesian_high),
            "velocity_limits": list(lim.velocity_limits),
        },
        "reward_weights": [[fid, w] for fid, w in config.reward_spec.weights],
        "sim": {
            "delta_t_s": config.sim.delta_t_s,
            "frame_skip": config.sim.frame_skip,
            "time_limit": config.sim.time_limit,
        },
        "env_params": dict(config.env_params),
    }


def config_from_dict(d: dict) -> EnvConfig:
    """Parse a config record; unknown keys are rejected at every level."""
    if not isinstance(d, dict):
        raise InvalidConfig("config must be a JSON object")
    _reject_unknown(d, _CONFIG_KEYS, "config")
    try:
        lim = d["limits"]
        _reject_unknown(lim, _LIMIT_KEYS, "limits")
        limits = InstrumentLimits(
            ptsd_low=PTSDState.from_array(lim["ptsd_low"]),
            ptsd_high=PTSDState.from_array(lim["ptsd_high"]),
            cartesian_low=tuple(float(v) for v in lim["cartesian_low"]),
            cartesian_high=tuple(float(v) for v in lim["cartesian_high"]),
            velocity_limits=tuple(float(v) for v in lim["velocity_limits"]),
        )
        sim = d["sim"]
        _reject_unknown(sim, _SIM_KEYS, "sim")
        sim_params = SimParams(
            delta_t_s=float(sim["delta_t_s"]),
            frame_skip=int(sim["frame_skip"]),
            time_limit=int(sim["time_limit"]),
        )
        return EnvConfig(
            observation_type=d["observation_type"],
            resolution=int(d["resolution"]),
            action_mode=d["action_mode"],
            discrete_step_size=float(d["discrete_step_size"]),
            limits=limits,
            reward_spec=RewardSpec.from_pairs(d["reward_weights"]),
            sim=sim_params,
            env_params=dict(d.get("env_params", {})),
        )
    except KeyError as exc:
        raise InvalidConfig(f"missing config key: {exc}") from exc
    except (TypeError, ValueError) as exc:
        raise InvalidConfig(str(exc)) from exc


def load_config(path) -> EnvConfig:
    with open(path, "r", encoding="utf-8") as fh:
        return config_from_dict(json.load(fh))


@dataclass
class StepResult:
    observation: object
    reward: float
    terminated: bool
    truncated: bool
    info: dict


class BaseEnv:
    """Shared lifecycle: reset/step, frame skipping, reward assembly.

    Subclasses implement _build(rng), _apply_action(action),
    _features() -> (features, terminated, success), state_observation(),
    and scene()/camera() for image observations.
    """

    action_dim = 4

    def __init__(self, config: EnvConfig):
        self.config = config
        self._step_count = 0
        self._was_reset = False
        self._last_seed = None

    # -- subclass hooks -------------------------------------------------
    def _build(self, rng: np.random.Generator):
        raise NotImplementedError

    def _apply_action(self, action: np.ndarray):
        """Apply the action and advance the world frame_skip times."""
        raise NotImplementedError

    def _features(self):
        raise NotImplementedError

    def state_observation(self) -> np.ndarray:
        raise NotImplementedError

    def scene(self):
        """Render primitives for image observations; see sensors.render."""
        raise NotImplementedError

    def camera(self):
        raise NotImplementedError

    # -- lifecycle ------------------------------------------------------
    def reset(self, seed: int):
        rng = np.random.default_rng(int(seed) & 0xFFFFFFFFFFFFFFFF)
        self._build(rng)
        self._step_count = 0
        self._was_reset = True
        self._done = False
        self._last_seed = int(seed)
        return self._observation()

    def step(self, action) -> StepResult:
        if not self._was_reset:
            raise NotReset("call reset() before step()")
        if self.config.action_mode == "discrete":
            if np.ndim(action) != 0:
                raise ActionShapeMismatch(
                    "discrete action mode expects a scalar index"
                )
            action = discretize_action(
                int(action), self.action_dim, self.config.discrete_step_size
            )
            action = np.clip(action, -1.0, 1.0)
        else:
            action = np.asarray(action, dtype=float)
            if action.shape != (self.action_dim,):
                raise ActionShapeMismatch(
                    f"expected shape ({self.action_dim},), got {action.shape}"
                )

        self._apply_action(action)
        self._step_count += 1

        features, terminated, success = self._features()
        reward, breakdown = compute_reward(features, self.config.reward_spec)
        truncated = (not terminated) and self._step_count >= self.config.sim.time_limit
        info = {
            "features": features,
            "reward_breakdown": breakdown,
            "success": success,
            "step": self._step_count,
        }
        return StepResult(self._observation(), reward, terminated, truncated, info)

    def _observation(self):
        if self.config.observation_type == "STATE":
            return self.state_observation()
        from . import sensors  # local import to avoid a cycle

        frame = sensors.render(self.scene(), self.camera())
        if self.config.observation_type == "RGB":
            return frame.rgb
        return sensors.rgbd_observation(frame, self.camera())
