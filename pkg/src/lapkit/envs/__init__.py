"""The five shipped environments: factory, defaults, and a scripted expert."""
from __future__ import annotations

import numpy as np

from ..envcore import EnvConfig, RewardSpec, SimParams
from ..errors import InvalidConfig, UnknownEnv, UnsupportedEnv
from ..kinematics import pose_to_ptsd, wrap_angle
from . import deflect_spheres, reach, rope_cutting, thread_in_hole, tissue_manipulation
from .base import default_limits
from .deflect_spheres import DeflectSpheresEnv
from .reach import ReachEnv
from .rope_cutting import RopeCuttingEnv
from .thread_in_hole import ThreadInHoleEnv
from .tissue_manipulation import TissueManipulationEnv

ENV_IDS = (
    "reach",
    "deflect_spheres",
    "tissue_manipulation",
    "rope_cutting",
    "thread_in_hole",
)

_ENV_CLASSES = {
    "reach": ReachEnv,
    "deflect_spheres": DeflectSpheresEnv,
    "tissue_manipulation": TissueManipulationEnv,
    "rope_cutting": RopeCuttingEnv,
    "thread_in_hole": ThreadInHoleEnv,
}

REWARD_TABLES = {
    "reach": reach.REWARD_WEIGHTS,
    "deflect_spheres": deflect_spheres.REWARD_WEIGHTS,
    "tissue_manipulation": tissue_manipulation.REWARD_WEIGHTS,
    "rope_cutting": rope_cutting.REWARD_WEIGHTS,
    "thread_in_hole": thread_in_hole.REWARD_WEIGHTS,
}


def default_sim_params(env_id: str, env_params: dict) -> SimParams:
    """Shipped (delta_t_s, frame_skip, time_limit) per environment."""
    if env_id == "reach":
        return SimParams(0.1, 1, 500)
    if env_id == "deflect_spheres":
        m = int(env_params.get("deflections_to_win", 1))
        return SimParams(0.1, 1, 500 * m)
    if env_id == "tissue_manipulation":
        return SimParams(0.1, 1, 500)
    if env_id == "rope_cutting":
        c = int(env_params.get("ropes_to_cut", 3))
        return SimParams(0.1, 1, max(400, 200 * c))
    if env_id == "thread_in_hole":
        return SimParams(0.01, 10, 300)
    raise UnknownEnv(env_id)


def default_config(
    env_id: str,
    observation_type: str = "STATE",
    resolution: int = 64,
    action_mode: str = "continuous",
    discrete_step_size: float = 0.3,
    env_params: dict | None = None,
    sim: SimParams | None = None,
) -> EnvConfig:
    if env_id not in _ENV_CLASSES:
        raise UnknownEnv(f"{env_id!r}; valid ids: {', '.join(ENV_IDS)}")
    env_params = dict(env_params or {})
    return EnvConfig(
        observation_type=observation_type,
        resolution=resolution,
        action_mode=action_mode,
        discrete_step_size=discrete_step_size,
        limits=default_limits(),
        reward_spec=RewardSpec.from_pairs(REWARD_TABLES[env_id]),
        sim=sim or default_sim_params(env_id, env_params),
        env_params=env_params,
    )


def make_env(env_id: str, config: EnvConfig | None = None):
    """Instantiate a shipped environment."""
    cls = _ENV_CLASSES.get(env_id)
    if cls is None:
        raise UnknownEnv(f"{env_id!r}; valid ids: {', '.join(ENV_IDS)}")
    if config is None:
        config = default_config(env_id)
    try:
        return cls(config)
    except InvalidConfig:
        raise


def scripted_expert(env) -> np.ndarray:
    """Greedy proportional controller for reach and deflect_spheres."""
    if isinstance(env, ReachEnv):
        delta = env.target - env.ee
        d = float(np.linalg.norm(delta))
        if d < env.params["success_threshold"]:
            return np.zeros(3)
        return np.clip(delta / d, -1.0, 1.0)
    if isinstance(env, DeflectSpheresEnv):
        if env.done_count >= env.params["deflections_to_win"]:
            return np.zeros(env.action_dim)
        inst = env.instruments[0]
        goal = env.rest_positions[env.active]
        target_ptsd = pose_to_ptsd(goal, inst.rcm, spin=inst.ptsd.spin)
        delta = target_ptsd.as_array() - inst.ptsd.as_array()
        for k in range(3):
            delta[k] = wrap_angle(delta[k])
        vel = np.asarray(inst.limits.velocity_limits, dtype=float)
        dt_o = env.config.sim.observation_dt
        action = np.clip(delta / (vel * dt_o), -1.0, 1.0)
        if env.bimanual:
            action = np.concatenate([action, np.zeros(4)])
        return action
    raise UnsupportedEnv(type(env).__name__)
