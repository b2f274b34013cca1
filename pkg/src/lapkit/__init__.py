"""Desk-scale laparoscopic robot-learning toolkit.

Deterministic simulated environments with pivot-constrained instruments,
particle-based soft bodies, a software renderer, an RRT planner, trajectory
recording, and a network protocol for remote agents and teleoperation.
"""

__version__ = "0.1.0"

from .envcore import (  # noqa: F401
    BaseEnv,
    EnvConfig,
    RewardSpec,
    SimParams,
    StepResult,
    compute_reward,
    config_from_dict,
    config_to_dict,
    discretize_action,
    load_config,
)
from .envs import ENV_IDS, default_config, make_env, scripted_expert  # noqa: F401
from .errors import LapkitError  # noqa: F401
from .kinematics import (  # noqa: F401
    IDENTITY_RCM,
    InstrumentLimits,
    Pose,
    PTSDState,
    RcmFrame,
    clamp_action,
    oblique_camera_pose,
    pose_to_ptsd,
    ptsd_to_pose,
)
