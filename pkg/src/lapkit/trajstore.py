"""Trajectory recording and JSON Lines persistence (`.lgtraj`)."""
from __future__ import annotations

import base64
import json
import time
from dataclasses import dataclass, field

import numpy as np

from .envcore import config_from_dict, config_to_dict
from .errors import CallbackFailure, Corrupt, VersionMismatch

FORMAT_VERSION = 1
SOURCES = ("human", "scripted", "planner", "agent")


def _encode_observation(obs) -> dict:
    arr = np.asarray(obs)
    if arr.ndim == 1:
        return {"kind": "state", "values": [float(x) for x in arr]}
    return {
        "kind": "image",
        "encoding": str(arr.dtype),
        "shape": list(arr.shape),
        "data": base64.b64encode(np.ascontiguousarray(arr).tobytes()).decode("ascii"),
    }


def _decode_observation(payload: dict) -> np.ndarray:
    if payload["kind"] == "state":
        return np.asarray(payload["values"], dtype=float)
    raw = base64.b64decode(payload["data"])
    return np.frombuffer(raw, dtype=np.dtype(payload["encoding"])).reshape(
        payload["shape"]
    )


@dataclass
class StepRecord:
    index: int
    action: list
    reward: float
    reward_breakdown: list  # [[feature_id, weighted_value], ...]
    terminated: bool
    truncated: bool
    custom: dict
    observation: dict  # encoded payload

    def to_json(self) -> dict:
        return {
            "index": self.index,
            "action": self.action,
            "reward": self.reward,
            "reward_breakdown": self.reward_breakdown,
            "terminated": self.terminated,
            "truncated": self.truncated,
            "custom": self.custom,
            "observation": self.observation,
        }

    @classmethod
    def from_json(cls, data: dict) -> "StepRecord":
        return cls(
            index=int(data["index"]),
            action=list(data["action"]),
            reward=float(data["reward"]),
            reward_breakdown=[list(x) for x in data["reward_breakdown"]],
            terminated=bool(data["terminated"]),
            truncated=bool(data["truncated"]),
            custom=dict(data["custom"]),
            observation=dict(data["observation"]),
        )


@dataclass
class TrajectoryRecord:
    env_id: str
    config: object  # EnvConfig
    seed: int
    source: str
    created: float = field(default_factory=time.time)
    version: int = FORMAT_VERSION
    steps: list = field(default_factory=list)

    def header_json(self) -> dict:
        return {
            "format_version": self.version,
            "env_id": self.env_id,
            "config": config_to_dict(self.config),
            "seed": self.seed,
            "source": self.source,
            "created": self.created,
        }


def record(env, policy, env_id: str, seed: int, source: str = "scripted",
           callbacks: dict | None = None, max_steps: int | None = None,
           ) -> TrajectoryRecord:
    """Roll out `policy(env) -> action` on a freshly reset env and record it."""
    callbacks = callbacks or {}
    env.reset(seed=seed)
    traj = TrajectoryRecord(env_id=env_id, config=env.config, seed=seed,
                            source=source)
    limit = max_steps if max_steps is not None else env.config.sim.time_limit
    for k in range(limit):
        action = np.asarray(policy(env), dtype=float)
        result = env.step(action)
        custom = {}
        for name, fn in callbacks.items():
            try:
                custom[name] = fn(env)
            except Exception as exc:
                raise CallbackFailure(name, exc) from exc
        traj.steps.append(
            StepRecord(
                index=k,
                action=[float(x) for x in action],
                reward=float(result.reward),
                reward_breakdown=[[fid, float(v)]
                                  for fid, v in result.info["reward_breakdown"]],
                terminated=bool(result.terminated),
                truncated=bool(result.truncated),
                custom=custom,
                observation=_encode_observation(result.observation),
            )
        )
        if result.terminated or result.truncated:
            break
    return traj


def write(traj: TrajectoryRecord, filename: str) -> None:
    with open(filename, "w", encoding="utf-8") as fh:
        fh.write(json.dumps(traj.header_json()) + "\n")
        for step in traj.steps:
            fh.write(json.dumps(step.to_json()) + "\n")


def read(filename: str) -> TrajectoryRecord:
    with open(filename, encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if not lines:
        raise Corrupt(1, "empty trajectory file")
    try:
        header = json.loads(lines[0])
        version = int(header["format_version"])
    except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
        raise Corrupt(1, f"bad header: {exc}") from exc
    if version > FORMAT_VERSION:
        raise VersionMismatch(
            f"file format version {version} is newer than supported "
            f"{FORMAT_VERSION}"
        )
    traj = TrajectoryRecord(
        env_id=header["env_id"],
        config=config_from_dict(header["config"]),
        seed=int(header["seed"]),
        source=header["source"],
        created=float(header["created"]),
        version=version,
    )
    for lineno, line in enumerate(lines[1:], start=2):
        try:
            traj.steps.append(StepRecord.from_json(json.loads(line)))
        except (json.JSONDecodeError, KeyError, TypeError, ValueError) as exc:
            raise Corrupt(lineno, str(exc)) from exc
    expected = list(range(len(traj.steps)))
    if [s.index for s in traj.steps] != expected:
        raise Corrupt(len(lines), "step indices not contiguous from 0")
    return traj


def replay_rewards(traj: TrajectoryRecord, env) -> list:
    """Re-run the recorded actions through a fresh env; return the rewards."""
    env.reset(seed=traj.seed)
    rewards = []
    for step in traj.steps:
        result = env.step(np.asarray(step.action, dtype=float))
        rewards.append(float(result.reward))
        if result.terminated or result.truncated:
            break
    return rewards


def decode_observation(step: StepRecord) -> np.ndarray:
    return _decode_observation(step.observation)
