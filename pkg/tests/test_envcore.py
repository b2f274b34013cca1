"""Lifecycle, reward assembly, discrete actions, and config parsing."""
import json

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from lapkit.envcore import (
    EnvConfig,
    RewardSpec,
    SimParams,
    compute_reward,
    config_from_dict,
    config_to_dict,
    discretize_action,
    load_config,
)
from lapkit.envs import default_config, make_env
from lapkit.errors import (
    ActionShapeMismatch,
    IndexOutOfRange,
    InvalidConfig,
    MissingFeature,
    NotReset,
    UnknownEnv,
)


# -- reward --------------------------------------------------------------
def test_compute_reward_weighted_sum_with_breakdown():
    spec = RewardSpec.from_pairs([("distance", -1.0), ("change", 10.0),
                                  ("success", 100.0)])
    features = {"distance": 0.05, "change": -0.01, "success": 0.0}
    reward, breakdown = compute_reward(features, spec)
    assert reward == pytest.approx(-0.05 - 0.1)
    assert breakdown == [("distance", -0.05), ("change", -0.1),
                         ("success", 0.0)]


def test_compute_reward_missing_feature():
    spec = RewardSpec.from_pairs([("distance", -1.0)])
    with pytest.raises(MissingFeature):
        compute_reward({}, spec)


def test_reward_spec_rejects_duplicates():
    with pytest.raises(InvalidConfig):
        RewardSpec.from_pairs([("a", 1.0), ("a", 2.0)])


@given(st.dictionaries(st.text(min_size=1, max_size=8),
                       st.floats(-100, 100), min_size=1, max_size=8))
def test_compute_reward_matches_manual_sum(features):
    spec = RewardSpec.from_pairs([(k, 2.0) for k in features])
    reward, breakdown = compute_reward(features, spec)
    assert reward == pytest.approx(sum(2.0 * v for v in features.values()))
    assert sum(v for _, v in breakdown) == pytest.approx(reward)


# -- discrete actions ----------------------------------------------------
def test_discretize_action_encoding():
    assert np.array_equal(discretize_action(0, 3, 0.5), np.zeros(3))
    assert np.array_equal(discretize_action(1, 3, 0.5), [0.5, 0, 0])
    assert np.array_equal(discretize_action(2, 3, 0.5), [-0.5, 0, 0])
    assert np.array_equal(discretize_action(5, 3, 0.5), [0, 0, 0.5])
    assert np.array_equal(discretize_action(6, 3, 0.5), [0, 0, -0.5])


def test_discretize_action_out_of_range():
    with pytest.raises(IndexOutOfRange):
        discretize_action(7, 3, 0.5)
    with pytest.raises(IndexOutOfRange):
        discretize_action(-1, 3, 0.5)


def test_discrete_mode_step():
    config = default_config("reach", action_mode="discrete",
                            discrete_step_size=0.5)
    env = make_env("reach", config)
    env.reset(seed=0)
    before = env.ee.copy()
    env.step(1)  # +x
    assert env.ee[0] > before[0]
    assert env.ee[1] == pytest.approx(before[1])
    with pytest.raises(ActionShapeMismatch):
        env.step(np.array([0.1, 0.2, 0.3]))


# -- sim params ----------------------------------------------------------
def test_sim_params_validation():
    with pytest.raises(InvalidConfig):
        SimParams(0.0, 1, 100)
    with pytest.raises(InvalidConfig):
        SimParams(0.1, 0, 100)
    with pytest.raises(InvalidConfig):
        SimParams(0.1, 1, 0)
    assert SimParams(0.01, 10, 300).observation_dt == pytest.approx(0.1)


# -- lifecycle -----------------------------------------------------------
def test_step_before_reset_raises():
    env = make_env("reach")
    with pytest.raises(NotReset):
        env.step(np.zeros(3))


def test_action_shape_mismatch():
    env = make_env("reach")
    env.reset(seed=0)
    with pytest.raises(ActionShapeMismatch):
        env.step(np.zeros(4))


def test_truncation_at_time_limit():
    config = default_config("reach", sim=SimParams(0.1, 1, 3))
    env = make_env("reach", config)
    env.reset(seed=1)
    results = [env.step(np.zeros(3)) for _ in range(3)]
    assert not results[0].truncated and not results[1].truncated
    assert results[2].truncated and not results[2].terminated


def test_info_carries_features_and_breakdown():
    env = make_env("reach")
    env.reset(seed=0)
    result = env.step(np.zeros(3))
    assert set(env.config.reward_spec.feature_ids()) <= set(
        result.info["features"]
    )
    total = sum(v for _, v in result.info["reward_breakdown"])
    assert total == pytest.approx(result.reward)


def test_unknown_env():
    with pytest.raises(UnknownEnv):
        make_env("bogus")
    with pytest.raises(UnknownEnv):
        default_config("bogus")


# -- config serialization ------------------------------------------------
def test_config_round_trip():
    config = default_config("deflect_spheres",
                            env_params={"num_spheres": 3})
    d = config_to_dict(config)
    back = config_from_dict(json.loads(json.dumps(d)))
    assert config_to_dict(back) == d


def test_config_rejects_unknown_keys_at_all_levels():
    base = config_to_dict(default_config("reach"))
    for mutate in (
        lambda d: d.update(bogus=1),
        lambda d: d["limits"].update(bogus=1),
        lambda d: d["sim"].update(bogus=1),
    ):
        d = json.loads(json.dumps(base))
        mutate(d)
        with pytest.raises(InvalidConfig):
            config_from_dict(d)


def test_config_rejects_missing_and_invalid():
    base = config_to_dict(default_config("reach"))
    d = json.loads(json.dumps(base))
    del d["sim"]
    with pytest.raises(InvalidConfig):
        config_from_dict(d)
    d = json.loads(json.dumps(base))
    d["observation_type"] = "LIDAR"
    with pytest.raises(InvalidConfig):
        config_from_dict(d)


def test_load_config_file(tmp_path):
    config = default_config("reach")
    p = tmp_path / "config.json"
    p.write_text(json.dumps(config_to_dict(config)))
    loaded = load_config(p)
    assert config_to_dict(loaded) == config_to_dict(config)


def test_env_rejects_unknown_env_params():
    config = default_config("reach", env_params={"bogus_knob": 1})
    with pytest.raises(InvalidConfig):
        make_env("reach", config)
