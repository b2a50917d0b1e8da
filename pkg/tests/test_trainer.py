from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from blendmpc import cartpole
from blendmpc.cartpole import CartpoleModel
from blendmpc.mppi import MppiConfig, plan_action
from blendmpc.qnet import QNetwork
from blendmpc.trainer import (
    LambdaSchedule,
    TrainConfig,
    compute_target,
    config_q,
    lambda_at,
    q_function,
    train,
    validate,
    validation_starts,
)

SMALL_MPPI = MppiConfig(horizon=8, n_particles=12)


def small_config(**kw):
    base = dict(mppi=SMALL_MPPI, total_steps=60, episode_length=20, validation_interval=30,
                validation_episodes=2, batch_size=8, hidden=(8, 8),
                schedule=LambdaSchedule("sublinear_decay", 1.0, 0.8, 60))
    base.update(kw)
    return TrainConfig(**base)


def test_schedule_endpoints():
    s = LambdaSchedule("sublinear_decay", 1.0, 0.75, 30_000)
    assert lambda_at(s, 0) == 1.0
    assert lambda_at(s, 30_000) == 0.75
    assert lambda_at(s, 50_000) == 0.75
    assert s.kappa == pytest.approx((1 / 0.75 - 1) / np.sqrt(30_000))
    assert lambda_at(LambdaSchedule("constant", 0.6, 0.6), 123) == 0.6


@given(st.floats(0.05, 1.0), st.floats(0.05, 1.0), st.integers(1, 10**6), st.integers(0, 10**6), st.integers(0, 10**6))
def test_schedule_is_monotone_between_endpoints(l0, lf, total, t1, t2):
    lo, hi = sorted((l0, lf))
    s = LambdaSchedule("sublinear_decay", hi, lo, total)
    a, b = sorted((t1, t2))
    assert lambda_at(s, a) >= lambda_at(s, b) - 1e-15
    assert lo - 1e-12 <= lambda_at(s, b) <= hi


def test_schedule_validation():
    with pytest.raises(ValueError):
        LambdaSchedule("sublinear_decay", 1.0, 0.0, 10)
    with pytest.raises(ValueError):
        LambdaSchedule("exponential")
    with pytest.raises(ValueError):
        lambda_at(LambdaSchedule(), -1)


def test_train_config_validation():
    with pytest.raises(ValueError):
        TrainConfig(features="polar")
    with pytest.raises(ValueError):
        TrainConfig(value_scale=0.0)
    with pytest.raises(ValueError):
        TrainConfig(batch_size=0)
    with pytest.raises(ValueError):
        TrainConfig(target_mode="offline")
    with pytest.raises(ValueError):
        TrainConfig(bias=-1.0)


def test_validation_starts_depend_only_on_validation_seed():
    a = validation_starts(5, 10)
    np.testing.assert_array_equal(a, validation_starts(5, 10))
    assert not np.array_equal(a, validation_starts(6, 10))


def test_validate_is_reproducible():
    cfg = small_config(validation_episodes=3)
    a = validate(None, 1.0, cfg)
    b = validate(None, 1.0, cfg)
    np.testing.assert_array_equal(a.rewards, b.rewards)
    assert a.stderr >= 0 and 0 <= a.success_rate <= 1
    assert np.all(a.rewards <= 0)


def test_compute_target_is_cost_plus_discounted_value():
    cfg = small_config()
    net = QNetwork([6, 8, 1], np.random.default_rng(0))
    model = CartpoleModel(cartpole.bias(cfg.env, cfg.bias))
    s = cartpole.reset(np.random.default_rng(1))
    plan = np.zeros((8, 1))
    target, res = compute_target(1.5, s, plan, model, config_q(net, cfg), cfg.mppi, cfg.blend(0.9),
                                 np.random.default_rng(2))
    again = plan_action(s, plan, model, q_function(net), cfg.mppi, cfg.blend(0.9), np.random.default_rng(2))
    assert target == pytest.approx(1.5 + 0.99 * again.value)
    assert res.value == again.value


def test_value_scale_and_floor_apply_to_planner_queries():
    net = QNetwork([6, 8, 1], np.random.default_rng(0))
    s = np.random.default_rng(1).normal(size=(20, 4))
    a = np.zeros((20, 1))
    base = q_function(net)(s, a)
    np.testing.assert_allclose(base, net(cartpole.features(s), a), rtol=1e-5, atol=1e-6)
    np.testing.assert_allclose(q_function(net, scale=10.0)(s, a), 10.0 * base, rtol=1e-6)
    assert q_function(net, floor=0.0)(s, a).min() >= 0.0
    assert q_function(None) is None
    wrapped = QNetwork([5, 8, 1], np.random.default_rng(0))
    np.testing.assert_allclose(q_function(wrapped, "wrapped")(s, a), wrapped(cartpole.observation(s), a),
                               rtol=1e-5, atol=1e-6)


def test_train_runs_and_records_curve():
    result = train(small_config(), trace_targets=True)
    steps = [p.step for p in result.curve]
    assert steps == [0, 30, 60]
    assert result.curve[0].lam == 1.0 and result.curve[-1].lam == pytest.approx(0.8)
    # the first target only exists once the second plan has run
    assert len(result.losses) == 59
    assert all(np.isfinite(result.losses))
    # one target per transition: (steps - episodes) in-episode plus one bootstrap per episode
    assert len(result.targets) == 60


def test_train_is_deterministic():
    a = train(small_config())
    b = train(small_config())
    assert [p.mean_reward for p in a.curve] == [p.mean_reward for p in b.curve]
    for x, y in zip(a.net.params, b.net.params):
        np.testing.assert_array_equal(x, y)


def test_online_targets_reproduce_from_snapshots():
    result = train(small_config(total_steps=25), trace_targets=True)
    cfg = small_config()
    model = CartpoleModel(cartpole.bias(cfg.env, cfg.bias))
    for rec in result.targets[:5]:
        rng = np.random.default_rng()
        rng.bit_generator.state = rec["rng"]
        res = plan_action(rec["state"], rec["plan"], model, config_q(rec["net"], cfg), cfg.mppi,
                          cfg.blend(rec["lam"]), rng)
        assert rec["target"] == pytest.approx(rec["cost"] + cfg.mppi.gamma * res.value)


def test_batch_target_mode_runs():
    result = train(small_config(target_mode="batch", total_steps=30, batch_size=4))
    assert len(result.losses) == 30


def test_no_learning_leaves_network_untouched():
    cfg = small_config(learn=False, total_steps=30)
    result = train(cfg)
    fresh = QNetwork([6, 8, 8, 1], np.random.default_rng([cfg.seed, 3]))
    for x, y in zip(result.net.params, fresh.params):
        np.testing.assert_array_equal(x, y)
    assert result.losses == []


def test_validate_from_skips_early_points():
    result = train(small_config(validation_interval=10, validate_from=40))
    assert [p.step for p in result.curve] == [0, 40, 50, 60]
