"""
Tests for MDP and policy tables, sampling and the support predicates
"""

# Standard Library Imports
import logging
import os

# Third party
import numpy as np
import pytest

# Local
from offpolicymc.errors import DimensionError, DistributionError
from offpolicymc.exact_dp import compute_hat, compute_q_v, optimal_behavior
from offpolicymc.mdp_core import (
    TabularMDP, TimedPolicy, covers, in_lambda, in_lambda_hat, in_lambda_star, load_mdp, load_policy, make_rng, occupancy,
    sample_trajectories, sample_trajectory, save_mdp, save_policy,
)


# Global constants
DIR = os.path.dirname(os.path.realpath(__file__))
LOG = logging.getLogger(__name__)


# pylint: disable=invalid-name
# pylint: disable=missing-docstring


def two_state_mdp():
    return TabularMDP(
        reward=[[1.0, 0.0], [0.5, 2.0]],
        transition=[[[0.7, 0.3], [0.2, 0.8]], [[0.5, 0.5], [1.0, 0.0]]],
        initial=[0.4, 0.6],
        horizon=2,
    )


def two_state_policy():
    return TimedPolicy([[[0.25, 0.75], [0.6, 0.4]], [[0.5, 0.5], [0.9, 0.1]]])


def test_rows_are_validated():

    with pytest.raises(DistributionError):
        TabularMDP(reward=[[1.0]], transition=[[[0.9]]], initial=[1.0], horizon=1)
    with pytest.raises(DistributionError):
        TimedPolicy([[[1.2, -0.2]]])
    with pytest.raises(DimensionError):
        TabularMDP(reward=[[1.0]], transition=[[[1.0]]], initial=[0.5, 0.5], horizon=1)


def test_deterministic_mdp_has_one_trajectory():

    mdp = TabularMDP(reward=[[2.0]], transition=[[[1.0]]], initial=[1.0], horizon=4)
    policy = TimedPolicy.uniform(mdp.shape)
    for seed in range(5):
        trajectory = sample_trajectory(mdp, policy, make_rng(seed))
        assert trajectory.states == (0, 0, 0, 0)
        assert trajectory.actions == (0, 0, 0, 0)
        assert trajectory.total_return == 8.0


def test_sampling_replays_the_documented_draw_order():

    mdp = two_state_mdp()
    policy = two_state_policy()
    trajectory = sample_trajectory(mdp, policy, make_rng(7))

    # Hand replay: initial state, then per step the action and the next state
    rng = make_rng(7)
    state = int(np.searchsorted(np.cumsum(mdp.initial), rng.random(), side='right'))
    expected = []
    for t in range(mdp.horizon):
        action = int(np.searchsorted(np.cumsum(policy.probs[t, state]), rng.random(), side='right'))
        next_state = int(np.searchsorted(np.cumsum(mdp.transition[state, action]), rng.random(), side='right'))
        expected.append((state, action, mdp.reward[state, action]))
        state = next_state

    assert trajectory.steps == expected
    assert len(trajectory) == mdp.horizon


def test_policy_shape_must_match():

    with pytest.raises(DimensionError):
        sample_trajectory(two_state_mdp(), TimedPolicy.uniform((3, 2, 2)), make_rng(0))


def test_visitation_matches_occupancy():

    mdp = two_state_mdp()
    policy = two_state_policy()
    count = 100000
    batch = sample_trajectories(mdp, policy, count, make_rng(11))
    expected = occupancy(mdp, policy)
    for t in range(mdp.horizon):
        for state in range(mdp.num_states):
            frequency = np.mean(batch.states[:, t] == state)
            p = expected[t, state]
            assert abs(frequency - p) <= 4 * np.sqrt(p * (1 - p) / count)
    assert np.allclose(batch.rewards, mdp.reward[batch.states, batch.actions])


def test_covers():

    pi = two_state_policy()
    assert covers(pi, pi)
    assert covers(TimedPolicy.uniform(pi.shape), pi)
    probs = np.array(pi.probs)
    probs[0, 0] = [1.0, 0.0]
    assert not covers(TimedPolicy(probs), TimedPolicy.uniform(pi.shape))


def test_in_lambda_hat():

    mdp = two_state_mdp()
    pi = two_state_policy()
    q, _ = compute_q_v(mdp, pi)
    _, q_hat = compute_hat(mdp, pi, q)
    assert in_lambda_hat(pi, pi, q_hat)
    assert in_lambda(pi, pi, q)

    # Zero an action where pi * q_hat = 0.5
    weights = np.ones(pi.shape)
    weights[0, 0, 1] = 0.5 / pi.probs[0, 0, 1]
    probs = np.array(pi.probs)
    probs[0, 0] = [1.0, 0.0]
    assert not in_lambda_hat(TimedPolicy(probs), pi, weights)

    # Dropping an action pi never takes stays inside
    target = np.array(pi.probs)
    target[0, 0] = [1.0, 0.0]
    assert in_lambda_hat(TimedPolicy(probs), TimedPolicy(target), weights)


def test_support_sets_are_nested(tiny_instances):

    rng = make_rng(31)
    for mdp, pi in tiny_instances:
        # Action 0 earns nothing, so dropping it on the last step keeps every set
        reward = np.array(mdp.reward)
        reward[:, 0] = 0.0
        mdp = TabularMDP(reward=reward, transition=mdp.transition, initial=mdp.initial, horizon=mdp.horizon)
        q, _ = compute_q_v(mdp, pi)
        _, q_hat = compute_hat(mdp, pi, q)
        u, _, _ = optimal_behavior(mdp, pi)

        probs = np.array(pi.probs)
        probs[-1, :, 0] = 0.0
        probs[-1, :, -1] = 1.0 - probs[-1, :, :-1].sum(axis=-1)
        last_step = TimedPolicy(probs)
        assert in_lambda_hat(last_step, pi, q_hat)
        assert in_lambda_star(last_step, pi, u)
        assert in_lambda(last_step, pi, q)

        probs = np.array(pi.probs)
        t, s = rng.integers(mdp.horizon), rng.integers(mdp.num_states)
        probs[t, s] = 0.0
        probs[t, s, rng.integers(mdp.num_actions)] = 1.0
        member = TimedPolicy(probs)
        if in_lambda_hat(member, pi, q_hat):
            assert in_lambda_star(member, pi, u)
        if in_lambda_star(member, pi, u):
            assert in_lambda(member, pi, q)


def test_files_reload(tmp_path):

    mdp = two_state_mdp()
    policy = two_state_policy()
    save_mdp(mdp, str(tmp_path / 'env.yaml'))
    save_policy(policy, str(tmp_path / 'policy.yaml'))

    loaded = load_mdp(str(tmp_path / 'env.yaml'))
    assert loaded.shape == mdp.shape
    assert np.allclose(loaded.transition, mdp.transition, atol=1e-12)
    assert np.allclose(loaded.reward, mdp.reward, atol=1e-12)
    assert np.allclose(load_policy(str(tmp_path / 'policy.yaml')).probs, policy.probs, atol=1e-12)
