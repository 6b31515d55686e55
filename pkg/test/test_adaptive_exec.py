"""
Tests for UCB arm selection and adaptive runs
"""

# Standard Library Imports
import logging
import os

# Third party
import numpy as np
import pandas as pd
import pytest

# Local
from offpolicymc.adaptive_exec import (
    MU_HAT, PI, UcbState, arm_pull_fraction, empirical_regret, run_adaptive, select_arm, write_episode_log,
)
from offpolicymc.envs import corrupt_policy
from offpolicymc.errors import InvalidTrajectoryError
from offpolicymc.estimators import pdis_return
from offpolicymc.exact_dp import compute_q_v, expected_return, pdis_variance, total_variance
from offpolicymc.mdp_core import TabularMDP, TimedPolicy, make_rng, sample_trajectory


# Global constants
DIR = os.path.dirname(os.path.realpath(__file__))
LOG = logging.getLogger(__name__)


# pylint: disable=invalid-name
# pylint: disable=missing-docstring


def small_mdp():
    return TabularMDP(
        reward=[[1.0, 0.0], [0.3, 0.9]],
        transition=[[[0.6, 0.4], [0.1, 0.9]], [[0.5, 0.5], [0.8, 0.2]]],
        initial=[0.5, 0.5],
        horizon=2,
    )


def certain_mdp():
    """
    The target policy always earns 3 over three steps; a uniform behavior arm has variance 21
    """
    return TabularMDP(reward=[[1.0, 0.5], [1.0, 0.5]], transition=[[[1.0, 0.0], [1.0, 0.0]], [[1.0, 0.0], [1.0, 0.0]]],
                      initial=[1.0, 0.0], horizon=3)


def variance(mdp, pi, mu):
    q, v = compute_q_v(mdp, pi)
    return total_variance(mdp, v, pdis_variance(mdp, pi, mu, q=q, v=v))


def test_fresh_state_pulls_mu_hat_first():

    state = UcbState()
    assert select_arm(state) == MU_HAT
    state.record(MU_HAT, -1.0)
    assert select_arm(state) == PI


def test_better_average_wins():

    state = UcbState(c=2.0 ** -10)
    state.record(MU_HAT, -1.0)
    state.record(PI, -4.0)
    assert select_arm(state) == MU_HAT
    assert state.total == 2
    assert state.average(PI) == -4.0


def test_ties_go_to_mu_hat():

    state = UcbState(c=1.0)
    state.record(MU_HAT, -2.0)
    state.record(PI, -2.0)
    assert select_arm(state) == MU_HAT


def test_single_episode_is_a_mu_hat_return():

    mdp = small_mdp()
    pi = TimedPolicy(np.tile([[0.3, 0.7], [0.6, 0.4]], (2, 1, 1)))
    mu_hat = TimedPolicy.uniform(mdp.shape)
    result = run_adaptive(mdp, pi, mu_hat, 1, rng=make_rng(3))
    expected = pdis_return(sample_trajectory(mdp, mu_hat, make_rng(3)), pi, mu_hat)
    assert result.J == expected
    assert [record.arm for record in result.log] == [MU_HAT]


def test_bookkeeping():

    mdp = small_mdp()
    pi = TimedPolicy(np.tile([[0.3, 0.7], [0.6, 0.4]], (2, 1, 1)))
    result = run_adaptive(mdp, pi, TimedPolicy.uniform(mdp.shape), 200, rng=make_rng(4))
    returns = np.array([record.G for record in result.log])
    assert result.J == pytest.approx(returns.mean(), rel=1e-12)
    assert result.log[-1].J_so_far == result.J
    for index, arm in enumerate((MU_HAT, PI)):
        rewards = [record.neg_G_sq for record in result.log if record.arm == arm]
        assert result.state.counts[index] == len(rewards)
        assert result.state.average(arm) == pytest.approx(np.mean(rewards), rel=1e-12)


def test_identical_arms_are_unbiased():

    mdp = small_mdp()
    pi = TimedPolicy(np.tile([[0.3, 0.7], [0.6, 0.4]], (2, 1, 1)))
    _, v = compute_q_v(mdp, pi)
    estimates = np.array([run_adaptive(mdp, pi, pi, 20, rng=make_rng(seed)).J for seed in range(400)])
    standard_error = estimates.std(ddof=1) / np.sqrt(estimates.size)
    assert abs(estimates.mean() - expected_return(mdp, v)) <= 3 * standard_error


def test_regret_extremes():

    log = run_adaptive(small_mdp(), TimedPolicy.uniform((2, 2, 2)), TimedPolicy.uniform((2, 2, 2)), 10,
                       rng=make_rng(5)).log
    assert np.all(empirical_regret(log, 2.0, 2.0) == 0.0)
    for record in log:
        record.arm = PI
    assert np.all(empirical_regret(log, 5.0, 1.0) == 0.0)
    assert empirical_regret(log, 1.0, 3.5)[-1] == pytest.approx(10 * 2.5)


def test_corrupted_behavior_arm_is_abandoned():

    mdp = certain_mdp()
    pi = TimedPolicy(np.tile([[1.0, 0.0], [1.0, 0.0]], (3, 1, 1)))
    mu_hat = corrupt_policy(mdp)
    variances = {MU_HAT: variance(mdp, pi, mu_hat), PI: variance(mdp, pi, pi)}
    assert variances[MU_HAT] == pytest.approx(21.0)
    assert variances[PI] == pytest.approx(0.0, abs=1e-12)

    checkpoints = [128, 512, 2048, 8192]
    for seed in range(5):
        result = run_adaptive(mdp, pi, mu_hat, checkpoints[-1], rng=make_rng(seed), variances=variances)
        per_episode = [result.regret[k - 1] / k for k in checkpoints]
        assert all(later < earlier for earlier, later in zip(per_episode, per_episode[1:]))
        assert arm_pull_fraction(result.log, PI) > 0.9
        assert result.J == pytest.approx(np.mean([record.G for record in result.log]))


def test_episode_log_file(tmp_path):

    mdp = small_mdp()
    result = run_adaptive(mdp, TimedPolicy.uniform(mdp.shape), TimedPolicy.uniform(mdp.shape), 5, rng=make_rng(6))
    path = str(tmp_path / 'log' / 'adaptive.csv')
    write_episode_log(result.log, path)
    frame = pd.read_csv(path)
    assert list(frame.columns) == ['episode', 'arm', 'G', 'neg_G_sq', 'J_so_far']
    assert frame['episode'].tolist() == [0, 1, 2, 3, 4]
    assert frame['arm'].tolist()[:2] == [MU_HAT, PI]


def test_behavior_arm_must_cover_the_target():

    mdp = TabularMDP(reward=[[1.0, 0.0]], transition=[[[1.0], [1.0]]], initial=[1.0], horizon=1)
    pi = TimedPolicy([[[0.5, 0.5]]])
    with pytest.raises(InvalidTrajectoryError) as error:
        run_adaptive(mdp, pi, TimedPolicy([[[0.0, 1.0]]]), 1, rng=make_rng(7))
    assert error.value.index == (0, 0, 0)

    # Dropping an action pi never takes is fine
    target = TimedPolicy([[[0.0, 1.0]]])
    assert run_adaptive(mdp, target, TimedPolicy([[[0.0, 1.0]]]), 3, rng=make_rng(7)).J == 0.0


def test_default_generator_is_seeded():

    mdp = small_mdp()
    pi = TimedPolicy(np.tile([[0.3, 0.7], [0.6, 0.4]], (2, 1, 1)))
    mu_hat = TimedPolicy.uniform(mdp.shape)
    default = run_adaptive(mdp, pi, mu_hat, 30)
    seeded = run_adaptive(mdp, pi, mu_hat, 30, rng=make_rng(0))
    assert [record.G for record in default.log] == [record.G for record in seeded.log]
