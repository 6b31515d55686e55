"""
Shared fixtures: small random instances for the exact oracles
"""

# Standard Library Imports
import logging

# Third party
import numpy as np
import pytest

# Local
from offpolicymc.envs import make_random_mdp
from offpolicymc.mdp_core import TabularMDP, TimedPolicy, make_rng


# Global constants
LOG = logging.getLogger(__name__)
INSTANCE_COUNT = 100


# pylint: disable=missing-docstring


def random_target(mdp, rng):
    """
    Dirichlet rows with an action occasionally switched off
    """
    probs = rng.dirichlet(np.ones(mdp.num_actions), size=(mdp.horizon, mdp.num_states))
    if mdp.num_actions > 1:
        off = rng.random((mdp.horizon, mdp.num_states)) < 0.3
        column = rng.integers(0, mdp.num_actions, size=(mdp.horizon, mdp.num_states))
        probs[off, column[off]] = 0.0
        probs /= probs.sum(axis=-1, keepdims=True)
    return TimedPolicy(probs)


def random_member(pi, rng):
    """
    A random behavior policy that may only drop actions pi never takes
    """
    probs = rng.dirichlet(np.ones(pi.shape[-1]), size=pi.shape[:-1])
    drop = (pi.probs == 0) & (rng.random(pi.shape) < 0.5)
    probs[drop] = 0.0
    probs /= probs.sum(axis=-1, keepdims=True)
    return TimedPolicy(probs)


@pytest.fixture(scope='session')
def tiny_instances():
    """
    (mdp, pi, rng) triples with |S| <= 3, |A| <= 2, T <= 3
    """
    rng = make_rng(20240611)
    instances = []
    for _ in range(INSTANCE_COUNT):
        num_states = int(rng.integers(1, 4))
        num_actions = int(rng.integers(1, 3))
        horizon = int(rng.integers(1, 4))
        mdp = make_random_mdp(num_states, num_actions, horizon, rng)
        instances.append((mdp, random_target(mdp, rng)))
    return instances


@pytest.fixture
def chain_mdp():
    """
    One state, one action, reward 1, horizon 2
    """
    return TabularMDP(reward=[[1.0]], transition=[[[1.0]]], initial=[1.0], horizon=2)


@pytest.fixture
def make_member():
    return random_member
