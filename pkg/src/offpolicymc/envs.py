"""
Random grid worlds, random target policies and small random MDPs
"""

# Standard Library Imports
from dataclasses import dataclass
import logging

# Third party
import numpy as np

# Local
from offpolicymc.errors import ConfigError
from offpolicymc.feature_handler import FeatureHandler
from offpolicymc.mdp_core import TabularMDP, TimedPolicy, make_rng

LOG = logging.getLogger(__name__)

# (row, column) offsets in action order
MOVES = (
    ('up', (-1, 0)),
    ('down', (1, 0)),
    ('left', (0, -1)),
    ('right', (0, 1)),
)


@dataclass(frozen=True)
class GridWorldSpec:
    """
    An n x n grid with horizon n; ``slip`` is the probability of the intended move
    """

    n: int
    slip: float = 0.9
    seed: int = 0

    def __post_init__(self):
        if int(self.n) < 2:
            raise ConfigError('Grid size must be at least 2, got %s' % self.n)
        if not 0.0 <= self.slip <= 1.0:
            raise ConfigError('slip must lie in [0, 1], got %s' % self.slip)


def _neighbor(n, state, move):
    row, col = divmod(state, n)
    row_step, col_step = move
    row, col = row + row_step, col + col_step
    if 0 <= row < n and 0 <= col < n:
        return row * n + col
    # walls keep the agent in place
    return state


def make_gridworld(spec):
    """
    States are cells row * n + col, actions are up/down/left/right

    The intended move happens with probability slip; otherwise a uniformly random direction
    (the intended one included) is taken, so the intended neighbor receives slip + (1 - slip) / 4.
    Rewards are drawn once from uniform[0, 1) and scaled to a maximum of 1; S_0 is uniform.
    """

    n = int(spec.n)
    num_states = n * n
    num_actions = len(MOVES)
    rng = make_rng(spec.seed)
    transition = np.zeros((num_states, num_actions, num_states))
    slip_mass = (1.0 - spec.slip) / num_actions
    for state in range(num_states):
        for action, (_, move) in enumerate(MOVES):
            transition[state, action, _neighbor(n, state, move)] += spec.slip
            for _, other in MOVES:
                transition[state, action, _neighbor(n, state, other)] += slip_mass
    reward = rng.random((num_states, num_actions))
    reward /= reward.max()
    initial = np.full(num_states, 1.0 / num_states)
    LOG.info('Generated %ix%i grid world (seed %s)', n, n, spec.seed)
    return TabularMDP(reward=reward, transition=transition, initial=initial, horizon=n)


def random_policy(mdp, seed):
    """
    Every (t, s) row drawn uniformly from the probability simplex
    """

    rng = make_rng(seed)
    probs = rng.dirichlet(np.ones(mdp.num_actions), size=(mdp.horizon, mdp.num_states))
    return TimedPolicy(probs)


def features_for(mdp, kind):
    return FeatureHandler(kind).build(mdp.shape)


def make_random_mdp(num_states, num_actions, horizon, rng):
    """
    Random dense instance: Dirichlet transition rows and initial distribution, rewards in [-1, 1)
    """

    rng = make_rng(rng)
    transition = rng.dirichlet(np.ones(num_states), size=(num_states, num_actions))
    initial = rng.dirichlet(np.ones(num_states))
    reward = rng.uniform(-1.0, 1.0, size=(num_states, num_actions))
    return TabularMDP(reward=reward, transition=transition, initial=initial, horizon=horizon)


def corrupt_policy(mdp):
    """
    The uniform policy, used as a deliberately poor behavior arm
    """

    return TimedPolicy.uniform(mdp.shape)
