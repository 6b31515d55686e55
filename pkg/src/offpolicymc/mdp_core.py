"""
Finite-horizon tabular MDPs, time-indexed policies, trajectory sampling and support predicates

Dynamics are time-homogeneous: ``reward[s, a]`` and ``transition[s, a, s']`` do not depend on t,
while policies are indexed ``probs[t, s, a]``.

Random draws for a single trajectory happen in a fixed order so runs replay bit for bit:
one ``rng.random()`` for the initial state, then for every t = 0..T-1 one for the action and
one for the next state (the successor of the last step is drawn and discarded). Each draw
picks an index by inverse CDF, ``searchsorted(cumsum(row), u, side='right')``.
"""

# Standard Library Imports
from dataclasses import dataclass, field
import logging
from typing import List, Tuple

# Third party
import numpy as np

# Local
from offpolicymc.errors import DimensionError, DistributionError
from offpolicymc.structured_io import dump_document, load_document

LOG = logging.getLogger(__name__)

ROW_TOLERANCE = 1e-12
ZERO_SNAP = 1e-300


###################################################################################################
#
# Helpers
#
###################################################################################################


def _stochastic_rows(table, name):
    """
    Validate that the last axis holds distributions, then renormalize exactly
    """

    table = np.array(table, dtype=np.float64)
    if not np.all(np.isfinite(table)):
        raise DistributionError('%s contains non-finite entries' % name)
    if np.any(table < -ROW_TOLERANCE) or np.any(table > 1 + ROW_TOLERANCE):
        raise DistributionError('%s has entries outside [0, 1]' % name)
    sums = table.sum(axis=-1)
    worst = np.max(np.abs(sums - 1.0)) if sums.size else 0.0
    if worst > ROW_TOLERANCE:
        raise DistributionError('%s rows must sum to 1 (worst deviation %.3g)' % (name, worst))
    table = np.clip(table, 0.0, 1.0)
    table[table < ZERO_SNAP] = 0.0
    table /= table.sum(axis=-1, keepdims=True)
    table.setflags(write=False)
    return table


def _draw(row, uniform):
    """
    Inverse-CDF categorical draw
    """

    index = int(np.searchsorted(np.cumsum(row), uniform, side='right'))
    # cumsum can end a hair below 1; never step past the last supported index
    if index >= len(row):
        index = int(np.flatnonzero(row)[-1])
    return index


def draw_rows(rows, uniforms):
    """
    Vectorised inverse-CDF draw: one index per row
    """

    cumulative = np.cumsum(rows, axis=-1)
    indices = (cumulative <= uniforms[:, None]).sum(axis=-1)
    last_supported = rows.shape[-1] - 1 - np.argmax(rows[:, ::-1] > 0, axis=-1)
    return np.minimum(indices, last_supported)


###################################################################################################
#
# Types
#
###################################################################################################


@dataclass(frozen=True, eq=False)
class TabularMDP:
    """
    A finite-horizon MDP with deterministic rewards r(s, a)
    """

    reward: np.ndarray
    transition: np.ndarray
    initial: np.ndarray
    horizon: int

    def __post_init__(self):
        reward = np.array(self.reward, dtype=np.float64)
        if reward.ndim != 2:
            raise DimensionError('reward must be [state][action], got shape %s' % (reward.shape,))
        if not np.all(np.isfinite(reward)):
            raise DistributionError('rewards must be finite')
        num_states, num_actions = reward.shape
        transition = _stochastic_rows(self.transition, 'transition')
        if transition.shape != (num_states, num_actions, num_states):
            raise DimensionError('transition must have shape %s, got %s'
                                 % ((num_states, num_actions, num_states), transition.shape))
        initial = _stochastic_rows(self.initial, 'initial')
        if initial.shape != (num_states,):
            raise DimensionError('initial must have shape (%i,), got %s' % (num_states, initial.shape))
        if int(self.horizon) < 1:
            raise DimensionError('horizon must be positive')
        reward.setflags(write=False)
        object.__setattr__(self, 'reward', reward)
        object.__setattr__(self, 'transition', transition)
        object.__setattr__(self, 'initial', initial)
        object.__setattr__(self, 'horizon', int(self.horizon))

    # pylint: disable=missing-docstring
    @property
    def num_states(self):
        return self.reward.shape[0]

    @property
    def num_actions(self):
        return self.reward.shape[1]

    @property
    def shape(self):
        """
        (T, |S|, |A|), the shape every policy on this MDP must have
        """
        return (self.horizon, self.num_states, self.num_actions)

    def to_document(self):
        return {
            'num_states': self.num_states,
            'num_actions': self.num_actions,
            'horizon': self.horizon,
            'reward': self.reward,
            'transition': self.transition,
            'initial': self.initial,
        }

    @classmethod
    def from_document(cls, document):
        mdp = cls(reward=document['reward'], transition=document['transition'],
                  initial=document['initial'], horizon=document['horizon'])
        if (mdp.num_states, mdp.num_actions) != (document['num_states'], document['num_actions']):
            raise DimensionError('Declared sizes do not match the tables')
        return mdp


@dataclass(frozen=True, eq=False)
class TimedPolicy:
    """
    A time-indexed stochastic policy probs[t, s, a]
    """

    probs: np.ndarray

    def __post_init__(self):
        probs = _stochastic_rows(self.probs, 'policy')
        if probs.ndim != 3:
            raise DimensionError('policy must be [time][state][action], got shape %s' % (probs.shape,))
        object.__setattr__(self, 'probs', probs)

    @property
    def shape(self):
        return self.probs.shape

    def to_document(self):
        return {'probs': self.probs}

    @classmethod
    def from_document(cls, document):
        return cls(document['probs'])

    @classmethod
    def uniform(cls, shape):
        horizon, num_states, num_actions = shape
        return cls(np.full((horizon, num_states, num_actions), 1.0 / num_actions))


@dataclass(frozen=True)
class Trajectory:
    """
    One episode: states S_0..S_{T-1}, actions A_0..A_{T-1}, rewards R_1..R_T
    """

    states: Tuple[int, ...]
    actions: Tuple[int, ...]
    rewards: Tuple[float, ...]

    @property
    def steps(self):
        return list(zip(self.states, self.actions, self.rewards))

    def __len__(self):
        return len(self.states)

    @property
    def total_return(self):
        return float(sum(self.rewards))


@dataclass
class TrajectoryBatch:
    """
    Many episodes at once; arrays of shape [episodes, T]
    """

    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray = field(default=None)

    def __len__(self):
        return self.states.shape[0]


###################################################################################################
#
# Operations
#
###################################################################################################


def check_policy_shape(mdp, policy, name='policy'):
    """
    Raise DimensionError unless policy is (T, |S|, |A|) for mdp
    """

    if policy.shape != mdp.shape:
        raise DimensionError('%s has shape %s but the MDP needs %s' % (name, policy.shape, mdp.shape))


def make_rng(seed):
    """
    The generator used everywhere: PCG64 seeded through a SeedSequence
    """

    if isinstance(seed, np.random.Generator):
        return seed
    if not isinstance(seed, np.random.SeedSequence):
        seed = np.random.SeedSequence(int(seed) & 0xFFFFFFFFFFFFFFFF)
    return np.random.Generator(np.random.PCG64(seed))


def sample_trajectory(mdp, policy, rng):
    """
    Roll out one episode of policy on mdp, consuming rng in the documented order
    """

    check_policy_shape(mdp, policy)
    state = _draw(mdp.initial, rng.random())
    states, actions, rewards = [], [], []
    for t in range(mdp.horizon):
        action = _draw(policy.probs[t, state], rng.random())
        next_state = _draw(mdp.transition[state, action], rng.random())
        states.append(state)
        actions.append(action)
        rewards.append(float(mdp.reward[state, action]))
        state = next_state
    return Trajectory(tuple(states), tuple(actions), tuple(rewards))


def sample_trajectories(mdp, policy, count, rng):
    """
    Roll out count episodes at once

    Draw order: ``count`` uniforms for the initial states, then for every t a block of ``count``
    uniforms for the actions followed by a block for the next states.
    """

    check_policy_shape(mdp, policy)
    horizon = mdp.horizon
    states = np.empty((count, horizon), dtype=np.int64)
    actions = np.empty((count, horizon), dtype=np.int64)
    next_states = np.empty((count, horizon), dtype=np.int64)
    current = draw_rows(np.broadcast_to(mdp.initial, (count, mdp.num_states)), rng.random(count))
    for t in range(horizon):
        states[:, t] = current
        actions[:, t] = draw_rows(policy.probs[t, current], rng.random(count))
        next_states[:, t] = draw_rows(mdp.transition[current, actions[:, t]], rng.random(count))
        current = next_states[:, t]
    rewards = mdp.reward[states, actions]
    return TrajectoryBatch(states=states, actions=actions, rewards=rewards, next_states=next_states)


def occupancy(mdp, policy):
    """
    Forward DP: d[t, s] = P(S_t = s) when S_0 ~ p0 and actions follow policy
    """

    check_policy_shape(mdp, policy)
    distribution = np.zeros((mdp.horizon, mdp.num_states))
    distribution[0] = mdp.initial
    for t in range(mdp.horizon - 1):
        state_action = distribution[t][:, None] * policy.probs[t]
        distribution[t + 1] = np.einsum('sa,sap->p', state_action, mdp.transition)
    return distribution


def covers(mu, pi):
    """
    mu_t(a|s) = 0 implies pi_t(a|s) = 0 everywhere (the set Lambda-)
    """

    if mu.shape != pi.shape:
        raise DimensionError('Policies have shapes %s and %s' % (mu.shape, pi.shape))
    return bool(np.all((mu.probs > 0) | (pi.probs == 0)))


def _support_ok(mu, pi, weight):
    if mu.shape != pi.shape or np.shape(weight) != pi.shape:
        raise DimensionError('Policies and weights must share shape %s' % (pi.shape,))
    product = pi.probs * np.asarray(weight)
    return bool(np.all((mu.probs > 0) | (np.abs(product) <= ROW_TOLERANCE)))


def in_lambda(mu, pi, q):
    """
    mu_t(a|s) = 0 implies pi_t(a|s) q_t(s, a) = 0 (the set Lambda)
    """

    return _support_ok(mu, pi, q)


def in_lambda_star(mu, pi, u):
    """
    mu_t(a|s) = 0 implies pi_t(a|s) u_t(s, a) = 0 (the set Lambda*)
    """

    return _support_ok(mu, pi, u)


def in_lambda_hat(mu, pi, hat_q):
    """
    mu_t(a|s) = 0 implies pi_t(a|s) hat_q_t(s, a) = 0

    ``hat_q`` may be a ValueTables or a bare [t][s][a] array.
    """

    table = getattr(hat_q, 'q_hat', hat_q)
    return _support_ok(mu, pi, table)


###################################################################################################
#
# Files
#
###################################################################################################


def save_mdp(mdp, path):
    dump_document(mdp.to_document(), path)


def load_mdp(path):
    return TabularMDP.from_document(load_document(path))


def save_policy(policy, path):
    dump_document(policy.to_document(), path)


def load_policy(path):
    return TimedPolicy.from_document(load_document(path))


def save_policies(policies: List[TimedPolicy], path):
    dump_document({'policies': [policy.probs for policy in policies]}, path)


def load_policies(path):
    return [TimedPolicy(probs) for probs in load_document(path)['policies']]
