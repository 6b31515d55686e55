"""
Importance-sampled expectations over a finite set

Estimate E_{A~pi}[q(A)] by sampling A from mu and averaging rho(A) q(A) with rho = pi / mu.
The sampler is admissible when mu(a) = 0 implies pi(a) q(a) = 0.
"""

# Standard Library Imports
from dataclasses import dataclass
import logging

# Third party
import numpy as np

# Local
from offpolicymc.errors import DimensionError, DistributionError, SupportError

LOG = logging.getLogger(__name__)

ZERO_SNAP = 1e-300


@dataclass(frozen=True, eq=False)
class DiscreteProblem:
    """
    A target distribution pi over actions and the function q to integrate
    """

    pi: np.ndarray
    q: np.ndarray

    def __post_init__(self):
        pi = np.array(self.pi, dtype=np.float64)
        q = np.array(self.q, dtype=np.float64)
        if pi.ndim != 1 or pi.shape != q.shape:
            raise DimensionError('pi and q must be vectors of equal length, got %s and %s' % (pi.shape, q.shape))
        if np.any(pi < 0) or abs(pi.sum() - 1.0) > 1e-12:
            raise DistributionError('pi must be a distribution')
        if not np.all(np.isfinite(q)):
            raise DistributionError('q must be finite')
        pi[np.abs(pi) < ZERO_SNAP] = 0.0
        q[np.abs(q) < ZERO_SNAP] = 0.0
        pi.setflags(write=False)
        q.setflags(write=False)
        object.__setattr__(self, 'pi', pi)
        object.__setattr__(self, 'q', q)

    @property
    def num_actions(self):
        return len(self.pi)


def _as_sampler(problem, mu):
    mu = np.asarray(mu, dtype=np.float64)
    if mu.shape != problem.pi.shape:
        raise DimensionError('mu has shape %s, expected %s' % (mu.shape, problem.pi.shape))
    if np.any(mu < 0) or abs(mu.sum() - 1.0) > 1e-12:
        raise DistributionError('mu must be a distribution')
    return mu


def in_lambda(problem, mu):
    """
    True when every action mu skips has pi(a) q(a) = 0
    """

    mu = _as_sampler(problem, mu)
    return bool(np.all((mu > 0) | (problem.pi * problem.q == 0)))


def _check_lambda(problem, mu):
    violations = np.flatnonzero((mu == 0) & (problem.pi * problem.q != 0))
    if violations.size:
        action = int(violations[0])
        raise SupportError('mu(%i) = 0 but pi(%i) q(%i) = %g'
                           % (action, action, action, problem.pi[action] * problem.q[action]), index=action)


def on_policy_mean(problem):
    return float(np.dot(problem.pi, problem.q))


def optimal_sampler(problem):
    """
    mu*(a) proportional to pi(a) |q(a)|, or uniform when pi q vanishes everywhere
    """

    weights = problem.pi * np.abs(problem.q)
    normalizer = weights.sum()
    if normalizer < ZERO_SNAP:
        return np.full(problem.num_actions, 1.0 / problem.num_actions)
    return weights / normalizer


def weighted_mean(problem, mu, checked=True):
    """
    E_{A~mu}[rho(A) q(A)] = sum over supported actions of pi(a) q(a)

    ``checked=False`` skips the Lambda test so samplers outside it (still unbiased by luck,
    e.g. mu = (0, 0, 1) on a cancelling q) can be evaluated.
    """

    mu = _as_sampler(problem, mu)
    if checked:
        _check_lambda(problem, mu)
    support = mu > 0
    return float(np.dot(problem.pi[support], problem.q[support]))


def weighted_variance(problem, mu, checked=True):
    """
    V_{A~mu}(rho(A) q(A)), in closed form
    """

    mu = _as_sampler(problem, mu)
    if checked:
        _check_lambda(problem, mu)
    support = mu > 0
    pi, q, mu = problem.pi[support], problem.q[support], mu[support]
    second_moment = float(np.sum(pi ** 2 * q ** 2 / mu))
    mean = float(np.dot(pi, q))
    return second_moment - mean ** 2
