"""
Trajectory-level return estimators and a streaming mean
"""

# Standard Library Imports
from dataclasses import dataclass
import logging

# Third party
import numpy as np

# Local
from offpolicymc.errors import InvalidTrajectoryError

LOG = logging.getLogger(__name__)


###################################################################################################
#
# Single trajectories
#
###################################################################################################


def _ratios(traj, pi, mu):
    ratios = []
    for t, (state, action) in enumerate(zip(traj.states, traj.actions)):
        behavior = mu.probs[t, state, action]
        if behavior <= 0:
            raise InvalidTrajectoryError('Behavior probability is zero at t=%i, s=%i, a=%i' % (t, state, action),
                                         index=(t, state, action))
        ratios.append(pi.probs[t, state, action] / behavior)
    return ratios


def pdis_return(traj, pi, mu):
    """
    Per-decision importance sampling return, G <- rho_t (R_{t+1} + G) from the last step back
    """

    ratios = _ratios(traj, pi, mu)
    estimate = 0.0
    for ratio, reward in zip(reversed(ratios), reversed(traj.rewards)):
        estimate = ratio * (reward + estimate)
    return estimate


def ois_return(traj, pi, mu):
    """
    Ordinary importance sampling return, rho_{0:T-1} G_0
    """

    ratios = _ratios(traj, pi, mu)
    return float(np.prod(ratios)) * traj.total_return


###################################################################################################
#
# Batches
#
###################################################################################################


def _batch_ratios(batch, pi, mu):
    times = np.arange(batch.states.shape[1])[None, :]
    behavior = mu.probs[times, batch.states, batch.actions]
    if np.any(behavior <= 0):
        episode, t = (int(index) for index in np.argwhere(behavior <= 0)[0])
        raise InvalidTrajectoryError('Behavior probability is zero in episode %i at t=%i' % (episode, t))
    return pi.probs[times, batch.states, batch.actions] / behavior


def pdis_returns(batch, pi, mu):
    """
    PDIS return of every episode in a TrajectoryBatch: sum_k rho_{0:k} R_{k+1}
    """

    weights = np.cumprod(_batch_ratios(batch, pi, mu), axis=1)
    return np.sum(weights * batch.rewards, axis=1)


def ois_returns(batch, pi, mu):
    """
    Ordinary IS return of every episode in a TrajectoryBatch
    """

    return np.prod(_batch_ratios(batch, pi, mu), axis=1) * np.sum(batch.rewards, axis=1)


###################################################################################################
#
# Streaming aggregation
#
###################################################################################################


@dataclass
class EstimateAccumulator:
    """
    Running mean J of the returns seen so far

    ``sum_sq`` is the running sum of squared deviations from the mean (Welford), so
    ``variance`` is available without storing the returns. An empty accumulator reports a
    mean of 0 and ``is_empty`` True.
    """

    count: int = 0
    mean: float = 0.0
    sum_sq: float = 0.0

    @property
    def is_empty(self):
        return self.count == 0

    @property
    def variance(self):
        """
        Unbiased sample variance; 0 with fewer than two returns
        """
        if self.count < 2:
            return 0.0
        return self.sum_sq / (self.count - 1)

    def update(self, g):
        """
        J <- J + (G - J) / n
        """
        g = float(g)
        self.count += 1
        delta = g - self.mean
        self.mean += delta / self.count
        self.sum_sq += delta * (g - self.mean)
        return self

    def merge(self, other):
        """
        Combine two accumulators built from disjoint streams
        """
        if other.is_empty:
            return EstimateAccumulator(self.count, self.mean, self.sum_sq)
        if self.is_empty:
            return EstimateAccumulator(other.count, other.mean, other.sum_sq)
        count = self.count + other.count
        delta = other.mean - self.mean
        mean = self.mean + delta * other.count / count
        sum_sq = self.sum_sq + other.sum_sq + delta ** 2 * self.count * other.count / count
        return EstimateAccumulator(count, mean, sum_sq)


def update(acc, g):
    return acc.update(g)
