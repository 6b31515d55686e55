"""
Adaptive execution: choose between the learned behavior policy and the target policy with UCB

Each episode one arm is executed, its PDIS return G enters the running estimate whatever the
arm, and the arm is rewarded with -G^2. Both arms are unbiased, so maximizing -E[G^2] is the
same as minimizing the variance of G.
"""

# Standard Library Imports
from dataclasses import dataclass, field
import logging
import math
import os
from typing import List

# Third party
import numpy as np
import pandas as pd

# Local
from offpolicymc.errors import InvalidTrajectoryError
from offpolicymc.estimators import EstimateAccumulator, pdis_return
from offpolicymc.mdp_core import check_policy_shape, make_rng, sample_trajectory

LOG = logging.getLogger(__name__)

MU_HAT = 'mu_hat'
PI = 'pi'
ARMS = (MU_HAT, PI)
DEFAULT_EXPLORATION = 2.0 ** -10

EPISODE_LOG_COLUMNS = ['episode', 'arm', 'G', 'neg_G_sq', 'J_so_far']


@dataclass
class UcbState:
    """
    Pull counts and summed arm rewards, in ARMS order
    """

    c: float = DEFAULT_EXPLORATION
    counts: List[int] = field(default_factory=lambda: [0] * len(ARMS))
    reward_sums: List[float] = field(default_factory=lambda: [0.0] * len(ARMS))

    @property
    def total(self):
        return sum(self.counts)

    def average(self, arm):
        index = ARMS.index(arm)
        return self.reward_sums[index] / self.counts[index]

    def record(self, arm, reward):
        index = ARMS.index(arm)
        self.counts[index] += 1
        self.reward_sums[index] += reward


def select_arm(state):
    """
    Unpulled arms first (mu_hat before pi), then the UCB argmax; ties go to mu_hat
    """

    for arm, count in zip(ARMS, state.counts):
        if count == 0:
            return arm
    log_total = math.log(state.total)
    best_arm, best_score = None, -math.inf
    for arm, count in zip(ARMS, state.counts):
        score = state.average(arm) + state.c * math.sqrt(log_total / count)
        if score > best_score:
            best_arm, best_score = arm, score
    return best_arm


@dataclass
class EpisodeRecord:
    episode: int
    arm: str
    G: float  # pylint: disable=invalid-name
    neg_G_sq: float  # pylint: disable=invalid-name
    J_so_far: float  # pylint: disable=invalid-name


@dataclass
class AdaptiveRunResult:
    """
    The final estimate J, one record per episode and, when variances are known, the regret curve
    """

    J: float  # pylint: disable=invalid-name
    log: List[EpisodeRecord]
    regret: np.ndarray = None
    state: UcbState = None


def run_adaptive(mdp, pi, mu_hat, episodes, c=DEFAULT_EXPLORATION, rng=None, variances=None):
    """
    Run ``episodes`` episodes of UCB arm selection and return the pooled PDIS estimate

    ``variances`` may map each arm name to its exact single-episode variance, in which case the
    empirical regret curve is attached to the result. ``rng`` defaults to the generator seeded with 0.

    The behavior arm must cover pi; InvalidTrajectoryError names the first uncovered (t, s, a).
    """

    check_policy_shape(mdp, pi)
    check_policy_shape(mdp, mu_hat, 'behavior policy')
    if episodes < 1:
        raise ValueError('At least one episode is required, got %s' % episodes)
    uncovered = np.argwhere((mu_hat.probs == 0) & (pi.probs > 0))
    if len(uncovered):
        index = tuple(int(item) for item in uncovered[0])
        raise InvalidTrajectoryError('The behavior arm never takes t=%i, s=%i, a=%i where pi does' % index,
                                     index=index)
    rng = make_rng(0 if rng is None else rng)
    policies = {MU_HAT: mu_hat, PI: pi}
    state = UcbState(c=c)
    accumulator = EstimateAccumulator()
    log = []
    for episode in range(episodes):
        arm = select_arm(state)
        trajectory = sample_trajectory(mdp, policies[arm], rng)
        g = pdis_return(trajectory, pi, policies[arm])
        state.record(arm, -g * g)
        accumulator.update(g)
        log.append(EpisodeRecord(episode, arm, g, -g * g, accumulator.mean))
    LOG.debug('Adaptive run: %i episodes, pulls %s', episodes, dict(zip(ARMS, state.counts)))
    regret = None
    if variances is not None:
        regret = empirical_regret(log, variances[MU_HAT], variances[PI])
    return AdaptiveRunResult(J=accumulator.mean, log=log, regret=regret, state=state)


def empirical_regret(log, var_mu_hat, var_pi):
    """
    Cumulative regret after each episode: sum of pulled-arm variances minus k times the best
    """

    variance = {MU_HAT: var_mu_hat, PI: var_pi}
    best = min(var_mu_hat, var_pi)
    gaps = np.array([variance[record.arm] - best for record in log])
    return np.cumsum(gaps)


def arm_pull_fraction(log, arm=PI):
    if not log:
        return 0.0
    return sum(1 for record in log if record.arm == arm) / len(log)


def write_episode_log(log, path):
    """
    CSV with header episode,arm,G,neg_G_sq,J_so_far
    """

    directory = os.path.dirname(path)
    if directory:
        os.makedirs(directory, exist_ok=True)
    frame = pd.DataFrame([vars(record) for record in log], columns=EPISODE_LOG_COLUMNS)
    frame.to_csv(path, index=False, float_format='%.12g')
