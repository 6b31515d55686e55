"""
Exact backward dynamic programming for values, PDIS variances and variance-reducing behavior policies

Every table is float64 and time-major: ``[t, s]`` or ``[t, s, a]``. Given the MDP, a target
policy pi and (optionally) a behavior policy mu this module computes

    q, v         action and state values of pi
    nu           variance of v_{t+1}(S_{t+1}) given (s, a); zero at t = T-1
    r_tilde      nu + q^2 - v^2, and q_tilde its action value under pi
    r_hat        2 r q - r^2, and q_hat its action value under pi (equals q_tilde + v^2)
    u            the same as q_hat but looking ahead with mu* instead of pi
    w_var        V(G^PDIS | S_t = s) when executing mu against pi
    c, epsilon   Jensen gap of sqrt(q_hat) under pi and its min-cost-to-go

and, for tiny MDPs, the exact moments of the PDIS and ordinary IS estimators by enumerating
every trajectory.
"""

# Standard Library Imports
from dataclasses import dataclass, fields
import logging
from typing import Optional

# Third party
import numpy as np

# Local
from offpolicymc.errors import EnumerationInfeasibleError, SupportError
from offpolicymc.mdp_core import TimedPolicy, check_policy_shape

LOG = logging.getLogger(__name__)

ZERO_SNAP = 1e-300
ENUMERATION_CAP = 10 ** 6

PDIS = 'pdis'
ORDINARY_IS = 'is'


@dataclass(eq=False)
class ValueTables:
    """
    Every DP quantity for one (MDP, target policy) pair

    ``w_var`` is the per-state PDIS variance under the behavior policy named by
    ``behavior_name``.
    """

    v: np.ndarray
    q: np.ndarray
    nu: np.ndarray
    r_tilde: np.ndarray
    q_tilde: np.ndarray
    r_hat: np.ndarray
    q_hat: np.ndarray
    u: np.ndarray
    w_var: np.ndarray
    c_cost: np.ndarray
    epsilon: np.ndarray
    behavior_name: str = 'mu_hat'

    def to_document(self):
        document = {item.name: getattr(self, item.name) for item in fields(self)}
        return document

    @classmethod
    def from_document(cls, document):
        values = {}
        for item in fields(cls):
            value = document[item.name]
            values[item.name] = value if item.name == 'behavior_name' else np.array(value, dtype=np.float64)
        return cls(**values)


###################################################################################################
#
# Backward recursions
#
###################################################################################################


def _expect_next(mdp, table_next):
    """
    sum_{s'} p(s'|s, a) table_next[s'] as an [s, a] array
    """

    return mdp.transition @ table_next


def compute_q_v(mdp, pi):
    """
    q_t = r + P v_{t+1}, q_{T-1} = r, v_t(s) = sum_a pi_t(a|s) q_t(s, a)
    """

    check_policy_shape(mdp, pi)
    horizon = mdp.horizon
    q = np.zeros(mdp.shape)
    v = np.zeros((horizon, mdp.num_states))
    for t in reversed(range(horizon)):
        q[t] = mdp.reward
        if t < horizon - 1:
            q[t] = q[t] + _expect_next(mdp, v[t + 1])
        v[t] = np.sum(pi.probs[t] * q[t], axis=-1)
    return q, v


def compute_nu(mdp, pi, v):
    """
    nu_t(s, a) = V(v_{t+1}(S_{t+1}) | s, a), zero at the last step
    """

    check_policy_shape(mdp, pi)
    nu = np.zeros(mdp.shape)
    for t in range(mdp.horizon - 1):
        mean = _expect_next(mdp, v[t + 1])
        nu[t] = _expect_next(mdp, v[t + 1] ** 2) - mean ** 2
    return nu


def compute_tilde(mdp, pi, q, v, nu):
    """
    r_tilde = nu + q^2 - v^2 and q_tilde, the action value of pi under r_tilde
    """

    check_policy_shape(mdp, pi)
    r_tilde = nu + q ** 2 - (v ** 2)[:, :, None]
    q_tilde = np.zeros(mdp.shape)
    for t in reversed(range(mdp.horizon)):
        q_tilde[t] = r_tilde[t]
        if t < mdp.horizon - 1:
            q_tilde[t] = q_tilde[t] + _expect_next(mdp, np.sum(pi.probs[t + 1] * q_tilde[t + 1], axis=-1))
    return r_tilde, q_tilde


def compute_hat(mdp, pi, q):
    """
    r_hat = 2 r q - r^2 and q_hat, the action value of pi under r_hat
    """

    check_policy_shape(mdp, pi)
    reward = mdp.reward[None, :, :]
    r_hat = 2.0 * reward * q - reward ** 2
    q_hat = np.zeros(mdp.shape)
    for t in reversed(range(mdp.horizon)):
        q_hat[t] = r_hat[t]
        if t < mdp.horizon - 1:
            q_hat[t] = q_hat[t] + _expect_next(mdp, np.sum(pi.probs[t + 1] * q_hat[t + 1], axis=-1))
    return r_hat, q_hat


def _backup_variance(pi_t, mu_t, inner, v_t):
    """
    sum over mu-supported actions of pi^2 / mu * inner, minus v^2
    """

    supported = mu_t > 0
    ratio_sq = np.where(supported, pi_t ** 2 / np.where(supported, mu_t, 1.0), 0.0)
    return np.sum(ratio_sq * inner, axis=-1) - v_t ** 2


def _check_support(pi, mu, q):
    violations = np.argwhere((mu.probs == 0) & (pi.probs * q != 0))
    if violations.size:
        t, s, a = (int(index) for index in violations[0])
        raise SupportError('mu_%i(%i|%i) = 0 but pi q = %g there; mu is outside Lambda'
                           % (t, a, s, pi.probs[t, s, a] * q[t, s, a]), index=(t, s, a))


def pdis_variance(mdp, pi, mu, q=None, v=None, nu=None):
    """
    W_t(s) = V(G^PDIS | S_t = s) when executing mu against target pi

    W_t(s) = sum_{a: mu > 0} pi^2 / mu (P W_{t+1} + nu + q^2)(s, a) - v_t(s)^2, W_T = 0.
    """

    check_policy_shape(mdp, pi)
    check_policy_shape(mdp, mu, 'behavior policy')
    if q is None or v is None:
        q, v = compute_q_v(mdp, pi)
    if nu is None:
        nu = compute_nu(mdp, pi, v)
    _check_support(pi, mu, q)
    w_var = np.zeros((mdp.horizon, mdp.num_states))
    for t in reversed(range(mdp.horizon)):
        inner = nu[t] + q[t] ** 2
        if t < mdp.horizon - 1:
            inner = inner + _expect_next(mdp, w_var[t + 1])
        w_var[t] = _backup_variance(pi.probs[t], mu.probs[t], inner, v[t])
    return w_var


def _proportional(pi_t, weights):
    """
    Rows proportional to pi * sqrt(weights); uniform where that vanishes
    """

    scores = pi_t * np.sqrt(np.maximum(weights, 0.0))
    normalizer = scores.sum(axis=-1, keepdims=True)
    uniform = np.full_like(scores, 1.0 / scores.shape[-1])
    degenerate = normalizer < ZERO_SNAP
    return np.where(degenerate, uniform, scores / np.where(degenerate, 1.0, normalizer))


def optimal_behavior(mdp, pi, q=None, v=None, nu=None):
    """
    The globally optimal behavior policy mu* and its variance

    Backward pass: at each t, u_t uses the variance of mu*_{t+1:} already computed, mu*_t is
    set proportional to pi_t sqrt(u_t), then W*_t follows from the variance backup.
    """

    check_policy_shape(mdp, pi)
    if q is None or v is None:
        q, v = compute_q_v(mdp, pi)
    if nu is None:
        nu = compute_nu(mdp, pi, v)
    u = np.zeros(mdp.shape)
    mu_star = np.zeros(mdp.shape)
    w_var_star = np.zeros((mdp.horizon, mdp.num_states))
    for t in reversed(range(mdp.horizon)):
        u[t] = nu[t] + q[t] ** 2
        if t < mdp.horizon - 1:
            u[t] = u[t] + _expect_next(mdp, w_var_star[t + 1])
        mu_star[t] = _proportional(pi.probs[t], u[t])
        w_var_star[t] = _backup_variance(pi.probs[t], mu_star[t], u[t], v[t])
    return u, TimedPolicy(mu_star), w_var_star


def mu_hat_exact(mdp, pi, q_hat):
    """
    The locally optimal behavior policy: mu_hat_t proportional to pi_t sqrt(q_hat_t)
    """

    check_policy_shape(mdp, pi)
    return TimedPolicy(_proportional(pi.probs, q_hat))


def compute_epsilon(mdp, pi, q_hat):
    """
    Guaranteed variance reduction of mu_hat over pi

    c_t(s) = sum_a pi q_hat - (sum_a pi sqrt(q_hat))^2 and
    epsilon_t(s) = c_t(s) + min_a sum_{s'} p(s'|s, a) epsilon_{t+1}(s').
    """

    check_policy_shape(mdp, pi)
    root = np.sqrt(np.maximum(q_hat, 0.0))
    c_cost = np.sum(pi.probs * q_hat, axis=-1) - np.sum(pi.probs * root, axis=-1) ** 2
    epsilon = np.zeros((mdp.horizon, mdp.num_states))
    for t in reversed(range(mdp.horizon)):
        epsilon[t] = c_cost[t]
        if t < mdp.horizon - 1:
            epsilon[t] = epsilon[t] + np.min(_expect_next(mdp, epsilon[t + 1]), axis=-1)
    return c_cost, epsilon


def expected_return(mdp, v):
    """
    J(pi) = sum_s p0(s) v_0(s)
    """

    return float(np.dot(mdp.initial, v[0]))


def total_variance(mdp, v, w_var):
    """
    Variance of one PDIS sample with S_0 ~ p0, by the law of total variance
    """

    within = float(np.dot(mdp.initial, w_var[0]))
    between = float(np.dot(mdp.initial, v[0] ** 2)) - expected_return(mdp, v) ** 2
    return within + between


def compute_value_tables(mdp, pi, behavior: Optional[TimedPolicy] = None, behavior_name=None):
    """
    Run every recursion; w_var is taken under behavior (default: the exact mu_hat)
    """

    q, v = compute_q_v(mdp, pi)
    nu = compute_nu(mdp, pi, v)
    r_tilde, q_tilde = compute_tilde(mdp, pi, q, v, nu)
    r_hat, q_hat = compute_hat(mdp, pi, q)
    u, _, _ = optimal_behavior(mdp, pi, q=q, v=v, nu=nu)
    c_cost, epsilon = compute_epsilon(mdp, pi, q_hat)
    if behavior is None:
        behavior = mu_hat_exact(mdp, pi, q_hat)
        behavior_name = behavior_name or 'mu_hat'
    w_var = pdis_variance(mdp, pi, behavior, q=q, v=v, nu=nu)
    return ValueTables(v=v, q=q, nu=nu, r_tilde=r_tilde, q_tilde=q_tilde, r_hat=r_hat, q_hat=q_hat, u=u,
                       w_var=w_var, c_cost=c_cost, epsilon=epsilon, behavior_name=behavior_name or 'behavior')


###################################################################################################
#
# Enumeration oracle
#
###################################################################################################


def brute_force_moments(mdp, pi, mu, estimator_kind=PDIS):
    """
    Exact mean and variance of an estimator, per initial state, by enumerating trajectories

    Only branches with positive probability under mu are visited, so any mu is accepted;
    the result equals v_0 exactly when mu is in Lambda.
    """

    check_policy_shape(mdp, pi)
    check_policy_shape(mdp, mu, 'behavior policy')
    if estimator_kind not in (PDIS, ORDINARY_IS):
        raise ValueError('estimator_kind must be %r or %r' % (PDIS, ORDINARY_IS))
    size = (mdp.num_states * mdp.num_actions) ** mdp.horizon
    if size > ENUMERATION_CAP:
        raise EnumerationInfeasibleError('%i trajectories exceed the enumeration cap %i' % (size, ENUMERATION_CAP))

    horizon = mdp.horizon
    reward = mdp.reward
    transition = mdp.transition
    pi_probs, mu_probs = pi.probs, mu.probs

    def visit(t, state, probability, rho, pdis, raw):
        """
        Yield (probability, estimate) for every completion from (t, state)
        """
        for action in np.flatnonzero(mu_probs[t, state] > 0):
            step_probability = probability * mu_probs[t, state, action]
            step_rho = rho * pi_probs[t, state, action] / mu_probs[t, state, action]
            step_reward = reward[state, action]
            step_pdis = pdis + step_rho * step_reward
            step_raw = raw + step_reward
            if t == horizon - 1:
                estimate = step_pdis if estimator_kind == PDIS else step_rho * step_raw
                yield step_probability, estimate
                continue
            for next_state in np.flatnonzero(transition[state, action] > 0):
                yield from visit(t + 1, next_state, step_probability * transition[state, action, next_state],
                                 step_rho, step_pdis, step_raw)

    mean = np.zeros(mdp.num_states)
    variance = np.zeros(mdp.num_states)
    for state in range(mdp.num_states):
        first = 0.0
        second = 0.0
        for probability, estimate in visit(0, state, 1.0, 1.0, 0.0, 0.0):
            first += probability * estimate
            second += probability * estimate ** 2
        mean[state] = first
        variance[state] = second - first ** 2
    return mean, variance
