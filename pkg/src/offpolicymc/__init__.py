r"""
Off-policy Monte Carlo evaluation with variance-reducing behavior policies.

Modules, bottom up:

    mdp_core        finite-horizon MDPs, time-indexed policies, trajectory sampling
    stats_vr        importance-sampled expectations over a finite set
    exact_dp        exact backward DP for values, PDIS variances, mu* and mu_hat
    estimators      PDIS / ordinary IS returns and a streaming mean
    behavior_learn  learning mu_hat from offline tuples with fitted Q
    adaptive_exec   UCB switching between mu_hat and the target policy
    envs            random grid worlds, random policies, feature maps
    experiment      the ``offpolicy-mc`` command line
"""

__version__ = '1.0.0'
