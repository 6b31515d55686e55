"""
Exceptions raised by the off-policy Monte Carlo toolkit
"""


class OffPolicyError(Exception):
    """
    Base of every error this package raises on purpose
    """


class DimensionError(OffPolicyError, ValueError):
    """
    Table shapes disagree (policy vs. MDP, dataset vs. features, ...)
    """


class DistributionError(OffPolicyError, ValueError):
    """
    A probability row is negative, above one, or does not sum to one
    """


class SupportError(OffPolicyError, ValueError):
    """
    A behavior distribution puts zero mass where the estimator needs some

    ``index`` is the offending ``(t, s, a)`` triple, or a bare action index
    for single-step problems.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class InvalidTrajectoryError(OffPolicyError, ValueError):
    """
    A trajectory visits a pair the behavior policy could not have chosen

    ``index`` is the uncovered ``(t, s, a)`` triple when it is known.
    """

    def __init__(self, message, index=None):
        super().__init__(message)
        self.index = index


class EnumerationInfeasibleError(OffPolicyError, ValueError):
    """
    Too many trajectories to enumerate exhaustively
    """


class TrainingDivergedError(OffPolicyError, RuntimeError):
    """
    SGD produced non-finite weights

    ``cell`` names the experiment cell (target policy and configs) when raised from a command.
    """

    def __init__(self, stage, message=None, cell=None):
        super().__init__(message or 'Training diverged in stage %s' % stage)
        self.stage = stage
        self.cell = cell


class ConfigError(OffPolicyError, ValueError):
    """
    The experiment configuration is missing or invalid
    """


class StageError(OffPolicyError, RuntimeError):
    """
    A pipeline stage failed; wraps the original cause
    """

    def __init__(self, stage, cause):
        super().__init__('Stage %s failed: %s' % (stage, cause))
        self.stage = stage
        self.cause = cause
