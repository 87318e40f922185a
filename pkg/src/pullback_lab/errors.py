"""Exception hierarchy shared by every module of the package."""


class PullbackLabError(Exception):
    """Base class for all errors raised by pullback_lab."""


class DescriptorError(PullbackLabError, ValueError):
    """A descriptor was built with parameters that break its invariants."""


class UnknownEta(PullbackLabError, KeyError):
    """Requested perturbation parameter is not part of the family schedule."""


class GridMismatch(PullbackLabError, ValueError):
    """Two objects live on different grids."""


class SolverFailure(PullbackLabError, RuntimeError):
    """A linear solve degenerated."""


class BlowUp(PullbackLabError, RuntimeError):
    """The discrete L2 norm left the configured ceiling.

    ``step`` is the index of the offending step, ``dt`` the step size in use.
    """

    def __init__(self, message, step=None, dt=None):
        super().__init__(message)
        self.step = step
        self.dt = dt


class DivergentTail(PullbackLabError, ArithmeticError):
    """An integral over (-inf, t] does not converge."""


class InvalidMu(PullbackLabError, ValueError):
    """A tempered exponent lies outside the open interval (0, 2 m lambda_1)."""


class NoStabilization(PullbackLabError, RuntimeError):
    """The pullback schedule ran out before successive clouds agreed."""

    def __init__(self, message, metric=None):
        super().__init__(message)
        self.metric = metric


class ConfigError(PullbackLabError):
    """Base class for configuration problems (exit status 2)."""


class ParseError(ConfigError, ValueError):
    def __init__(self, line, key, reason):
        self.line = line
        self.key = key
        self.reason = reason
        super().__init__(f"line {line}: {key}: {reason}")


class ValidationError(ConfigError, ValueError):
    def __init__(self, problems):
        # problems: list of (line, key, reason)
        self.problems = list(problems)
        text = "; ".join(f"line {ln}: {key}: {why}" for ln, key, why in self.problems)
        super().__init__(text)
