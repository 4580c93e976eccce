"""Exception hierarchy shared by all modules.

The CLI maps these onto process exit codes, so every failure a user can hit
should surface as one of the classes below.
"""


class XsdeError(Exception):
    """Base class for all library errors."""

    exit_code = 1


class ConfigError(XsdeError, ValueError):
    """Invalid problem description or run configuration."""

    exit_code = 2


class InsufficientHistoryError(ConfigError):
    """The initial history is shorter than the largest delay."""


class UnsupportedOperatorError(XsdeError, ValueError):
    """Operation requires a diagonalizable (symmetric, circulant, normal) operator."""

    exit_code = 2


class ConvergenceError(XsdeError, ArithmeticError):
    """A series or iteration failed to converge."""

    exit_code = 3


class DivergenceError(ConvergenceError):
    """Iterates or time steps grew without bound."""

    def __init__(self, message, ratio=None):
        super().__init__(message)
        self.ratio = ratio


class InfeasibleShiftError(ConvergenceError):
    """The chosen shift ``l`` violates the spectral condition."""

    def __init__(self, message, report=None):
        super().__init__(message)
        self.report = report


class NumericalIntegrityError(XsdeError, ArithmeticError):
    """Causality violation, NaN or similar loss of numerical integrity."""

    exit_code = 4


class CausalityError(NumericalIntegrityError):
    """A time kernel that should be causal carries energy at negative times."""


class PoleError(NumericalIntegrityError):
    """A transfer function was evaluated at (or too close to) a pole."""

    def __init__(self, message, xi=None):
        super().__init__(message)
        self.xi = xi
