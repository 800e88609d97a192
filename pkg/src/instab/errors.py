"""Exception hierarchy shared across the package."""


class InstabError(Exception):
    pass


class ParseError(InstabError, ValueError):
    """Model or certificate document could not be parsed."""


class DimensionError(InstabError, ValueError):
    """Matrix shapes are mutually inconsistent."""


class NumericalError(InstabError, ArithmeticError):
    """An eigensolver or integrator failed."""


class SolverError(InstabError, RuntimeError):
    """The conic solver failed to converge (distinct from infeasibility)."""

    def __init__(self, message, phi_L=None):
        super().__init__(message)
        self.phi_L = phi_L


class MissingFError(InstabError, ValueError):
    pass


class PreconditionError(InstabError, ValueError):
    pass


class NoUnstableNoisyMode(InstabError, ValueError):
    """No eigenvalue with positive real part has a noise-excited left eigenvector."""


class DomainError(InstabError, ValueError):
    pass


class RankError(InstabError, ValueError):
    pass


class ToleranceError(InstabError, ArithmeticError):
    pass


class BlowupError(InstabError, OverflowError):
    """Moment propagation exceeded the overflow cap.

    This is divergence evidence rather than a failure; the partial
    trajectory up to the blow-up is attached.
    """

    def __init__(self, message, trajectory=None):
        super().__init__(message)
        self.trajectory = trajectory


class ThresholdError(InstabError, ValueError):
    pass


class ConfigError(InstabError, ValueError):
    pass


class DivisionError(InstabError, ZeroDivisionError):
    pass


class MismatchError(InstabError, ValueError):
    pass
