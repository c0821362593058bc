"""Exception hierarchy shared by every analysis module."""


class KSWaveError(Exception):
    """Base class for all errors raised by kswave."""


class InvalidRegime(KSWaveError, ValueError):
    pass


class RequiresSingularLimit(KSWaveError, ValueError):
    pass


class NoConvergence(KSWaveError, RuntimeError):
    pass


class DomainTooSmall(KSWaveError, RuntimeError):
    pass


class SingularCoefficient(KSWaveError, FloatingPointError):
    pass


class RootFindingFailure(KSWaveError, RuntimeError):
    pass


class ContinuationBreak(KSWaveError, RuntimeError):
    pass


class BracketFailure(KSWaveError, RuntimeError):
    pass


class ResidualTooLarge(KSWaveError, RuntimeError):
    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class FormulaPole(KSWaveError, ZeroDivisionError):
    pass


class QuadratureDivergence(KSWaveError, ArithmeticError):
    pass


class FitUnreliable(KSWaveError, RuntimeError):
    pass


class OnEssentialSpectrum(KSWaveError, ValueError):
    pass


class StiffIntegration(KSWaveError, RuntimeError):
    pass


class NoGap(KSWaveError, ValueError):
    pass


class WindingNotInteger(KSWaveError, RuntimeError):
    """Accumulated argument change is not close to a multiple of 2*pi."""
