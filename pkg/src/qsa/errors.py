"""Exception types raised across the package."""


class QsaError(Exception):
    pass


class DomainError(QsaError, ValueError):
    """Argument outside the domain where a routine is defined."""


class DivisionByZero(QsaError, ZeroDivisionError):
    pass


class AntipodalInput(QsaError, ValueError):
    """Logarithm requested at -1, where it is not unique."""


class QuadratureFailure(QsaError, RuntimeError):
    pass


class SeriesDivergence(QsaError, RuntimeError):
    pass


class NegativeDensity(QsaError, RuntimeError):
    pass


class DegenerateResidue(QsaError, ArithmeticError):
    pass


class BlowUp(QsaError, RuntimeError):
    pass


class ChartFailure(QsaError, RuntimeError):
    pass


class InsufficientSamples(QsaError, ValueError):
    pass
