"""Exception types raised by the toolkit.

Every error derives from :class:`ScatteringError` (itself a ``ValueError``)
so callers can catch the whole family at once.
"""


class ScatteringError(ValueError):
    """Base class for all input and numerical errors in pointscat."""


class EmptyScene(ScatteringError):
    pass


class DuplicatePoint(ScatteringError):
    pass


class SensorOnScatterer(ScatteringError):
    pass


class ZeroAlpha(ScatteringError):
    pass


class NonPositiveLambda(ScatteringError):
    pass


class SingularMatrix(ScatteringError):
    pass


class StepTooLarge(ScatteringError):
    pass


class HorizonNonPositive(ScatteringError):
    pass


class EvaluationAtScatterer(ScatteringError):
    pass


class BeyondHorizon(ScatteringError):
    pass


class NonPositiveEpsilon(ScatteringError):
    pass


class LambdaBelowSpectrum(ScatteringError):
    pass


class EmptyTrace(ScatteringError):
    pass


class TruncationTooShort(ScatteringError):
    pass


class SteeringAtSensor(ScatteringError):
    pass


class ZeroOperator(ScatteringError):
    pass


class EmptyKernel(ScatteringError):
    pass


class NoPeaks(ScatteringError):
    pass
