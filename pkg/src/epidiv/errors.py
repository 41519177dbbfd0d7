"""Exception hierarchy shared by all modules."""


class EpidivError(ValueError):
    """Base class for every error raised by the toolkit."""


# geometry
class DepthNonPositive(EpidivError):
    pass


class CoincidentCenters(EpidivError):
    pass


class DegenerateLine(EpidivError):
    pass


class GazeParallelToBaseline(EpidivError):
    pass


class InsufficientViews(EpidivError):
    pass


class IllConditioned(EpidivError):
    pass


class NoConsensus(EpidivError):
    pass


# heatmap
class EpipoleInImage(EpidivError):
    pass


class SingularHomography(EpidivError):
    pass


class ZeroScale(EpidivError):
    pass


# divergence / supervision
class LengthMismatch(EpidivError):
    pass


class EmptyPairSet(EpidivError):
    pass


class ShapeMismatch(EpidivError):
    pass


class NoApplicableTerm(EpidivError):
    pass


class NonFiniteLoss(EpidivError):
    def __init__(self, step: int, value: float):
        super().__init__(f"non-finite loss {value!r} at step {step}")
        self.step = step
        self.value = value


# metrics
class EmptySamples(EpidivError):
    pass
