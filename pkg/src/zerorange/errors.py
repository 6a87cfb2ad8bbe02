"""Exception hierarchy.

Everything raised deliberately by the package derives from
:class:`ZeroRangeError`, so callers can catch one base class.
"""


class ZeroRangeError(Exception):
    pass


class ModelError(ZeroRangeError, ValueError):
    """Invalid model parameters (theta < 1, N < 3, negative rates...)."""


class ZeroRateInFactorial(ZeroRangeError, ValueError):
    pass


class FugacityOutOfRange(ZeroRangeError, ValueError):
    pass


class SeriesNotConverged(ZeroRangeError, ArithmeticError):
    pass


class DensityUnreachable(ZeroRangeError, ValueError):
    pass


class FugacityExceedsRadius(ZeroRangeError, ValueError):
    def __init__(self, site, value, phi_star):
        self.site = site
        self.value = value
        self.phi_star = phi_star
        super().__init__(
            f"fugacity {value!r} at site {site} is not below phi* = {phi_star!r}"
        )


class ImpossibleEvent(ZeroRangeError, ValueError):
    pass


class OccupancyOverflow(ZeroRangeError, OverflowError):
    pass


class Absorbed(ZeroRangeError):
    """Total jump rate is zero; the chain cannot move."""


class OrderingViolated(ZeroRangeError, AssertionError):
    pass


class CouplingRefused(ZeroRangeError, ValueError):
    pass


class DenseTrajectoryRequired(ZeroRangeError, ValueError):
    pass


class WindowOutOfRange(ZeroRangeError, IndexError):
    pass


class StabilityFailure(ZeroRangeError, ArithmeticError):
    pass


class StateSpaceTooLarge(ZeroRangeError, MemoryError):
    pass


class DominationViolated(ZeroRangeError, ValueError):
    pass


class ConfigError(ZeroRangeError, ValueError):
    pass
