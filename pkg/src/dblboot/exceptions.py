"""Exception types raised by the resampling engine."""


class DegenerateSampleError(ValueError):
    """The plug-in function is undefined at a (resampled) mean.

    Raised e.g. for the lag-1 autocorrelation of a constant series, where the
    denominator ``m2 - m1**2`` vanishes.
    """


class StudentizationError(ArithmeticError):
    """A Studentizing factor is zero, negative or otherwise unusable."""


class ConfigError(ValueError):
    """A study configuration violates its schema."""
