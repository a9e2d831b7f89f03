"""Exception types shared across the package."""


class OklError(Exception):
    """Base class for all package errors."""


class InvalidScaleError(OklError, ValueError):
    """A length or time scale violates a stated precondition."""


class LengthMismatchError(OklError, ValueError):
    pass


class BlowUpError(OklError, RuntimeError):
    """Positivity could not be restored by repeated step halving."""


class NumericRangeError(OklError, ArithmeticError):
    pass


class ProvenanceError(OklError, ValueError):
    """A trajectory lacks the information needed for a requested quantity."""


class ConfigError(OklError, ValueError):
    pass


class SamplingError(OklError, ValueError):
    pass


class AccuracyError(OklError, ArithmeticError):
    """A quadrature or series failed to reach its declared tolerance."""


class ConsistencyError(OklError, AssertionError):
    """Two independent computations that must agree did not."""
