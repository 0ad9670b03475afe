"""Exception types shared across the package."""


class DualFilterError(Exception):
    """Base class for errors raised by this package."""


class InputError(DualFilterError, ValueError):
    """Malformed or out-of-domain input (configs, observations, parameters)."""


class NumericalError(DualFilterError, ArithmeticError):
    """A computation produced values outside tolerance (e.g. probabilities < 0)."""


class DegenerateRatesError(NumericalError):
    """Two death-rate magnitudes coincide, so the closed-form coefficients blow up."""
