"""Exception types shared across the package."""


class InputError(ValueError):
    """Invalid argument, file, or configuration supplied by the caller."""


class NumericalError(RuntimeError):
    """A numerical routine failed (singular system, stalled line search, ...)."""
