"""Exception and warning types shared across the package."""


class RangeError(ValueError):
    """A parameter lies outside its admissible range.

    The offending field name is available as ``field``.
    """

    def __init__(self, field, message=None):
        self.field = field
        super().__init__(message or f"invalid value for {field!r}")


class NonConvergence(ArithmeticError):
    """A series or quadrature hit its hard iteration cap before reaching tolerance."""


class SingularSystem(ArithmeticError):
    pass


class ResourceLimit(RuntimeError):
    """A simulation exceeded a configured size cap (alive lines, genome capacity)."""


class InsufficientData(ValueError):
    pass


class NotConverged(UserWarning):
    """Burn-in diagnostic flagged a possible non-stationary state."""
