"""Exception hierarchy shared by every module of the package."""


class OrbsdeError(Exception):
    """Base class for all errors raised by orbsde."""


class InvalidArgumentError(OrbsdeError, ValueError):
    pass


class CapacityError(OrbsdeError):
    """A requested lattice or enumeration exceeds its size budget."""


class NumericalFailureError(OrbsdeError):
    pass


class IterationFailureError(OrbsdeError):
    """Picard iteration did not reach the requested tolerance."""

    def __init__(self, message, residual=None, time_index=None):
        super().__init__(message)
        self.residual = residual
        self.time_index = time_index

    def at_time(self, i):
        return IterationFailureError(
            f"time index {i}: {self.args[0]}", residual=self.residual, time_index=i
        )


class ParseError(OrbsdeError, ValueError):
    """Syntax or name error in a coefficient expression.

    ``line`` and ``column`` are 1-based; ``offset`` is the 0-based character
    offset into the source text.
    """

    def __init__(self, message, source="", offset=0):
        self.source = source
        self.offset = offset
        self.line = source.count("\n", 0, offset) + 1
        self.column = offset - (source.rfind("\n", 0, offset) + 1) + 1
        self.message = message
        super().__init__(f"{message} (line {self.line}, column {self.column})")
