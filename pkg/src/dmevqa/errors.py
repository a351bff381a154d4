"""Exception types shared across the package; the CLI maps them to exit codes."""


class UsageError(ValueError):
    """Invalid arguments, indices, or graph requests (CLI exit code 1)."""


class ShapeError(UsageError):
    """Incompatible operand shapes."""


class IntegrityError(RuntimeError):
    """Dataset or checkpoint failed verification (CLI exit code 2)."""


class NumericalError(RuntimeError):
    """Non-finite values where finite ones are required (CLI exit code 2)."""
