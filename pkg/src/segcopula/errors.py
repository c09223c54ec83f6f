"""Exception types shared across the package.

The CLI maps these onto process exit codes, so everything user-facing
should raise one of them rather than a bare ValueError.
"""


class ArgumentError(ValueError):
    """Invalid argument or configuration value. Exit code 2."""


class DataError(ValueError):
    """Malformed or inadmissible input data. Exit code 3."""


class NumericalError(RuntimeError):
    """Numerical failure (non-finite values, impossible region). Exit code 4."""


class InvariantViolation(NumericalError):
    """A sampler invariant failed mid-run.

    Carries the sweep index and the offending quantity so aborts are
    diagnosable.
    """

    def __init__(self, message, sweep=None, quantity=None, snapshot=None):
        self.sweep = sweep
        self.quantity = quantity
        self.snapshot = snapshot
        parts = [message]
        if sweep is not None:
            parts.append(f"sweep={sweep}")
        if quantity is not None:
            parts.append(f"quantity={quantity}")
        if snapshot is not None:
            parts.append(f"state snapshot: {snapshot}")
        super().__init__(" | ".join(parts))
