"""Exception types shared across the package.

Plain ``ValueError`` is reserved for invalid parameters and contract
violations; the classes here let the CLI map failures to distinct exit codes.
"""


class DataError(ValueError):
    """Malformed or inconsistent input data (files, panels, matrices)."""


class NumericalError(RuntimeError):
    """A numerical procedure failed to converge or left its valid domain."""
