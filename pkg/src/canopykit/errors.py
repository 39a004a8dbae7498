"""Exception types shared across the toolkit.

The CLI maps these onto process exit codes: usage problems exit 2, input
problems exit 3, numerical failures exit 4.
"""


class CanopykitError(Exception):
    """Base class for all toolkit errors."""

    exit_code = 1


class UsageError(CanopykitError):
    """Bad flags, bad config keys, inconsistent options."""

    exit_code = 2


class InputError(CanopykitError):
    """Missing or malformed input data."""

    exit_code = 3


class RasterFormatError(InputError):
    """Raster container is malformed (bad magic, truncated, bad header)."""


class StructuralError(InputError):
    """Input is well-formed but internally inconsistent (shape mismatch etc.)."""


class NumericalError(CanopykitError):
    """Computation produced non-finite values or an empty, undefined result."""

    exit_code = 4
