"""Exception hierarchy shared across the package.

The CLI maps these onto exit codes: usage errors exit 1, data errors
exit 2, numerical failures exit 3.
"""

from __future__ import annotations


class EqnError(Exception):
    """Base class for all package errors."""


class UsageError(EqnError):
    """Bad flags, malformed config, or missing input files."""


class DataError(EqnError):
    """Malformed corpus content: bad rows, out-of-range labels or intensities."""


class NumericalError(EqnError):
    """Training diverged or produced non-finite values."""
