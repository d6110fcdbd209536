"""Exception hierarchy shared across the toolchain.

The CLI maps these onto stable exit codes: validation failures exit 1,
geometry mismatches exit 2, anything else exits 3.
"""


class OsteoforgeError(Exception):
    """Base class for all errors raised by this package."""


class ValidationError(OsteoforgeError):
    """Invalid input: malformed file, bad schema, violated precondition."""


class GeometryMismatchError(OsteoforgeError):
    """Two volumes or masks that must share geometry do not."""
