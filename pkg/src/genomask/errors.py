"""Exception hierarchy shared across the package.

Each top-level error class carries the process exit code used by the CLI.
"""


class GenomaskError(Exception):
    """Base class for all package errors."""

    exit_code = 1


class InputError(GenomaskError):
    """Malformed or inconsistent user input."""

    exit_code = 2


class CapacityError(GenomaskError):
    """Requested computation exceeds an enumeration/search budget."""

    exit_code = 3


class NumericalError(GenomaskError):
    """A quantity left its valid range by more than round-off tolerance."""

    exit_code = 4


class ImpossibleContextError(GenomaskError):
    """A conditioning event has probability zero.

    Raised by exact conditional queries; the masking layer maps it to
    "erase with probability one".
    """

    exit_code = 4


class DegenerateSensitiveError(InputError):
    """The sensitive symbols carry zero entropy, so normalized leakage
    is undefined."""
