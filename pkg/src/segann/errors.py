"""Exception types shared across the package.

Everything user-facing derives from SegannError so callers can catch one
base class at the CLI boundary.
"""


class SegannError(Exception):
    """Base class for all package errors."""


class FormatError(SegannError, ValueError):
    """A file or record does not match its declared binary layout."""


class TruncatedFileError(SegannError, IOError):
    """A data file ended mid-record."""


class PredicateError(SegannError, ValueError):
    """A query predicate is malformed or not applicable to the attribute kind."""


class AllocationError(SegannError, ValueError):
    """Bit budget cannot be assigned (e.g. no dimension has variance)."""


class CapacityError(SegannError, ValueError):
    """A capacity constraint cannot be met (partition caps, cell counts)."""


class ConfigError(SegannError, ValueError):
    """Invalid run or build configuration."""


class ContractViolation(SegannError, RuntimeError):
    """A runtime component was handed work outside its declared identity."""


class InsufficientDataError(SegannError, ValueError):
    """Not enough rows to fit the requested model."""
