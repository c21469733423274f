"""Exception hierarchy shared by every otalab module."""


class OtaLabError(Exception):
    """Base class for all otalab errors."""


class UsageError(OtaLabError, ValueError):
    """Caller passed arguments that violate an operation's contract."""


class DomainError(OtaLabError, ArithmeticError):
    """Mathematical operation undefined for the given input (e.g. inverse of 0)."""


class FormatError(OtaLabError, ValueError):
    """Malformed trace, fixture or config content."""


class SearchError(OtaLabError, RuntimeError):
    """An exhaustive search (e.g. toy curve discovery) found nothing."""


class IntegrityError(OtaLabError, RuntimeError):
    """Attack inputs are mutually inconsistent (no candidate can survive)."""
