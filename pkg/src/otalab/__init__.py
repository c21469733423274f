"""otalab: an online-template-attack laboratory on a synthetic leaky ECC stack."""

from .errors import DomainError, FormatError, IntegrityError, OtaLabError, SearchError, UsageError

__version__ = "0.1.0"

__all__ = ["DomainError", "FormatError", "IntegrityError", "OtaLabError", "SearchError",
           "UsageError", "__version__"]
