"""Semantic exceptions shared across the package."""


class GBJError(Exception):
    """Base class for all errors raised by this package."""


class DomainError(GBJError, ValueError):
    """Inputs violate a documented precondition or domain restriction."""


class DegenerateInputError(DomainError):
    """Input is structurally valid but degenerate for the requested operation."""


class SizeError(DomainError):
    """Problem dimension exceeds what the operation supports."""


class BracketError(GBJError):
    """A root-finding bracket does not contain a sign change."""


class NumericalError(GBJError):
    """A numerical routine failed to converge or produced an invalid result."""


class ModelError(GBJError):
    """A statistical model could not be fit (rank deficiency, bad family, ...)."""
