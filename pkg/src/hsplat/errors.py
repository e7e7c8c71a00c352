"""Exception types shared across the package."""


class HsplatError(Exception):
    """Base class for package errors."""


class DataError(HsplatError):
    """Malformed or unreadable input data (files, manifests, shapes)."""


class NumericError(HsplatError):
    """Non-finite values encountered where finite ones are required."""
