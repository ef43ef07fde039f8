"""Exception types shared across the package."""


class InputError(ValueError):
    """Raised when an argument violates an operation's contract."""


class UnsupportedSizeError(InputError):
    """Raised when an instance exceeds a desk-scale enumeration cap."""
