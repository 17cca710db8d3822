"""Exception types shared across the package."""


class FastViTError(Exception):
    """Base class for all errors raised by this package."""


class ShapeError(FastViTError):
    """Tensor/parameter dimensions are incompatible.

    Messages always name both offending shapes so failures are actionable
    without a debugger.
    """


class ConfigError(FastViTError):
    """An illegal block, variant, or CLI configuration."""


class ArchiveError(FastViTError):
    """A weight archive is malformed, truncated, or mismatched."""
