"""Exception types shared across the package."""


class DimensionError(ValueError):
    """Array shapes are incompatible with the requested operation."""


class CapacityError(RuntimeError):
    """Problem instance exceeds the size limit of an exact solver."""


class EstimationError(RuntimeError):
    """Operator estimation cannot proceed (degenerate input)."""


class ZeroMSEError(ValueError):
    """PSNR of two identical images is infinite and cannot be returned."""


class ConfigError(ValueError):
    """Run configuration is malformed or violates a precondition."""
