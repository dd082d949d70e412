class ConfigurationError(ValueError):
    """Solver or problem configuration violates a documented requirement."""


class NumericalBreakdown(FloatingPointError):
    """An iterate or derived quantity became NaN or infinite."""
