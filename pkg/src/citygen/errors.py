"""Exception types shared across the pipeline."""


class CityGenError(Exception):
    """Base class for citygen errors."""


class ConfigurationError(CityGenError, ValueError):
    """A palette, model, policy, or plan is mis-specified."""


class DataError(CityGenError, ValueError):
    """Input data violates a contract (shape, range, finiteness)."""
