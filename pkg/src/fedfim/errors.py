"""Exception types shared across the package."""


class FedfimError(Exception):
    """Base class for package errors."""


class DimensionError(FedfimError):
    """Operands have incompatible shapes."""


class DegenerateInputError(FedfimError):
    """Input is empty or otherwise carries no usable information."""


class NumericError(FedfimError):
    """A computation produced non-finite or invalid values."""


class DataFormatError(FedfimError):
    """A data file does not match its declared format."""


class DataConsistencyError(FedfimError):
    """Companion data files disagree with each other."""


class ConfigError(FedfimError):
    """Invalid experiment configuration."""
