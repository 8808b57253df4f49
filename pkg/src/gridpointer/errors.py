"""Exception types shared across the package."""


class GridPointerError(Exception):
    """Base class for all package errors."""


class DimensionError(GridPointerError, ValueError):
    """Tensor shapes are incompatible with the requested operation."""


class ConfigurationError(GridPointerError, ValueError):
    """An option is outside its supported range (kernel size, dropout rate, ...)."""


class ParseError(GridPointerError, ValueError):
    """A file failed validation; the message names the record and field."""


class NumericError(GridPointerError, ArithmeticError):
    """A non-finite value appeared where the computation requires finiteness."""


class ContractError(GridPointerError, ValueError):
    """A caller violated a documented precondition."""


class FeatureLookupError(GridPointerError, KeyError):
    """A feature record or scale is missing for a requested image id."""
