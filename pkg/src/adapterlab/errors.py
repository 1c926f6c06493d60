"""Exception types shared across the library."""


class AdapterLabError(Exception):
    """Base class for all library errors."""


class DimensionError(AdapterLabError):
    """Incompatible tensor or matrix shapes."""


class ConfigError(AdapterLabError):
    """Invalid configuration value (bad kernel size, dropout rate, kind mismatch...)."""


class ContractError(AdapterLabError):
    """An operation precondition was violated (non-scalar loss, asymmetric input...)."""


class PlacementError(AdapterLabError):
    """Adapter registered at an insertion point the backbone does not expose."""


class CompatibilityError(AdapterLabError):
    """Placement plan applied to the wrong backbone kind."""


class RangeError(AdapterLabError):
    """Scalar argument outside its valid range (e.g. diffusion timestep)."""


class DataError(AdapterLabError):
    """Bad or insufficient data (empty training set, too few groups, NaNs...)."""


class VocabularyError(AdapterLabError):
    """Unknown melodic mode or rhythm cycle name."""


class FramingError(AdapterLabError):
    """Waveform length incompatible with a fixed framing."""


class BudgetError(AdapterLabError):
    """Parameter budget below the smallest constructible adapter."""
