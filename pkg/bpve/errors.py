"""Exception hierarchy shared by the engines, simulators and runner."""


class BPVEError(Exception):
    """Base class for every error raised by bpve."""


class ConfigurationError(BPVEError, ValueError):
    """Scenario or parameter values that cannot be used (CLI exit code 2)."""


class SeriesError(BPVEError, ValueError):
    """Coefficient vector that is not a valid truncated generating function."""


class HorizonExhaustedError(BPVEError):
    """A chain or scaling search would run past the configured horizon."""


class ExtinctionError(BPVEError):
    """Conditioning on survival where extinction is certain."""


class PopulationOverflowError(BPVEError):
    """A simulated population exceeded the configured cap."""


class GridError(BPVEError, ValueError):
    """Time grid that does not satisfy what an operation needs."""


class RejectionExhaustedError(BPVEError):
    """A rejection sampler accepted nothing within its attempt budget."""
