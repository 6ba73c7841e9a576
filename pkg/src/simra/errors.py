"""Exception hierarchy shared by the simulator, harness and generator."""


class SimraError(Exception):
    """Base class for every error raised by this package."""


class CrossSubarrayError(SimraError, ValueError):
    """Two addresses that must share a subarray do not."""


class DecodeError(SimraError, ValueError):
    """An address pair the row decoder cannot combine into one group."""


class UninitializedRowError(SimraError):
    """A row was sensed or copied before anything was written to it."""


class ProtocolError(SimraError):
    """A command sequence outside the idioms the simulator models."""


class AmbiguousProbeError(SimraError, ValueError):
    pass


class DiscoveryError(SimraError):
    pass


class InsufficientEntropyError(SimraError):
    pass


class PlanMismatchError(SimraError, ValueError):
    pass


class InapplicableTestError(SimraError):
    """Sequence is outside a statistical test's validity range."""


class ConfigError(SimraError, ValueError):
    pass
