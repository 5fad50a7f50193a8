class GSAError(ValueError):
    """Base class for all errors raised by gsapme."""


class DatasetError(GSAError):
    pass


class DegenerateOutputError(DatasetError):
    """The output has zero variance, so no variance can be apportioned."""


class NeighborError(GSAError):
    pass


class GameError(GSAError):
    pass


class AllocationError(GSAError):
    pass


class ModelError(GSAError):
    pass


class ConfigError(GSAError):
    pass
