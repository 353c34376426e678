"""Exception hierarchy shared by all modules."""


class TelegraphNetError(Exception):
    """Base class. ``module`` names the layer that raised it."""

    module = "telegraphnet"


class StructuralError(TelegraphNetError, ValueError):
    module = "network"


class ConfigurationError(TelegraphNetError, ValueError):
    module = "dynamics"


class DomainError(TelegraphNetError, ValueError):
    module = "dynamics"


class StencilError(TelegraphNetError, ValueError):
    module = "dynamics"


class AssumptionError(TelegraphNetError, ValueError):
    module = "carleman"


class GridMismatchError(TelegraphNetError, ValueError):
    module = "inverse"


class AdmissibilityError(TelegraphNetError, ValueError):
    module = "inverse"


class ConfigFileError(ConfigurationError):
    """Problems in a config document or its referenced files."""

    module = "cli"
