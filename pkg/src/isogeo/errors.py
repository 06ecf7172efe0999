"""Exception hierarchy shared by all isogeo modules."""


class IsogeoError(Exception):
    """Base class for toolkit errors."""


class ConfigurationError(IsogeoError, ValueError):
    """Unsupported body, parameter combination or experiment configuration."""


class UsageError(IsogeoError, ValueError):
    """A call violated an operation's preconditions."""


class InsufficientSamplesError(IsogeoError, RuntimeError):
    """An estimate fell below Monte Carlo resolution (e.g. a zero tail)."""


class ResolutionError(IsogeoError, RuntimeError):
    """Histogram bins too thin for the requested sample budget."""
