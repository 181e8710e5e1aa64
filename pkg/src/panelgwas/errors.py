"""Exception types shared across the package."""


class PanelGwasError(Exception):
    """Base class for fatal errors raised by this package."""


class FormatError(PanelGwasError):
    """A genotype or table file is malformed or inconsistent."""


class UnsupportedFeatureError(FormatError):
    """The input uses a feature outside the supported subset."""


class ConfigError(PanelGwasError):
    """An invalid scan or simulation configuration."""
