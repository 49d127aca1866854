"""Exception taxonomy shared by the library and the CLI exit codes."""


class NGIError(Exception):
    exit_code = 1
    kind = "error"


class ConfigError(NGIError, ValueError):
    exit_code = 1
    kind = "config"


class StatisticsError(NGIError, ValueError):
    exit_code = 2
    kind = "statistics"


class MissingInputError(NGIError, FileNotFoundError):
    exit_code = 3
    kind = "missing_input"


class FlagError(NGIError, ValueError):
    exit_code = 4
    kind = "flag_misuse"


class GeometryError(NGIError, ValueError):
    exit_code = 5
    kind = "geometry"


class DataQualityWarning(UserWarning):
    """Measured correlations violate the expected sign beyond their noise."""
