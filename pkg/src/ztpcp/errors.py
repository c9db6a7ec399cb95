"""Exception hierarchy shared by the library and the command line."""


class ZTPCPError(Exception):
    """Base class for every error raised by ztpcp."""

    exit_code = 1


class ConfigError(ZTPCPError, ValueError):
    exit_code = 2


class DataError(ZTPCPError, ValueError):
    exit_code = 3


class ParseError(DataError):
    def __init__(self, path, lineno, message):
        self.path = path
        self.lineno = lineno
        super().__init__(f"{path}:{lineno}: {message}")


class BoundsError(DataError):
    pass


class NumericalError(ZTPCPError, ArithmeticError):
    exit_code = 4


class DomainError(ZTPCPError, ValueError):
    """A distribution or function parameter outside its domain."""

    exit_code = 4


class UndefinedMetricError(DataError):
    pass
