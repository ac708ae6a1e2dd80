"""Exception hierarchy; ``exit_code`` is what the CLI returns for each class."""


class ZRPError(Exception):
    exit_code = 1


class ConfigError(ZRPError, ValueError):
    exit_code = 2

    def __init__(self, message, fields=()):
        super().__init__(message)
        self.fields = tuple(fields)


class InvalidRateError(ConfigError):
    pass


class HorizonError(ZRPError, ValueError):
    exit_code = 2


class StateSpaceCapError(ZRPError):
    exit_code = 3


class SaturationError(ZRPError, OverflowError):
    exit_code = 4


class NumericalError(ZRPError, ArithmeticError):
    exit_code = 4
