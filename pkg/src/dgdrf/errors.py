"""Exception hierarchy shared by all modules."""


class DGDError(Exception):
    pass


class ParameterError(DGDError, ValueError):
    """Invalid argument value or shape."""


class SchemeError(ParameterError):
    """Mixing scheme not applicable to the given graph."""


class DivergenceError(DGDError):
    """A quantity does not converge (e.g. sigma2 >= 1)."""


class DisconnectedNetworkError(DivergenceError, ParameterError):
    pass


class OutOfRegimeError(ParameterError):
    """Theory parameters outside the range where a prescription applies."""


class PreconditionError(ParameterError):
    pass


class ConfigError(ParameterError):
    """Invalid run or experiment configuration.

    ``field`` names the offending config key when known.
    """

    def __init__(self, message, field=None):
        self.field = field
        if field is not None and field not in message:
            message = f"{field}: {message}"
        super().__init__(message)


class IngestionError(DGDError):
    def __init__(self, message, line=None):
        self.line = line
        if line is not None:
            message = f"line {line}: {message}"
        super().__init__(message)


class UnsupportedMetricError(DGDError):
    pass
