class NrfarError(Exception):
    """Base class for all errors raised by this package."""


class ConfigError(NrfarError, ValueError):
    """Invalid configuration or model shape."""


class DataError(NrfarError, ValueError):
    """Input data that cannot be used (unreadable audio, bad ordering, gaps)."""


class FeatureError(DataError):
    pass


class OrderingError(DataError):
    pass


class CoverageError(DataError):
    pass


class MixingError(DataError):
    pass


class TrainingError(NrfarError):
    pass


class OversamplingError(TrainingError):
    pass


class EvaluationError(DataError):
    pass


class UndefinedTestError(EvaluationError):
    """Statistical test has no defined value for the given data."""


class ProtocolError(NrfarError):
    pass
