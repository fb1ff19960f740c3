"""Exception hierarchy shared by every module.

Each class carries a short ``code`` that the command-line front end prints
so failures can be parsed by scripts.
"""


class FairGraftError(Exception):
    code = "ERROR"


class SchemaError(FairGraftError):
    code = "SCHEMA"


class DataError(FairGraftError):
    code = "DATA"


class ConfigError(FairGraftError, ValueError):
    code = "CONFIG"


class ShapeError(FairGraftError, ValueError):
    code = "SHAPE"


class NumericError(FairGraftError, FloatingPointError):
    code = "NUMERIC"


class StateError(FairGraftError, RuntimeError):
    code = "STATE"


class UndefinedMetricError(FairGraftError, ValueError):
    code = "UNDEFINED_METRIC"
