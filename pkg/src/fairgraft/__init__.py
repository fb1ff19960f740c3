"""Fair tabular learning for graft-failure prediction: GBDT teachers,
tree-to-network distillation, embedding/FM fusion and two-step
demographic-parity debiasing, with a fairness evaluation harness."""

__version__ = "0.1.0"

from .errors import (
    ConfigError,
    DataError,
    FairGraftError,
    NumericError,
    SchemaError,
    ShapeError,
    StateError,
    UndefinedMetricError,
)

__all__ = [
    "__version__",
    "ConfigError",
    "DataError",
    "FairGraftError",
    "NumericError",
    "SchemaError",
    "ShapeError",
    "StateError",
    "UndefinedMetricError",
]
