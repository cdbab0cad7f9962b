"""Encoder-decoder transcription engine with early attentive sparsification.

Library surface: numeric kernels (`eas.kernels`), the sparsifier
(`eas.sparsify`), the model (`eas.model`), metrics (`eas.metrics`),
grid search (`eas.search`), timing (`eas.profiler`), file formats
(`eas.archive`, `eas.dataset`), and fixtures (`eas.fixtures`).
The `eas` console script wires them together.
"""

from .errors import ConfigError, DataError, MeasurementError
from .sparsify import EasConfig
from .model import ModelConfig, ModelWeights, EncoderTrace, encode, greedy_decode
from .metrics import EvalRecord

__version__ = "0.1.0"

__all__ = [
    "ConfigError",
    "DataError",
    "MeasurementError",
    "EasConfig",
    "ModelConfig",
    "ModelWeights",
    "EncoderTrace",
    "EvalRecord",
    "encode",
    "greedy_decode",
    "__version__",
]
