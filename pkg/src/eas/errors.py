"""Error types shared across the engine.

ConfigError maps to CLI exit code 2, DataError to exit code 3. Plain
ValueError is used for local argument/shape violations inside the numeric
layers.
"""


class ConfigError(ValueError):
    """A run/model configuration is invalid (bad stage, sparsity, grid...)."""


class DataError(ValueError):
    """An input file is malformed (archive, manifest, feature reference)."""


class MeasurementError(RuntimeError):
    """A timed run could not be measured reliably."""
