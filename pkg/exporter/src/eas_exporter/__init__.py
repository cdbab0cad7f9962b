"""Fixture exporter: real-architecture encoder tensors for cross-validation."""

from .export import export_bundle, importance_from_attention, keep_count_tenths

__version__ = "0.1.0"

__all__ = ["export_bundle", "importance_from_attention", "keep_count_tenths",
           "__version__"]
