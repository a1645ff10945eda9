"""Benchmark harness for daily transit-ridership forecasting under demand shocks."""

from .errors import ConfigError, DataError, ModelError, TransitBenchError

__all__ = ["ConfigError", "DataError", "ModelError", "TransitBenchError"]
__version__ = "0.1.0"
