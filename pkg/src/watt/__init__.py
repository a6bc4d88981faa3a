"""watt: simulated smart metering, telemetry, hash-chained billing, forecasting."""

__version__ = "0.1.0"
