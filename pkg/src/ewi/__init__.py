"""Early-warning indicators for extreme volatility from transaction-graph snapshots."""

__version__ = "0.1.0"
