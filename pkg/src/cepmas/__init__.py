"""Multi-agent complex event processing over pub/sub camera streams."""

__version__ = "0.1.0"
