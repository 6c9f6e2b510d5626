"""ks-motility - Simulate chemotaxis-consumption systems with signal-dependent motility."""

__version__ = "0.1.0"
