"""Key-state guided online imitation learning lab."""

__version__ = "0.1.0"
