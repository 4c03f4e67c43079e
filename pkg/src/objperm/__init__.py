"""Object permanence for two-stage detectors via proposal feedback."""

__version__ = "0.1.0"
