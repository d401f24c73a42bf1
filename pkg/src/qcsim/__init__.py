"""Open quantum-system toolkit for quantum systems acting as classical controllers."""

__version__ = "0.1.0"
