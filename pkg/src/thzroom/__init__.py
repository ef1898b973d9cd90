"""Indoor terahertz ray tracing: materials, paths, PDPs and coverage maps."""

__version__ = "0.1.0"
