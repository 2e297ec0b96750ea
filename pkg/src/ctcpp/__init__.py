"""Layered 3D coverage path planning for underwater vehicles with a downward multibeam sonar."""

__version__ = "0.1.0"
