"""Data-driven facial action units from keypoint tracks."""

__version__ = "0.1.0"
