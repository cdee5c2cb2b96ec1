"""Multi-scale CNN ensemble pipeline for binary grayscale radiograph classification."""

__version__ = "0.1.0"
