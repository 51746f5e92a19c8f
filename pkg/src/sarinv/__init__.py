"""View-angle inversion of synthetic SAR images with deep Q-learning."""

__version__ = "0.1.0"
