"""Conditional progressive GAN that turns first-person observations into top-down maps."""

__version__ = "0.1.0"
