"""foolbench: a desk-scale workbench for fooling-image experiments."""

__version__ = "0.1.0"
