"""Thermodynamics-inspired SAR-to-optical image translation on a small numpy autograd engine."""

__version__ = "0.1.0"
