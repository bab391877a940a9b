"""Jacobian of the relativistic collision map p -> theta p' + (1 - theta) p."""

__version__ = "0.1.0"
