"""Time-domain-decomposition solvers for parabolic optimal control."""

__version__ = "1.0.0"
