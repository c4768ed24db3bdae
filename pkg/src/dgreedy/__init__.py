"""Double-greedy reduced basis construction for transport-dominated parametric PDEs."""

__version__ = "0.1.0"
