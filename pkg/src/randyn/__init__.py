"""Large random linear systems x' = -kappa x + A x: simulation and limit laws."""

__version__ = "0.1.0"
