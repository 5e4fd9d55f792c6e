"""Gårding-cone calculus and cone-admissible solvers for eigenvalue-type equations."""

__version__ = "0.1.0"
