"""
opnorm-lab: a random-matrix laboratory for uniform operator-norm bounds.

Simulates parameter-indexed sub-Gaussian matrix families, estimates metric
complexity (Talagrand's gamma functional, Dudley's integral) and runs the
operator-norm moment estimator and the maximal-rank factor estimator.
"""

__version__ = "0.1.0"
