"""
Services module for opnorm-lab.

Contains the numerical engines: spectral primitives, process simulation,
metric chaining, factor-rank and moment estimation, and the Monte Carlo harness.
"""
