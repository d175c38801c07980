"""
Utilities module for opnorm-lab.

Contains configuration, error types, logging setup, seeding and I/O helpers.
"""
