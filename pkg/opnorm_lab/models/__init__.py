"""
Models module for opnorm-lab.

Contains Pydantic models for matrices, processes, metric spaces, estimators
and experiment configuration.
"""
