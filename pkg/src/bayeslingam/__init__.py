"""Bayesian discovery of linear acyclic causal models."""
