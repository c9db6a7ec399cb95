"""Bayesian CP decomposition of sparse binary tensors with a zero-truncated Poisson link."""
