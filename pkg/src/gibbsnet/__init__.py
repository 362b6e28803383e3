"""Gibbs-posterior training of sparse clipped ReLU networks by MALA and reversible-jump MCMC."""

__version__ = "0.1.0"
