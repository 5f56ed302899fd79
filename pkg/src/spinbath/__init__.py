"""Spin-bath decoherence: exact propagation and a mean-field non-Markovian master equation."""

__version__ = "0.1.0"
