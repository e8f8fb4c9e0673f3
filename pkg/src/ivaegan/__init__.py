"""Transductive zero-shot learning with pseudo-conditional feature adversarial
training and a variational embedding regressor, at desk scale."""

__version__ = "0.1.0"
