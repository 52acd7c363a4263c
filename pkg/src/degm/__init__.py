"""Lifelong generative modelling with a dynamically expanding graph of VAE parts."""

__version__ = "0.1.0"
