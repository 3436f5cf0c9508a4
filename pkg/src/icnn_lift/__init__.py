"""Lifted positivity reparametrization for input-convex neural networks."""

__version__ = "0.1.0"
