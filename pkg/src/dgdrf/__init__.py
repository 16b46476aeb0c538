"""Decentralized kernel regression with Distributed Gradient Descent and random features."""

__version__ = "0.1.0"
