"""Conversational-context toolkit: embed messages, cluster contexts, analyze networks."""

__version__ = "0.1.0"
