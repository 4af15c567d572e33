"""Learning optimal contracts in repeated principal-agent interactions."""

__version__ = "0.1.0"
