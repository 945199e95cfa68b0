"""Multi-operator bandwidth reservation as optimal stopping with DQN agents."""

__version__ = "0.1.0"
