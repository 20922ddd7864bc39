"""Decentralised mean-field-game learning on grid worlds.

Agents learn from one continuous run using per-agent Munchausen Q-networks,
exchange policy parameters over a radius-based communication graph, and
estimate the population distribution locally by gossiping state counts.
"""

__version__ = "0.1.0"
