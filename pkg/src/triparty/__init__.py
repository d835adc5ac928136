"""Tri-party re-ranking: agent relevance ranking, platform fairness re-ranking
and a sequential exposure simulator."""

__version__ = "0.1.0"
