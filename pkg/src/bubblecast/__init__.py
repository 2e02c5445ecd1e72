"""Bubble detection, news-sentiment aggregation and multilabel bubble prediction."""

__version__ = "0.1.0"
