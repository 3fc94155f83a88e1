"""Differential data analysis for recommender systems.

Rank each user's data by an attribute (hardship, time, rating), measure
each chunk's contribution to recommendation accuracy by ablation, and use
the resulting z-scores to drive data suppression, fake-data injection,
and data reduction.
"""

__version__ = "0.1.0"
