"""Fixed points of compositions of relaxed projections onto convex sets."""

__version__ = "0.1.0"
