"""Grouped randomized response for subgraph counting under edge local differential privacy."""

from .graph import Graph, GroundTruth, count_four_cycles, count_stars_and_walks, count_triangles, load_edge_list
from .primitives import BudgetSplit, DebiasParams, HashScheme, amplified_epsilon, debias_params

__all__ = [
    "BudgetSplit",
    "DebiasParams",
    "Graph",
    "GroundTruth",
    "HashScheme",
    "amplified_epsilon",
    "count_four_cycles",
    "count_stars_and_walks",
    "count_triangles",
    "debias_params",
    "load_edge_list",
]

__version__ = "0.1.0"
