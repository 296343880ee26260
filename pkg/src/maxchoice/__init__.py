"""Max-choice Mori preferential-attachment trees: simulation and theory."""

from .degree_dist import ChoiceDistribution, point_mass, poisson, table
from .graph_engine import ModelParams, StepOutcome, TreeState, init_tree, step, tree_from_degrees

__all__ = [
    "ChoiceDistribution",
    "ModelParams",
    "StepOutcome",
    "TreeState",
    "init_tree",
    "point_mass",
    "poisson",
    "step",
    "table",
    "tree_from_degrees",
]
