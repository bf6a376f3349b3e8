from .mm import (FitResult, MMConfig, Responsibilities, initial_params, minorizer_value, mm_fit,
                 mm_iterate, responsibilities, update_component, update_weights)
from .greedy import GreedyGrid, GreedyRun, GreedyStep, LiftedObjective, greedy_fit

__all__ = [
    "FitResult", "MMConfig", "Responsibilities", "initial_params", "minorizer_value", "mm_fit",
    "mm_iterate", "responsibilities", "update_component", "update_weights",
    "GreedyGrid", "GreedyRun", "GreedyStep", "LiftedObjective", "greedy_fit",
]
