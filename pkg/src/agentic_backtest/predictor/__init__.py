from .gbt import GBTRegressor, GbtConfig, fit_gbt
from .labels import LabeledSet, build_labels
from .model import FittedModel, Tree, predict
from .rank import UndefinedCorrelationError, rank_ic
from .ridge import RidgeRegressor, fit_ridge
from .schedule import Block, WalkForwardSchedule, build_schedule

__all__ = [
    "GBTRegressor", "GbtConfig", "fit_gbt", "LabeledSet", "build_labels", "FittedModel", "Tree",
    "predict", "UndefinedCorrelationError", "rank_ic", "RidgeRegressor", "fit_ridge", "Block",
    "WalkForwardSchedule", "build_schedule",
]
