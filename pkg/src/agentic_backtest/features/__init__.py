from .frame import FeatureFrame, FeatureSpec
from .preprocess import (PreprocessState, RobustPreprocessor, apply_preprocess, ewm_smooth,
                         fit_preprocess)
from .raw import HORIZONS, MIN_HISTORY, compute_raw_features, feature_specs

__all__ = [
    "FeatureFrame", "FeatureSpec", "PreprocessState", "RobustPreprocessor", "apply_preprocess",
    "ewm_smooth", "fit_preprocess", "compute_raw_features", "feature_specs", "HORIZONS", "MIN_HISTORY",
]
