"""Distributional random forests with an MMD split criterion."""

from .forest import (Forest, ForestConfig, drf_weights, load_forest, one_hot, save_forest, train)
from .mmd import mmd2_exact, mmd2_rff, mmd_split_score, rff_map, rff_params
from .weighted import cdf, class_probs, effective_size, quantile, wmean, wvar
