"""Boosted-tree predictor of LLM annotation errors."""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.ensemble import GradientBoostingRegressor
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from ..exceptions import ValidationError


class ErrorLearner(RegressorMixin, BaseEstimator):
    """Gradient-boosted regression trees on a squared-error objective.

    Defaults are 2,000 rounds, learning rate 0.001 and depth-3 trees.
    Predictions are clamped to ``[0, 1]``. When every training target is
    the same the learner is the constant at that value.
    """

    def __init__(self, n_estimators=2000, learning_rate=0.001, max_depth=3, random_state=0):
        self.n_estimators = n_estimators
        self.learning_rate = learning_rate
        self.max_depth = max_depth
        self.random_state = random_state

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        if len(y) < 2:
            raise ValidationError("error learner needs at least 2 labelled rows")
        self.n_features_in_ = X.shape[1]
        if np.unique(y).size == 1:
            self.constant_ = float(y[0])
            self.booster_ = None
            return self
        self.constant_ = None
        self.booster_ = GradientBoostingRegressor(
            loss="squared_error",
            n_estimators=self.n_estimators,
            learning_rate=self.learning_rate,
            max_depth=self.max_depth,
            random_state=self.random_state,
        ).fit(X, y)
        return self

    def predict(self, X):
        check_is_fitted(self, "n_features_in_")
        X = check_array(X)
        if self.booster_ is None:
            return np.full(X.shape[0], self.constant_)
        return np.clip(self.booster_.predict(X), 0.0, 1.0)


def fit_error_learner(features, targets, config=None):
    """Fit an :class:`ErrorLearner`; ``config`` overrides its parameters."""
    return ErrorLearner(**(config or {})).fit(features, targets)
