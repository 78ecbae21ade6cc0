"""Downstream estimators that combine human labels with LLM annotations.

All estimators share one calling convention, following scikit-learn's
missing-label idiom: ``fit(x, y, ...)`` where ``x`` is the binary group
indicator for every row and ``y`` holds the binary ground truth on the
human-labelled rows and NaN elsewhere. ``pi`` gives each row's inclusion
probability and ``llm`` the binary LLM annotation (NaN for NA).

After fitting, ``result_`` is a :class:`~annotation_audit.inference.RegressionResult`
and ``coef_``/``se_`` mirror its ``beta``/``se``.
"""

from __future__ import annotations

import math
import warnings

import numpy as np
from scipy.optimize import minimize
from scipy.special import expit
from sklearn.base import BaseEstimator

from .._validation import check_binary, check_probabilities
from ..exceptions import EstimationError, ValidationError
from ..inference import (
    design,
    fit_logistic,
    fit_weighted_logistic,
    result_from_estimate,
    sandwich_cov,
    solve_logistic_scores,
)
from ..seeding import derive_rng

DSL_FOLD_LADDER = (5, 4, 3, 2, 6, 7, 8, 9, 10)
DSL_SPLIT_LADDER = (10, 8, 6, 4, 3, 2, 12, 15)
CDI_LAMBDA_LADDER = (1.0, 0.9, 0.7, 0.4, 0.1, 0.0)


def _inputs(x, y, pi=None, llm=None):
    x = check_binary(x, "x")
    y = check_binary(y, "y", allow_nan=True)
    if y.shape != x.shape:
        raise ValidationError("x and y must have the same length")
    labeled = ~np.isnan(y)
    if pi is not None:
        pi = check_probabilities(pi)
        if pi.shape != x.shape:
            raise ValidationError("pi must have one entry per row")
    if llm is not None:
        llm = check_binary(llm, "llm", allow_nan=True)
        if llm.shape != x.shape:
            raise ValidationError("llm must have one entry per row")
    return x, y, labeled, pi, llm


def _fitted_delta_p(theta):
    return float(expit(theta[0] + theta[1]) - expit(theta[0]))


class GroundTruthOnly(BaseEstimator):
    """Regression on the human-labelled rows alone.

    With equal inclusion probabilities this is the plain Wald fit on the
    subsample; otherwise the rows are weighted by ``1/pi`` and standard
    errors come from the sandwich estimator.
    """

    def __init__(self, alpha=0.05):
        self.alpha = alpha

    def fit(self, x, y, pi=None):
        x, y, labeled, pi, _ = _inputs(x, y, pi)
        if not labeled.any():
            raise ValidationError("no labelled rows")
        xl, yl = x[labeled], y[labeled]
        if pi is None or np.ptp(pi[labeled]) == 0:
            if not (xl == 0).any() or not (xl == 1).any() or xl.size < 4:
                self.result_ = result_from_estimate(math.nan, math.nan, self.alpha, math.nan, int((xl == 0).sum()), int((xl == 1).sum()))
            else:
                self.result_ = fit_logistic(yl, xl, self.alpha)
        else:
            if not (xl == 0).any() or not (xl == 1).any():
                self.result_ = result_from_estimate(math.nan, math.nan, self.alpha, math.nan, int((xl == 0).sum()), int((xl == 1).sum()))
            else:
                try:
                    self.result_ = fit_weighted_logistic(yl, xl, 1.0 / pi[labeled], self.alpha)
                except EstimationError:
                    self.result_ = result_from_estimate(math.nan, math.nan, self.alpha, math.nan, int((xl == 0).sum()), int((xl == 1).sum()))
        self.coef_, self.se_ = self.result_.beta, self.result_.se
        return self


class PlugIn(BaseEstimator):
    """Human labels where available, LLM labels elsewhere, no correction."""

    def __init__(self, alpha=0.05):
        self.alpha = alpha

    def fit(self, x, y, llm):
        x, y, labeled, _, llm = _inputs(x, y, llm=llm)
        merged = np.where(labeled, y, llm)
        keep = ~np.isnan(merged)
        self.result_ = fit_logistic(merged[keep], x[keep], self.alpha)
        self.coef_, self.se_ = self.result_.beta, self.result_.se
        return self


def _one_hot_features(llm, x, confidence):
    cell = (2 * llm + x).astype(int)
    cols = [(cell == k).astype(float) for k in (1, 2, 3)]
    cols.append(np.nan_to_num(confidence, nan=0.0))
    return np.column_stack([np.ones_like(x)] + cols)


class _RidgeLogit:
    """Weighted ridge logistic regression used as the outcome model."""

    def __init__(self, ridge):
        self.ridge = ridge

    def fit(self, F, y, w):
        if np.ptp(y) == 0:
            self.const_ = float(y[0])
            return self
        self.const_ = None
        self.theta_ = solve_logistic_scores(F, w * y, w, ridge=self.ridge, tol=1e-10)
        return self

    def predict(self, F):
        if self.const_ is not None:
            return np.full(F.shape[0], self.const_)
        return expit(F @ self.theta_)


class DSL(BaseEstimator):
    """Doubly-robust pseudo-outcome estimator with cross-fitting.

    For each of ``n_splits`` seeded sample splits the rows are divided into
    ``n_folds`` folds. An outcome model of the ground truth given the LLM
    label, the group and the LLM confidence is fitted on the labelled rows
    outside each fold and predicts ``g`` inside it. The pseudo-outcome
    ``g + R/pi * (y - g)`` replaces ``y`` in the logistic score equations,
    whose sandwich variance gives the standard error. Coefficients and
    standard errors are aggregated across splits by their medians.

    If a ``(n_folds, n_splits)`` attempt fails numerically the estimator
    walks ``fold_ladder`` x ``split_ladder`` in order; ``fallback_used_``
    records whether it had to.

    Parameters
    ----------
    learner : {"logistic", "boosted"}
        Outcome model. ``"logistic"`` is a 1/pi-weighted ridge logistic
        regression on one-hot (LLM label, group) cells plus confidence;
        ``"boosted"`` uses :class:`~annotation_audit.mitigation.learner.ErrorLearner`.
    """

    def __init__(
        self,
        n_folds=5,
        n_splits=10,
        learner="logistic",
        ridge=1.0,
        alpha=0.05,
        random_state=0,
        fold_ladder=DSL_FOLD_LADDER,
        split_ladder=DSL_SPLIT_LADDER,
    ):
        self.n_folds = n_folds
        self.n_splits = n_splits
        self.learner = learner
        self.ridge = ridge
        self.alpha = alpha
        self.random_state = random_state
        self.fold_ladder = fold_ladder
        self.split_ladder = split_ladder

    def _outcome_model(self):
        if self.learner == "logistic":
            return _RidgeLogit(self.ridge)
        if self.learner == "boosted":
            from .learner import ErrorLearner

            return _BoostedOutcome(ErrorLearner(random_state=self.random_state))
        raise ValidationError(f"unknown DSL learner {self.learner!r}")

    def pseudo_outcomes(self, x, y, labeled, pi, llm, confidence, n_folds, split):
        """Cross-fitted pseudo-outcomes and predictions for one split."""
        n = x.size
        if labeled.sum() < n_folds:
            raise EstimationError(f"{labeled.sum()} labelled rows cannot fill {n_folds} folds")
        F = _one_hot_features(llm, x, confidence)
        folds = derive_rng(self.random_state, "dsl_split", n_folds, split).permutation(n) % n_folds
        g = np.empty(n)
        for j in range(n_folds):
            inside = folds == j
            train = labeled & ~inside
            if not train.any():
                raise EstimationError(f"fold {j} has no labelled training rows")
            model = self._outcome_model().fit(F[train], y[train], 1.0 / pi[train])
            g[inside] = model.predict(F[inside])
        resid = np.where(labeled, np.nan_to_num(y) - g, 0.0)
        return g + np.where(labeled, 1.0 / pi, 0.0) * resid, g

    def _fit_once(self, x, y, labeled, pi, llm, confidence, n_folds, n_splits):
        X = design(x)
        betas, ses, thetas = [], [], []
        for s in range(n_splits):
            yt, _ = self.pseudo_outcomes(x, y, labeled, pi, llm, confidence, n_folds, s)
            theta = solve_logistic_scores(X, yt)
            cov = sandwich_cov(X, yt, np.ones_like(yt), theta)
            if not cov[1, 1] > 0:
                raise EstimationError("non-positive variance")
            betas.append(theta[1])
            ses.append(math.sqrt(cov[1, 1]))
            thetas.append(theta)
        return float(np.median(betas)), float(np.median(ses)), np.median(np.array(thetas), axis=0)

    def fit(self, x, y, pi, llm, confidence=None):
        x, y, labeled, pi, llm = _inputs(x, y, pi, llm)
        if not labeled.any():
            raise ValidationError("DSL needs at least one labelled row")
        usable = labeled | ~np.isnan(llm)
        x, y, labeled, pi, llm = x[usable], y[usable], labeled[usable], pi[usable], llm[usable]
        llm = np.nan_to_num(llm)
        conf = np.zeros(x.size) if confidence is None else np.asarray(confidence, dtype=float)[usable]
        attempts = [(self.n_folds, self.n_splits)]
        attempts += [(k, s) for k in self.fold_ladder for s in self.split_ladder if (k, s) != attempts[0]]
        last_error = None
        for i, (k, s) in enumerate(attempts):
            try:
                beta, se, theta = self._fit_once(x, y, labeled, pi, llm, conf, k, s)
            except EstimationError as exc:
                last_error = exc
                continue
            self.folds_, self.splits_, self.fallback_used_ = k, s, i > 0
            n1 = int(x.sum())
            self.result_ = result_from_estimate(beta, se, self.alpha, _fitted_delta_p(theta), x.size - n1, n1)
            self.coef_, self.se_ = self.result_.beta, self.result_.se
            return self
        raise EstimationError(f"DSL failed for every fold/split combination: {last_error}")


class _BoostedOutcome:
    def __init__(self, booster):
        self.booster = booster

    def fit(self, F, y, w):
        self.booster.fit(F, y)
        return self

    def predict(self, F):
        return self.booster.predict(F)


class CDI(BaseEstimator):
    """Human/LLM score mixing with a variance-minimising trust parameter.

    Solves ``sum_i lam*s(f_i) + R_i/pi_i * (s(y_i) - lam*s(f_i)) = 0`` for
    the logistic score ``s``. With ``lam=None`` the trust parameter is
    chosen in ``[0, 1]`` to minimise the sandwich variance of ``beta``,
    starting from the ladder points that solve stably; if none does the
    estimator falls back to ``lam = 0``, the inverse-probability weighted
    human-only fit.
    """

    def __init__(self, lam=None, alpha=0.05, ladder=CDI_LAMBDA_LADDER):
        self.lam = lam
        self.alpha = alpha
        self.ladder = ladder

    @staticmethod
    def _targets(lam, y, labeled, pi, f):
        ipw = np.where(labeled, 1.0 / pi, 0.0)
        t = lam * f + ipw * (np.nan_to_num(y) - lam * f)
        w = lam + ipw * (1.0 - lam)
        return t, w

    def _solve(self, lam, X, y, labeled, pi, f, start=None):
        t, w = self._targets(lam, y, labeled, pi, f)
        theta = solve_logistic_scores(X, t, w, start=start)
        var = sandwich_cov(X, t, w, theta)[1, 1]
        if not (np.isfinite(var) and var > 0):
            raise EstimationError("non-positive variance")
        return theta, var

    def fit(self, x, y, pi, llm):
        x, y, labeled, pi, llm = _inputs(x, y, pi, llm)
        if not labeled.any():
            raise ValidationError("CDI needs at least one labelled row")
        usable = labeled | ~np.isnan(llm)
        x, y, labeled, pi, llm = x[usable], y[usable], labeled[usable], pi[usable], llm[usable]
        f = np.nan_to_num(llm)
        X = design(x)
        self.fallback_used_ = False
        if self.lam is not None:
            lam = float(self.lam)
            try:
                theta, var = self._solve(lam, X, y, labeled, pi, f)
            except EstimationError:
                theta, var = None, math.nan
        else:
            lam, theta, var = self._tune(X, y, labeled, pi, f)
        self.lambda_ = lam
        n1 = int(x.sum())
        if theta is None:
            self.result_ = result_from_estimate(math.nan, math.nan, self.alpha, math.nan, x.size - n1, n1)
        else:
            self.result_ = result_from_estimate(theta[1], math.sqrt(var), self.alpha, _fitted_delta_p(theta), x.size - n1, n1)
        self.coef_, self.se_ = self.result_.beta, self.result_.se
        return self

    def _tune(self, X, y, labeled, pi, f):
        stable = {}
        for lam in sorted(self.ladder, reverse=True):
            try:
                stable[lam] = self._solve(lam, X, y, labeled, pi, f)
            except EstimationError:
                continue
        if not stable:
            self.fallback_used_ = True
            try:
                theta, var = self._solve(0.0, X, y, labeled, pi, f)
            except EstimationError:
                return 0.0, None, math.nan
            return 0.0, theta, var
        best_lam = min(stable, key=lambda k: (stable[k][1], -k))
        start_theta = stable[best_lam][0]

        def objective(v):
            try:
                return self._solve(float(v[0]), X, y, labeled, pi, f, start=start_theta)[1]
            except EstimationError:
                return np.inf

        with warnings.catch_warnings():
            warnings.simplefilter("ignore", RuntimeWarning)
            opt = minimize(objective, x0=[best_lam], bounds=[(0.0, 1.0)], method="L-BFGS-B")
        cand = float(np.clip(opt.x[0], 0.0, 1.0))
        if np.isfinite(opt.fun) and opt.fun < stable[best_lam][1]:
            try:
                theta, var = self._solve(cand, X, y, labeled, pi, f, start=start_theta)
                return cand, theta, var
            except EstimationError:
                pass
        return best_lam, *stable[best_lam]
