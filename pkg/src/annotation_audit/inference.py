"""Binary-outcome, binary-group logistic regression and its cross-checks."""

from __future__ import annotations

import math
from dataclasses import asdict, dataclass

import numpy as np
from scipy.special import expit
from scipy.stats import norm

from ._validation import check_alpha, check_binary
from .exceptions import EstimationError, ValidationError


@dataclass(frozen=True)
class RegressionResult:
    """Outcome of regressing a binary label on a binary group indicator.

    ``beta`` is the log odds ratio of group 1 versus group 0. Degenerate
    fits (a zero cell, or a constant outcome) carry ``beta = se = z = nan``,
    ``p_value = 1`` and are never significant; their ``sign`` comes from
    ``delta_p``.
    """

    beta: float
    se: float
    z: float
    p_value: float
    significant: bool
    alpha: float
    sign: int
    delta_p: float
    n0: int
    n1: int
    degenerate: bool = False

    def to_dict(self, prefix=""):
        return {prefix + k: v for k, v in asdict(self).items()}


def _sign(v):
    return 0 if v == 0 or math.isnan(v) else (1 if v > 0 else -1)


def _split(y, x):
    y = check_binary(y, "y")
    x = check_binary(x, "x")
    if y.shape != x.shape:
        raise ValidationError("y and x must have the same length")
    return y, x


def cell_counts(y, x):
    """Return ``(a, b, c, d)``: group-1 positives/negatives, group-0 positives/negatives."""
    y, x = _split(y, x)
    g1 = x == 1
    a = int(y[g1].sum())
    c = int(y[~g1].sum())
    return a, int(g1.sum()) - a, c, int((~g1).sum()) - c


def delta_p(y, x):
    """Positive rate in group 1 minus positive rate in group 0."""
    y, x = _split(y, x)
    g1 = x == 1
    if not g1.any() or g1.all():
        raise ValidationError("both groups must be non-empty")
    return float(y[g1].mean() - y[~g1].mean())


def wald_from_counts(a, b, c, d, alpha=0.05):
    """Closed-form fit of the saturated 2x2 logistic model."""
    alpha = check_alpha(alpha)
    n1, n0 = a + b, c + d
    if n1 == 0 or n0 == 0:
        raise ValidationError("both groups must be non-empty")
    dp = a / n1 - c / n0
    if min(a, b, c, d) == 0:
        return RegressionResult(math.nan, math.nan, math.nan, 1.0, False, alpha, _sign(dp), dp, n0, n1, True)
    beta = math.log(a * d) - math.log(b * c)
    se = math.sqrt(1 / a + 1 / b + 1 / c + 1 / d)
    z = beta / se
    p = float(min(1.0, 2 * norm.sf(abs(z))))
    return RegressionResult(beta, se, z, p, p < alpha, alpha, _sign(beta), dp, n0, n1, False)


def fit_logistic(y, x, alpha=0.05):
    """Fit ``logit P(y=1) = a + beta * x`` and Wald-test ``beta``.

    Rows with missing values must be removed by the caller. Any zero cell
    in the 2x2 table marks the fit degenerate (no continuity correction).
    """
    y, x = _split(y, x)
    if y.size < 4:
        raise ValidationError("need at least 4 rows")
    return wald_from_counts(*cell_counts(y, x), alpha=alpha)


def two_prop_ztest(a, b, c, d):
    """Pooled two-proportion z-test p-value for the 2x2 table ``(a, b, c, d)``."""
    n1, n0 = a + b, c + d
    if n1 == 0 or n0 == 0:
        raise ValidationError("both groups must be non-empty")
    pooled = (a + c) / (n1 + n0)
    if pooled <= 0.0 or pooled >= 1.0:
        return 1.0
    se = math.sqrt(pooled * (1 - pooled) * (1 / n1 + 1 / n0))
    z = (a / n1 - c / n0) / se
    return float(min(1.0, 2 * norm.sf(abs(z))))


def design(x):
    x = np.asarray(x, dtype=float)
    return np.column_stack([np.ones_like(x), x])


def _objective(theta, X, t, w, ridge):
    eta = X @ theta
    return float(t @ eta - w @ np.logaddexp(0.0, eta) - 0.5 * ridge * theta[1:] @ theta[1:])


def solve_logistic_scores(X, t, w=None, ridge=0.0, tol=1e-12, max_iter=100, max_abs_coef=50.0, start=None):
    """Solve ``sum_i X_i (t_i - w_i * expit(X_i theta)) = 0`` by damped Newton.

    This is the stationarity condition of the weighted logistic
    quasi-likelihood ``sum t*eta - w*log(1+exp(eta))``, which is concave
    for ``w >= 0``; ``t`` need not lie in ``[0, w]``, which is what the
    pseudo-outcome estimators need. Plain MLE is ``t = y, w = 1``; weighted
    MLE is ``t = w*y``. An optional ridge penalty applies to the
    non-intercept coefficients.

    Raises ``EstimationError`` if the iterates diverge (separation or a
    pseudo-outcome mean outside the unit interval) or fail to converge.
    """
    X = np.asarray(X, dtype=float)
    t = np.asarray(t, dtype=float)
    w = np.ones(len(t)) if w is None else np.asarray(w, dtype=float)
    k = X.shape[1]
    penalty = np.eye(k) * ridge
    penalty[0, 0] = 0.0
    theta = np.zeros(k) if start is None else np.asarray(start, dtype=float).copy()
    obj = _objective(theta, X, t, w, ridge)
    for _ in range(max_iter):
        mu = expit(X @ theta)
        grad = X.T @ (t - w * mu) - penalty @ theta
        hess = (X * (w * mu * (1 - mu))[:, None]).T @ X + penalty
        try:
            step = np.linalg.solve(hess, grad)
        except np.linalg.LinAlgError:
            raise EstimationError("singular information matrix") from None
        scale = 1.0
        while True:
            cand = theta + scale * step
            cand_obj = _objective(cand, X, t, w, ridge)
            if cand_obj >= obj - 1e-12 * (1 + abs(obj)) or scale < 1e-10:
                break
            scale *= 0.5
        theta, obj = cand, cand_obj
        if not np.isfinite(theta).all() or np.abs(theta).max() > max_abs_coef:
            raise EstimationError("coefficients diverged (separation or out-of-range pseudo-outcomes)")
        if np.abs(scale * step).max() < tol:
            break
    else:
        raise EstimationError("Newton iterations did not converge")
    mu = expit(X @ theta)
    score = X.T @ (t - w * mu) - penalty @ theta
    if np.abs(score).max() > 1e-6 * max(1.0, np.abs(t).sum()):
        raise EstimationError("score equations not solved")
    return theta


def sandwich_cov(X, t, w, theta, ridge=0.0):
    """Sandwich covariance ``A^-1 B A^-1`` for the score equations above."""
    X = np.asarray(X, dtype=float)
    mu = expit(X @ theta)
    resid = np.asarray(t, dtype=float) - np.asarray(w, dtype=float) * mu
    bread = (X * (np.asarray(w) * mu * (1 - mu))[:, None]).T @ X
    if ridge:
        pen = np.eye(X.shape[1]) * ridge
        pen[0, 0] = 0.0
        bread = bread + pen
    meat = (X * (resid**2)[:, None]).T @ X
    inv = np.linalg.inv(bread)
    return inv @ meat @ inv


def logistic_mle(y, x, tol=1e-13):
    """Iterative maximum-likelihood fit returning ``(intercept, beta)``."""
    y, x = _split(y, x)
    return solve_logistic_scores(design(x), y, tol=tol)


def result_from_estimate(beta, se, alpha, delta_p_value, n0, n1):
    """Wrap a point estimate and standard error as a ``RegressionResult``."""
    alpha = check_alpha(alpha)
    if not (math.isfinite(beta) and math.isfinite(se) and se > 0):
        return RegressionResult(math.nan, math.nan, math.nan, 1.0, False, alpha, _sign(delta_p_value), delta_p_value, n0, n1, True)
    z = beta / se
    p = float(min(1.0, 2 * norm.sf(abs(z))))
    return RegressionResult(float(beta), float(se), float(z), p, p < alpha, alpha, _sign(beta), delta_p_value, n0, n1, False)


def fit_weighted_logistic(y, x, weights, alpha=0.05):
    """Inverse-probability weighted fit with sandwich standard errors."""
    y, x = _split(y, x)
    w = np.asarray(weights, dtype=float)
    g1 = x == 1
    n1, n0 = int(g1.sum()), int((~g1).sum())
    if n1 == 0 or n0 == 0:
        raise ValidationError("both groups must be non-empty")
    dp = float(np.average(y[g1], weights=w[g1]) - np.average(y[~g1], weights=w[~g1]))
    if min(y[g1].sum(), (1 - y[g1]).sum(), y[~g1].sum(), (1 - y[~g1]).sum()) == 0:
        return result_from_estimate(math.nan, math.nan, alpha, dp, n0, n1)
    X = design(x)
    theta = solve_logistic_scores(X, w * y, w)
    cov = sandwich_cov(X, w * y, w, theta)
    return result_from_estimate(theta[1], math.sqrt(max(cov[1, 1], 0.0)), alpha, dp, n0, n1)
