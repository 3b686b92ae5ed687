"""Parametric conditional logit fits per matching round.

Each round of the 1-factorization gives independent Bernoulli responses
with change-statistic covariates, so the conditional likelihood is an
ordinary logistic regression. Fits are by Newton-Raphson (equivalently
IRLS for the canonical link).
"""

from __future__ import annotations

import csv
import logging
import os
from collections.abc import Sequence
from dataclasses import dataclass, field

import numpy as np
from scipy.special import expit, log_expit

from ._pool import map_rounds
from .design import extract_subsample, one_factorization
from .errors import EmptySummaryError, SingularDesignError, ValidationError
from .graph import STATISTICS, UndirectedGraph

logger = logging.getLogger(__name__)

SCORE_TOL = 1e-8
LOGLIK_RTOL = 1e-10
MAX_ITER = 50


@dataclass
class GlmFit:
    """Result of :func:`fit_logistic` for one round.

    ``covariance`` is the inverse Fisher matrix at ``theta``. When the
    fit did not converge ``theta`` is the last iterate and ``reason``
    says why.
    """

    theta: np.ndarray
    covariance: np.ndarray
    converged: bool
    iterations: int
    round: int = 0
    loglik: float = np.nan
    score_norm: float = np.nan
    reason: str = ""
    ones_count: int = -1

    @property
    def se(self) -> np.ndarray:
        return np.sqrt(np.clip(np.diag(self.covariance), 0.0, None))


def loglik_logistic(X: np.ndarray, y: np.ndarray, theta: np.ndarray) -> float:
    eta = X @ theta
    return float(np.sum(y * log_expit(eta) + (1 - y) * log_expit(-eta)))


def score_logistic(X: np.ndarray, y: np.ndarray, theta: np.ndarray) -> np.ndarray:
    return X.T @ (y - expit(X @ theta))


def fisher_logistic(X: np.ndarray, theta: np.ndarray) -> np.ndarray:
    pi = expit(X @ theta)
    w = pi * (1.0 - pi)
    return (X * w[:, None]).T @ X


def _solve_fisher(F: np.ndarray, g: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    """Newton step and inverse Fisher; raise on numerical rank loss."""
    try:
        L = np.linalg.cholesky(F)
    except np.linalg.LinAlgError:
        raise SingularDesignError("weighted cross-product is not positive definite") from None
    diag = np.diag(L)
    if diag.min() <= 1e-7 * diag.max():
        raise SingularDesignError("weighted cross-product is numerically rank deficient")
    Linv = np.linalg.inv(L)
    cov = Linv.T @ Linv
    return cov @ g, cov


def fit_logistic(
    X: np.ndarray,
    y: np.ndarray,
    *,
    max_iter: int = MAX_ITER,
    theta0: np.ndarray | None = None,
    round: int = 0,
) -> GlmFit:
    """Maximum likelihood logistic regression by Newton-Raphson.

    Parameters
    ----------
    X : ndarray of shape (N, q)
        Design matrix including the constant intercept column.
    y : ndarray of shape (N,)
        Binary responses.

    Returns
    -------
    GlmFit
        ``converged`` is set only when the score is below ``1e-8`` in sup
        norm (or the log-likelihood stalls at relative ``1e-10``) *and*
        the last Newton step was small. Under separation the score also
        vanishes while the estimates drift to infinity; the step-size
        condition keeps such fits flagged as non-converged.

    Raises
    ------
    SingularDesignError
        If ``X`` (weighted) is rank deficient at the start.
    """
    X = np.asarray(X, dtype=float)
    y = np.asarray(y, dtype=float)
    if X.ndim != 2 or X.shape[0] != y.shape[0]:
        raise ValidationError("X rows must match len(y)")
    N, q = X.shape
    ones = int(y.sum())
    if ones == 0 or ones == N:
        what = "zeros" if ones == 0 else "ones"
        return GlmFit(
            np.full(q, np.nan), np.full((q, q), np.nan), False, 0, round,
            reason=f"degenerate: all responses are {what}", ones_count=ones,
        )
    if theta0 is None:
        theta = np.zeros(q)
        # start at the intercept-only optimum when column 0 is constant
        if np.all(X[:, 0] == X[0, 0]) and X[0, 0] != 0:
            ybar = ones / N
            theta[0] = np.log(ybar / (1 - ybar)) / X[0, 0]
    else:
        theta = np.array(theta0, dtype=float)

    ll = loglik_logistic(X, y, theta)
    cov = np.full((q, q), np.nan)
    g = score_logistic(X, y, theta)
    reason = "iteration limit reached"
    converged = False
    it = 0
    for it in range(1, max_iter + 1):
        F = fisher_logistic(X, theta)
        try:
            step, cov = _solve_fisher(F, g)
        except SingularDesignError:
            if it == 1:
                raise
            reason = "fisher matrix became singular (separation)"
            break
        # step halving guards against overshoot far from the optimum
        t = 1.0
        for _ in range(30):
            cand = theta + t * step
            ll_new = loglik_logistic(X, y, cand)
            if ll_new >= ll - 1e-12 * abs(ll):
                break
            t *= 0.5
        theta = cand
        rel = abs(ll_new - ll) / (abs(ll) + 1e-300)
        ll = ll_new
        g = score_logistic(X, y, theta)
        small_step = np.max(np.abs(t * step)) <= 1e-6 * (1.0 + np.max(np.abs(theta)))
        if small_step and (np.max(np.abs(g)) < SCORE_TOL or rel < LOGLIK_RTOL):
            # one more Newton step polishes the score for stall exits
            if np.max(np.abs(g)) >= SCORE_TOL:
                try:
                    step, cov = _solve_fisher(fisher_logistic(X, theta), g)
                    theta = theta + step
                    ll = loglik_logistic(X, y, theta)
                    g = score_logistic(X, y, theta)
                except SingularDesignError:
                    pass
            converged = True
            reason = ""
            break
    if converged:
        try:
            _, cov = _solve_fisher(fisher_logistic(X, theta), g)
        except SingularDesignError:
            converged, reason = False, "fisher matrix singular at optimum"
    return GlmFit(
        theta, cov, converged, it, round, ll, float(np.max(np.abs(g))), reason, ones,
    )


def _fit_round(g: UndirectedGraph, k: int, min_ones: int) -> GlmFit:
    n = g.n
    m = one_factorization(n).round(k)
    s = extract_subsample(g, m)
    q = 1 + s.covariates.shape[1]
    if s.ones_count < min_ones:
        return GlmFit(
            np.full(q, np.nan), np.full((q, q), np.nan), False, 0, k,
            reason="skipped: too few ones", ones_count=s.ones_count,
        )
    try:
        fit = fit_logistic(s.design(), s.responses, round=k)
    except SingularDesignError as exc:
        return GlmFit(
            np.full(q, np.nan), np.full((q, q), np.nan), False, 0, k,
            reason=f"singular design: {exc}", ones_count=s.ones_count,
        )
    return fit


def fit_parametric_all(
    g: UndirectedGraph, min_ones: int = 3, workers: int | None = 1
) -> list[GlmFit]:
    """Fit the (edges, two-star, triangle) logit on every round of ``g``.

    Rounds with fewer than ``min_ones`` edges are skipped (recorded with
    ``reason`` starting ``"skipped"``). Per-round failures are recorded
    in ``reason`` and never stop the sweep. Results are ordered by round.
    """
    if g.n % 2:
        raise ValidationError(f"n={g.n} is odd; drop a node first")
    rounds = range(1, g.n)
    return map_rounds(_fit_round, g, rounds, workers, min_ones)


def is_skipped(fit: GlmFit) -> bool:
    return fit.reason.startswith("skipped")


@dataclass
class AggregateSummary:
    names: tuple[str, ...]
    mean: np.ndarray
    median: np.ndarray
    q05: np.ndarray
    q95: np.ndarray
    n_used: int
    n_skipped: int
    n_excluded_extreme: int
    n_nonconverged: int = 0
    rounds_used: list[int] = field(default_factory=list)

    def rows(self) -> list[dict]:
        return [
            {"parameter": nm, "mean": mu, "median": md, "q05": lo, "q95": hi}
            for nm, mu, md, lo, hi in zip(self.names, self.mean, self.median, self.q05, self.q95)
        ]


def aggregate_estimates(
    fits: Sequence[GlmFit],
    intercept_floor: float = -10.0,
    names: Sequence[str] = STATISTICS,
) -> AggregateSummary:
    """Mean, median and 5%/95% quantiles over usable per-round fits.

    Skipped and non-converged fits are dropped, then fits whose
    intercept is below ``intercept_floor`` are excluded before any
    summary is computed. Quantiles use linear interpolation.
    """
    skipped = [f for f in fits if is_skipped(f)]
    tried = [f for f in fits if not is_skipped(f)]
    conv = [f for f in tried if f.converged]
    extreme = [f for f in conv if f.theta[0] < intercept_floor]
    used = sorted((f for f in conv if f.theta[0] >= intercept_floor), key=lambda f: f.round)
    if not used:
        raise EmptySummaryError("no usable fits to aggregate")
    theta = np.array([f.theta for f in used])
    return AggregateSummary(
        names=tuple(names),
        mean=theta.mean(axis=0),
        median=np.median(theta, axis=0),
        q05=np.quantile(theta, 0.05, axis=0),
        q95=np.quantile(theta, 0.95, axis=0),
        n_used=len(used),
        n_skipped=len(skipped),
        n_excluded_extreme=len(extreme),
        n_nonconverged=len(tried) - len(conv),
        rounds_used=[f.round for f in used],
    )


def write_fits_csv(fits: Sequence[GlmFit], path: str | os.PathLike,
                   names: Sequence[str] = STATISTICS) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(
            ["round", "converged"] + [f"theta_{s}" for s in names]
            + [f"se_{s}" for s in names] + ["ones_count", "skipped_reason"]
        )
        for f in fits:
            w.writerow(
                [f.round, int(f.converged)] + [_num(v) for v in f.theta]
                + [_num(v) for v in f.se] + [f.ones_count, f.reason]
            )


def write_summary_csv(summary: AggregateSummary | None, path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["parameter", "mean", "median", "q05", "q95"])
        if summary is not None:
            for row in summary.rows():
                w.writerow([row["parameter"]] + [_num(row[k]) for k in ("mean", "median", "q05", "q95")])


def _num(v: float) -> str:
    return "" if not np.isfinite(v) else repr(float(v))
