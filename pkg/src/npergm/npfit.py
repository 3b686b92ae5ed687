"""Penalized monotone spline fits of the conditional network model.

Per round the linear change-statistic terms of the logit are replaced
by smooth effects ``m_l(x) = B(x)' u_l`` built from the bounded
exponential basis. Coefficients maximise the ridge-penalized
log-likelihood under monotonicity constraints by Newton steps solved as
quadratic programs; the penalties are re-estimated by Schall's
fixed-point update between Newton runs. Effects whose penalty diverges
are removed, which makes the fit select among the nested models

=====  =========================
M1     two-star + triangle
M2     triangle only
M3     two-star only
M4     intercept only
=====  =========================
"""

from __future__ import annotations

import csv
import json
import logging
import os
from collections import Counter
from collections.abc import Sequence
from dataclasses import asdict, dataclass, field

import numpy as np
from scipy.special import expit, log_expit

from ._pool import map_rounds
from .basis import ExpBasis, build_basis, constraint_matrix
from .design import Subsample, extract_subsample, one_factorization
from .errors import NumericalError, ValidationError
from .glm import fit_logistic
from .graph import STATISTICS, UndirectedGraph
from .qp import QpProblem, solve_qp

logger = logging.getLogger(__name__)

CONVERGED = "converged"
NO_FIT = "no_fit_too_few_ones"
ABORTED = "aborted"
MAX_ITER = "max_iter"

TALLY_ROWS = ("total", "no_fit", "M1", "M2", "M3", "M4", "max_iter", "aborted")


@dataclass
class FitConfig:
    K: int = 20
    gamma_min: float = 0.0005
    gamma_max: float = 1.0
    min_ones: int = 10
    zero_threshold: float = 0.005
    conv_tol: float = 1e-12
    t_max: int = 20
    s_max: int = 100
    lambda_init: float = 1.0
    lambda_max: float = 1e10
    max_halvings: int = 10
    threshold_grid: int = 200

    def __post_init__(self):
        for name in ("K", "gamma_min", "gamma_max", "zero_threshold", "conv_tol",
                     "lambda_init", "lambda_max", "threshold_grid"):
            if not getattr(self, name) > 0:
                raise ValidationError(f"{name} must be positive")
        if self.t_max < 1 or self.s_max < 1:
            raise ValidationError("t_max and s_max must be at least 1")
        if self.min_ones < 0 or self.max_halvings < 0:
            raise ValidationError("min_ones and max_halvings must be nonnegative")

    def basis(self) -> ExpBasis:
        return build_basis(self.K, self.gamma_min, self.gamma_max)


@dataclass
class NpModel:
    """Fitted non-parametric model of one round.

    ``u`` has one row per smooth effect; rows of removed effects are
    exactly zero and their penalty is ``inf``.
    """

    round: int
    status: str
    theta0: float
    u: np.ndarray
    lam: np.ndarray
    signs: np.ndarray
    zeroed: np.ndarray
    x_max: np.ndarray
    ones_count: int = 0
    size: int = 0
    model_label: str | None = None
    outer_iterations: int = 0
    inner_iterations: int = 0
    message: str = ""
    names: tuple[str, ...] = STATISTICS[1:]

    @property
    def usable(self) -> bool:
        return self.status == CONVERGED

    def effect(self, l: int, x, basis: ExpBasis) -> np.ndarray:
        return basis.values(x) @ self.u[l]

    def linear_predictor(self, delta: np.ndarray, basis: ExpBasis) -> np.ndarray:
        """``theta0 + sum_l m_l(delta_l)`` for rows of non-intercept change statistics."""
        delta = np.atleast_2d(np.asarray(delta, dtype=float))
        eta = np.full(delta.shape[0], self.theta0)
        for l in range(self.u.shape[0]):
            if not self.zeroed[l]:
                eta += basis.values(delta[:, l]) @ self.u[l]
        return eta

    def to_record(self) -> dict:
        return {
            "round": self.round,
            "status": self.status,
            "model_label": self.model_label,
            "theta0": _f(self.theta0),
            "u": [[float(v) for v in row] for row in self.u],
            "lambda": [_f(v) for v in self.lam],
            "signs": [int(s) for s in self.signs],
            "zeroed": [bool(z) for z in self.zeroed],
            "x_max": [float(v) for v in self.x_max],
            "ones_count": self.ones_count,
            "size": self.size,
            "outer_iterations": self.outer_iterations,
            "inner_iterations": self.inner_iterations,
            "message": self.message,
            "names": list(self.names),
        }

    @classmethod
    def from_record(cls, r: dict) -> "NpModel":
        zeroed = np.asarray(r["zeroed"], dtype=bool)
        lam = [
            (np.inf if z else np.nan) if v is None else v for v, z in zip(r["lambda"], zeroed)
        ]
        return cls(
            round=int(r["round"]),
            status=r["status"],
            theta0=np.nan if r["theta0"] is None else float(r["theta0"]),
            u=np.asarray(r["u"], dtype=float).reshape(len(r["signs"]), -1),
            lam=np.array(lam, dtype=float),
            signs=np.asarray(r["signs"], dtype=int),
            zeroed=zeroed,
            x_max=np.asarray(r["x_max"], dtype=float),
            ones_count=int(r.get("ones_count", 0)),
            size=int(r.get("size", 0)),
            model_label=r.get("model_label"),
            outer_iterations=int(r.get("outer_iterations", 0)),
            inner_iterations=int(r.get("inner_iterations", 0)),
            message=r.get("message", ""),
            names=tuple(r.get("names", STATISTICS[1:])),
        )


def _f(v: float):
    # JSON has no infinity; removed effects (and unfitted ones) carry null
    return None if not np.isfinite(v) else float(v)


def model_label(zeroed: Sequence[bool], names: Sequence[str] = STATISTICS[1:]) -> str | None:
    """M1..M4 label for the (two-star, triangle) effect pair."""
    if tuple(names) != ("twostars", "triangles"):
        return None
    two, tri = bool(zeroed[0]), bool(zeroed[1])
    return {(False, False): "M1", (True, False): "M2", (False, True): "M3", (True, True): "M4"}[
        (two, tri)
    ]


def determine_directions(s: Subsample) -> np.ndarray:
    """Monotonicity directions from the parametric logit of ``s``.

    An effect is increasing (``+1``) when its coefficient is at least
    zero. Covariates that are constant in the sample carry no
    information; they are left out of the fit and get coefficient zero.

    Raises
    ------
    NumericalError
        If the preparatory logistic fit does not converge.
    """
    X = s.covariates.astype(float)
    p = X.shape[1]
    varying = np.ptp(X, axis=0) > 0 if len(X) else np.zeros(p, dtype=bool)
    design = np.column_stack([np.ones(len(X)), X[:, varying]])
    fit = fit_logistic(design, s.responses)
    if not fit.converged:
        raise NumericalError(f"preparatory GLM failed: {fit.reason or 'not converged'}")
    coef = np.zeros(p)
    coef[varying] = fit.theta[1:]
    return np.where(coef >= 0, 1, -1)


def np_design(s: Subsample, basis: ExpBasis) -> np.ndarray:
    """Rows ``(1, B(x_1)', .., B(x_p)')`` of the expanded design."""
    X = s.covariates.astype(float)
    cols = [np.ones((len(X), 1))] + [basis.values(X[:, l]) for l in range(X.shape[1])]
    return np.hstack(cols)


def _objective_terms(Z, y, beta, pen):
    eta = Z @ beta
    ll = float(np.sum(y * log_expit(eta) + (1 - y) * log_expit(-eta)))
    pi = expit(eta)
    w = pi * (1 - pi)
    score = Z.T @ (y - pi)
    fisher = (Z * w[:, None]).T @ Z
    value = ll - 0.5 * float(np.sum(pen * beta * beta))
    return value, score - pen * beta, -(fisher + np.diag(pen)), fisher


def _objective_value(Z, y, beta, pen) -> float:
    eta = Z @ beta
    ll = float(np.sum(y * log_expit(eta) + (1 - y) * log_expit(-eta)))
    return ll - 0.5 * float(np.sum(pen * beta * beta))


def _penalty_vector(lam, K) -> np.ndarray:
    return np.concatenate([[0.0], np.repeat(np.asarray(lam, dtype=float), K)])


def penalized_objective(
    beta: np.ndarray, lam: np.ndarray, s: Subsample, basis: ExpBasis
) -> tuple[float, np.ndarray, np.ndarray]:
    """Penalized log-likelihood with its gradient and Hessian.

    ``beta`` stacks ``(theta0, u_1, .., u_p)``; the intercept is not
    penalized. The Hessian is the negative of the penalized Fisher
    matrix.
    """
    Z = np_design(s, basis)
    value, score, hess, _ = _objective_terms(
        Z, s.responses.astype(float), np.asarray(beta, dtype=float), _penalty_vector(lam, basis.K)
    )
    return value, score, hess


def effective_df(fisher_u: np.ndarray, lam: np.ndarray, K: int) -> np.ndarray:
    """Per-block trace of ``(F + diag(lam))^{-1} F`` for the spline part."""
    lam = np.asarray(lam, dtype=float)
    Fp = fisher_u + np.diag(np.repeat(lam, K))
    try:
        M = np.linalg.solve(Fp, fisher_u)
    except np.linalg.LinAlgError:
        raise NumericalError("penalized Fisher matrix is singular") from None
    dg = np.diag(M)
    return dg.reshape(len(lam), K).sum(axis=1)


def schall_update(
    u: np.ndarray, lam: np.ndarray, fisher_u: np.ndarray, lambda_max: float = 1e10
) -> tuple[np.ndarray, np.ndarray]:
    """One Schall step ``lambda_l <- df_l / (u_l' u_l)``.

    Returns the new penalties and a mask of blocks whose penalty exceeds
    ``lambda_max`` or whose coefficients have vanished; those effects are
    to be set to zero.
    """
    u = np.atleast_2d(np.asarray(u, dtype=float))
    K = u.shape[1]
    df = effective_df(fisher_u, lam, K)
    uu = np.sum(u * u, axis=1)
    with np.errstate(divide="ignore", invalid="ignore"):
        new = np.where(uu >= 1e-12, df / uu, np.inf)
    zero = ~(new <= lambda_max)
    return new, zero


@dataclass
class _Work:
    """Mutable state of one fit: active blocks and current coefficients."""

    Z: np.ndarray
    y: np.ndarray
    A: np.ndarray
    K: int
    active: list[int]
    theta0: float
    u: dict[int, np.ndarray]
    lam: dict[int, float]
    qp_active: np.ndarray | None = None
    inner: int = 0

    def columns(self) -> np.ndarray:
        cols = [0]
        for l in self.active:
            cols.extend(range(1 + l * self.K, 1 + (l + 1) * self.K))
        return np.asarray(cols)

    def rows(self) -> np.ndarray:
        k1 = self.K - 1
        return np.asarray([r for l in self.active for r in range(l * k1, (l + 1) * k1)], dtype=int)

    def beta(self) -> np.ndarray:
        return np.concatenate([[self.theta0]] + [self.u[l] for l in self.active])

    def set_beta(self, beta: np.ndarray) -> None:
        self.theta0 = float(beta[0])
        for i, l in enumerate(self.active):
            self.u[l] = beta[1 + i * self.K : 1 + (i + 1) * self.K].copy()

    def drop(self, l: int) -> None:
        self.active.remove(l)
        self.u[l] = np.zeros(self.K)
        self.lam[l] = np.inf
        self.qp_active = None


def _newton_qp(w: _Work, cfg: FitConfig) -> bool:
    """Constrained Newton iterations at fixed penalties.

    Each step maximises the quadratic expansion of the penalized
    log-likelihood subject to ``A (beta + b) >= 0``; steps that lower the
    objective are halved. Returns True on convergence, False when
    ``t_max`` was hit. QP failures propagate.
    """
    cols = w.columns()
    Z = w.Z[:, cols]
    A = w.A[np.ix_(w.rows(), cols)] if w.active else np.zeros((0, len(cols)))
    pen = _penalty_vector([w.lam[l] for l in w.active], w.K)
    beta = w.beta()
    val, g, H, _ = _objective_terms(Z, w.y, beta, pen)
    if not np.isfinite(val):
        raise NumericalError("non-finite penalized log-likelihood")
    tol = cfg.conv_tol
    for _ in range(cfg.t_max):
        w.inner += 1
        sol = solve_qp(QpProblem(-H, g, A, -A @ beta), active=w.qp_active)
        if not np.all(np.isfinite(sol.b)):
            raise NumericalError("non-finite Newton step")
        w.qp_active = sol.active
        step = 1.0
        for _ in range(cfg.max_halvings + 1):
            cand = beta + step * sol.b
            vc = _objective_value(Z, w.y, cand, pen)
            if vc >= val - 1e-13 * abs(val):
                break
            step *= 0.5
        else:
            # no ascent along the QP direction: at the optimum up to rounding
            w.set_beta(beta)
            return True
        change = step * np.max(np.abs(sol.b), initial=0.0)
        rel = abs(vc - val) / max(abs(val), 1e-300)
        beta = cand
        val, g, H, _ = _objective_terms(Z, w.y, beta, pen)
        if rel <= tol and change <= np.sqrt(tol) * (1.0 + np.max(np.abs(beta))):
            w.set_beta(beta)
            return True
    w.set_beta(beta)
    return False


def _effect_sups(w: _Work, basis: ExpBasis, x_max: np.ndarray, G: int) -> dict[int, float]:
    out = {}
    for l in w.active:
        grid = np.linspace(0.0, x_max[l], G)
        out[l] = float(np.max(np.abs(basis.values(grid) @ w.u[l])))
    return out


def fit_np_sample(s: Subsample, cfg: FitConfig | None = None, basis: ExpBasis | None = None) -> NpModel:
    """Fit the penalized monotone model to one subsample.

    Outer iterations alternate a constrained Newton run at fixed
    penalties with a Schall update of the penalties, up to ``s_max``
    times, until the largest relative penalty change is below
    ``conv_tol``. Effects whose penalty passes ``lambda_max`` are
    removed. When a Newton step fails after the very first one, the
    smallest effect is removed if it is below ``zero_threshold`` in sup
    norm over the observed range; otherwise the fit is aborted.
    """
    cfg = cfg or FitConfig()
    basis = basis or cfg.basis()
    K = basis.K
    X = s.covariates
    p = X.shape[1]
    x_max = X.max(axis=0).astype(float) if len(X) else np.zeros(p)
    y = s.responses.astype(float)

    def result(status, w=None, signs=None, msg="", outer=0):
        if w is None:
            return NpModel(
                s.round, status, np.nan, np.zeros((p, K)), np.full(p, np.nan),
                np.zeros(p, dtype=int) if signs is None else signs,
                np.zeros(p, dtype=bool), x_max, s.ones_count, s.size,
                message=msg, names=s.names,
            )
        zeroed = np.array([l not in w.active for l in range(p)])
        return NpModel(
            s.round, status, w.theta0, np.array([w.u[l] for l in range(p)]),
            np.array([w.lam[l] for l in range(p)]), signs, zeroed, x_max,
            s.ones_count, s.size,
            model_label(zeroed, s.names) if status in (CONVERGED, MAX_ITER) else None,
            outer, w.inner, msg, s.names,
        )

    if s.ones_count < cfg.min_ones:
        return result(NO_FIT, msg=f"{s.ones_count} ones < {cfg.min_ones}")
    try:
        signs = determine_directions(s)
    except NumericalError as exc:
        return result(ABORTED, msg=str(exc))

    ybar = s.ones_count / s.size
    w = _Work(
        Z=np_design(s, basis), y=y, A=constraint_matrix(basis, signs, p).A, K=K,
        active=list(range(p)), theta0=float(np.log(ybar / (1 - ybar))),
        u={l: np.zeros(K) for l in range(p)}, lam={l: cfg.lambda_init for l in range(p)},
    )
    first = True
    outer = 0
    while outer < cfg.s_max:
        if not w.active:
            # intercept only: closed form
            w.theta0 = float(np.log(ybar / (1 - ybar)))
            return result(CONVERGED, w, signs, outer=outer)
        try:
            with np.errstate(over="raise", invalid="raise"):
                _newton_qp(w, cfg)
        except (NumericalError, FloatingPointError, np.linalg.LinAlgError) as exc:
            if first:
                return result(ABORTED, w, signs, msg=f"first Newton step failed: {exc}", outer=outer)
            sups = _effect_sups(w, basis, x_max, cfg.threshold_grid)
            smallest = min(sups, key=sups.get)
            if sups[smallest] > cfg.zero_threshold:
                return result(ABORTED, w, signs, msg=f"Newton step failed: {exc}", outer=outer)
            w.drop(smallest)
            continue
        first = False
        outer += 1

        cols = w.columns()
        beta = w.beta()
        pi = expit(w.Z[:, cols] @ beta)
        Zc = w.Z[:, cols]
        fisher = (Zc * (pi * (1 - pi))[:, None]).T @ Zc
        old = np.array([w.lam[l] for l in w.active])
        try:
            new, zero = schall_update(
                np.array([w.u[l] for l in w.active]), old, fisher[1:, 1:], cfg.lambda_max
            )
        except NumericalError as exc:
            return result(ABORTED, w, signs, msg=str(exc), outer=outer)
        if zero.any():
            for l in [l for l, z in zip(w.active, zero) if z]:
                w.drop(l)
            for l, v, z in zip(list(w.active), new[~zero], zero[~zero]):
                w.lam[l] = float(v)
            continue
        for l, v in zip(w.active, new):
            w.lam[l] = float(v)
        if np.max(np.abs(new - old) / old) <= cfg.conv_tol:
            return result(CONVERGED, w, signs, outer=outer)
    return result(MAX_ITER, w, signs, msg=f"s_max={cfg.s_max} reached", outer=outer)


def fit_np_fixed(
    s: Subsample, lam: Sequence[float], signs: Sequence[int], cfg: FitConfig | None = None,
    basis: ExpBasis | None = None, drop: Sequence[int] = (),
) -> NpModel:
    """Constrained Newton fit at fixed penalties (no Schall updates).

    Effects listed in ``drop`` are removed from the model beforehand.
    """
    cfg = cfg or FitConfig()
    basis = basis or cfg.basis()
    K, p = basis.K, s.covariates.shape[1]
    signs = np.asarray(signs, dtype=int)
    ybar = s.ones_count / s.size
    w = _Work(
        Z=np_design(s, basis), y=s.responses.astype(float),
        A=constraint_matrix(basis, signs, p).A, K=K, active=list(range(p)),
        theta0=float(np.log(ybar / (1 - ybar))), u={l: np.zeros(K) for l in range(p)},
        lam={l: float(v) for l, v in enumerate(lam)},
    )
    for l in drop:
        w.drop(l)
    ok = _newton_qp(w, cfg) if w.active else True
    zeroed = np.array([l not in w.active for l in range(p)])
    x_max = s.covariates.max(axis=0).astype(float)
    return NpModel(
        s.round, CONVERGED if ok else MAX_ITER, w.theta0, np.array([w.u[l] for l in range(p)]),
        np.array([w.lam[l] for l in range(p)]), signs, zeroed, x_max, s.ones_count, s.size,
        model_label(zeroed, s.names), 0, w.inner, names=s.names,
    )


def _fit_round(g: UndirectedGraph, k: int, cfg: FitConfig) -> NpModel:
    s = extract_subsample(g, one_factorization(g.n).round(k))
    return fit_np_sample(s, cfg, cfg.basis())


def tally(models: Sequence[NpModel]) -> dict[str, int]:
    """Counts in the layout of the model fitting summary table."""
    c = Counter()
    for m in models:
        if m.status == NO_FIT:
            c["no_fit"] += 1
        elif m.status == ABORTED:
            c["aborted"] += 1
        elif m.status == MAX_ITER:
            c["max_iter"] += 1
        else:
            c[m.model_label or "other"] += 1
    out = {k: c.get(k, 0) for k in TALLY_ROWS}
    out["total"] = len(models)
    return out


def fit_np_all(
    g: UndirectedGraph, cfg: FitConfig | None = None, workers: int | None = 1
) -> tuple[list[NpModel], dict[str, int]]:
    """Fit every round of ``g``; models ordered by round plus the status tally."""
    cfg = cfg or FitConfig()
    if g.n % 2:
        raise ValidationError(f"n={g.n} is odd; drop a node first")
    models = map_rounds(_fit_round, g, range(1, g.n), workers, cfg)
    return models, tally(models)


def write_models_json(models: Sequence[NpModel], path: str | os.PathLike) -> None:
    with open(path, "w", encoding="utf-8") as fh:
        json.dump([m.to_record() for m in models], fh, indent=1, allow_nan=False)


def read_models_json(path: str | os.PathLike) -> list[NpModel]:
    with open(path, encoding="utf-8") as fh:
        return [NpModel.from_record(r) for r in json.load(fh)]


def write_tally_csv(counts: dict[str, int] | None, path: str | os.PathLike) -> None:
    labels = {
        "total": "total samples",
        "no_fit": "no fit (too few ones)",
        "M1": "model M1 (two-star + triangle)",
        "M2": "model M2 (triangle)",
        "M3": "model M3 (two-star)",
        "M4": "model M4 (intercept only)",
        "max_iter": "max. iterations reached",
        "aborted": "other non-convergence",
    }
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["row", "description", "count"])
        if counts is not None:
            for k in TALLY_ROWS:
                w.writerow([k, labels[k], counts.get(k, 0)])
