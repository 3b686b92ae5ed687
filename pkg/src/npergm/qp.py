"""Strictly convex quadratic programs with inequality constraints.

Solves::

    minimise   -d'b + 1/2 b'Db
    subject to A b >= b0          (one row of A per constraint)

with the dual active-set method of Goldfarb and Idnani. The method
starts from the unconstrained minimiser, which is dual feasible, and
adds violated constraints one at a time, dropping constraints whose
multiplier would turn negative. Problems here are small (tens of
variables), so the factorisations for the active set are recomputed
from scratch at every change instead of being updated.
"""

from __future__ import annotations

import warnings
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from scipy.linalg import solve_triangular

from .errors import IndefiniteHessianError, InfeasibleError, NumericalError, ValidationError


@dataclass
class QpProblem:
    D: np.ndarray
    d: np.ndarray
    A: np.ndarray | None = None
    b0: np.ndarray | None = None

    def __post_init__(self):
        self.D = np.atleast_2d(np.asarray(self.D, dtype=float))
        self.d = np.asarray(self.d, dtype=float).ravel()
        q = self.d.size
        if self.D.shape != (q, q):
            raise ValidationError("D must be square and match d")
        if not np.allclose(self.D, self.D.T, rtol=0, atol=1e-10 * max(1.0, np.abs(self.D).max())):
            raise ValidationError("D must be symmetric")
        if self.A is None:
            self.A = np.zeros((0, q))
            self.b0 = np.zeros(0)
        self.A = np.asarray(self.A, dtype=float).reshape(-1, q)
        self.b0 = np.zeros(len(self.A)) if self.b0 is None else np.asarray(self.b0, dtype=float).ravel()
        if self.b0.size != len(self.A):
            raise ValidationError("b0 must have one entry per constraint row")

    def objective(self, b: np.ndarray) -> float:
        return float(-self.d @ b + 0.5 * b @ self.D @ b)


@dataclass
class QpSolution:
    b: np.ndarray
    active: np.ndarray
    multipliers: np.ndarray
    iterations: int
    objective: float

    def kkt_residuals(self, p: QpProblem) -> dict[str, float]:
        """Stationarity, feasibility, dual sign and slackness residuals."""
        slack = p.A @ self.b - p.b0
        mu = self.multipliers
        return {
            "stationarity": float(np.max(np.abs(p.D @ self.b - p.d - p.A.T @ mu), initial=0.0)),
            "infeasibility": float(max(0.0, -slack.min(initial=0.0))),
            "dual_negativity": float(max(0.0, -mu.min(initial=0.0))),
            "complementarity": float(np.max(np.abs(mu * slack), initial=0.0)),
        }


class _ActiveSet:
    """Factorisation of ``D`` restricted to an active constraint set.

    With ``D = L L'`` and ``L^{-1} N = Q R`` for the active normals ``N``,
    ``J = L^{-T} Q`` satisfies ``J' D J = I`` and ``J' N = [R; 0]``.
    """

    def __init__(self, Linv: np.ndarray, N: np.ndarray):
        self.k = N.shape[1]
        B = Linv @ N
        Q, R = np.linalg.qr(B, mode="complete")
        self.J = Linv.T @ Q
        self.R = R[: self.k, : self.k]

    def directions(self, n_p: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Primal step direction ``z`` and dual direction ``r`` for ``n_p``."""
        w = self.J.T @ n_p
        J2 = self.J[:, self.k :]
        z = J2 @ w[self.k :]
        r = solve_triangular(self.R, w[: self.k]) if self.k else np.zeros(0)
        return z, r

    def rank_ok(self, tol: float) -> bool:
        if self.k == 0:
            return True
        if self.k > self.J.shape[0]:
            return False
        dg = np.abs(np.diag(self.R))
        return bool(dg.min() > tol * max(1.0, dg.max()))

    def solve(self, d: np.ndarray, b0: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Minimiser with the active constraints binding, and multipliers."""
        k = self.k
        w = self.J.T @ d
        if k == 0:
            return self.J @ w, np.zeros(0)
        w1 = solve_triangular(self.R, b0, trans="T")
        u = solve_triangular(self.R, w1 - w[:k])
        x = self.J[:, :k] @ w1 + self.J[:, k:] @ w[k:]
        return x, u


def _cholesky(D: np.ndarray) -> np.ndarray:
    try:
        L = np.linalg.cholesky(D)
        dg = np.diag(L)
        if dg.min() > 1e-8 * dg.max():
            return L
    except np.linalg.LinAlgError:
        pass
    q = D.shape[0]
    ridge = 1e-10 * np.trace(D) / q
    warnings.warn(f"near-singular QP matrix, adding ridge {ridge:.3g}", RuntimeWarning, stacklevel=3)
    try:
        return np.linalg.cholesky(D + ridge * np.eye(q))
    except np.linalg.LinAlgError:
        raise IndefiniteHessianError("QP matrix is not positive definite") from None


def solve_qp(
    p: QpProblem,
    *,
    active: Sequence[int] | None = None,
    max_iter: int | None = None,
    tol: float = 1e-12,
) -> QpSolution:
    """Unique minimiser of a strictly convex QP with a KKT certificate.

    Parameters
    ----------
    p : QpProblem
    active : sequence of int, optional
        Warm start: constraint indices believed to bind. The method
        starts from the minimiser with these constraints at equality,
        after removing any with negative multipliers, which is again a
        dual feasible point. The solution does not depend on it.
    max_iter : int, optional
        Limit on active-set changes; defaults to ``10 * (q + m) + 10``.
    tol : float
        Relative feasibility tolerance.

    Raises
    ------
    IndefiniteHessianError
        ``D`` is not positive definite even after a tiny ridge.
    InfeasibleError
        The constraints admit no solution.
    NumericalError
        The iteration limit was reached.
    """
    D, d, A, b0 = p.D, p.d, p.A, p.b0
    q, m = d.size, A.shape[0]
    L = _cholesky(D)
    Linv = solve_triangular(L, np.eye(q), lower=True)
    max_iter = 10 * (q + m) + 10 if max_iter is None else max_iter
    row_norm = np.linalg.norm(A, axis=1)
    scale = tol * (1.0 + np.abs(b0) + row_norm)

    W: list[int] = []
    u = np.zeros(0)
    if active is not None and len(active):
        W = sorted(set(int(i) for i in active))
        while W:
            fac = _ActiveSet(Linv, A[W].T)
            if not fac.rank_ok(1e-12):
                W.pop()
                continue
            x, u = fac.solve(d, b0[W])
            if u.min() >= 0:
                break
            W.pop(int(np.argmin(u)))
    fac = _ActiveSet(Linv, A[W].T if W else np.zeros((q, 0)))
    x, u = fac.solve(d, b0[W]) if W else fac.solve(d, np.zeros(0))

    it = 0
    while True:
        slack = A @ x - b0
        viol = slack + scale
        if W:
            viol[W] = np.inf
        if m == 0 or viol.min() >= 0:
            break
        cand = np.where(viol < 0, slack / np.maximum(row_norm, 1e-300), np.inf)
        pidx = int(np.argmin(cand))
        n_p = A[pidx]
        u_p = 0.0
        while True:
            it += 1
            if it > max_iter:
                raise NumericalError("QP active-set iteration limit reached")
            z, r = fac.directions(n_p)
            s_p = n_p @ x - b0[pidx]
            # partial (dual) step limit
            t1, drop = np.inf, -1
            for j in range(len(W)):
                if r[j] > 1e-14 * max(1.0, np.abs(r).max()):
                    ratio = u[j] / r[j]
                    if ratio < t1:
                        t1, drop = ratio, j
            zn = z @ n_p
            has_primal = np.linalg.norm(z) > 1e-12 * (1.0 + np.linalg.norm(n_p)) and zn > 1e-300
            t2 = -s_p / zn if has_primal else np.inf
            t = min(t1, t2)
            if not np.isfinite(t):
                raise InfeasibleError(f"constraint {pidx} cannot be satisfied")
            if not has_primal:
                u = u - t * r
                u_p += t
                del W[drop]
                u = np.delete(u, drop)
                fac = _ActiveSet(Linv, A[W].T if W else np.zeros((q, 0)))
                continue
            x = x + t * z
            u = u - t * r
            u_p += t
            if t2 <= t1:
                W.append(pidx)
                u = np.append(u, u_p)
                fac = _ActiveSet(Linv, A[W].T)
                break
            del W[drop]
            u = np.delete(u, drop)
            fac = _ActiveSet(Linv, A[W].T if W else np.zeros((q, 0)))

    # polish from the final active set
    if W:
        x2, u2 = fac.solve(d, b0[W])
        if np.all(u2 >= -1e-10 * max(1.0, np.abs(u2).max())) and np.all(
            A @ x2 - b0 >= -scale * 10
        ):
            x, u = x2, np.clip(u2, 0.0, None)
    mu = np.zeros(m)
    if W:
        mu[W] = np.clip(u, 0.0, None)
    order = np.argsort(W)
    return QpSolution(
        b=x,
        active=np.asarray(W, dtype=int)[order],
        multipliers=mu,
        iterations=it,
        objective=p.objective(x),
    )
