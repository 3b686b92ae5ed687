"""Bounded monotone basis built from exponential distribution functions.

Every component ``B_q(x) = 1 - exp(-gamma_q x)`` vanishes at zero, is
increasing and tends to one, so any finite coefficient vector gives a
bounded smooth effect. Monotonicity of ``B(x)' u`` is enforced by
linear constraints at the crossing points of neighbouring basis
derivatives.
"""

from __future__ import annotations

import json
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .errors import ValidationError


@dataclass(frozen=True)
class ExpBasis:
    gammas: np.ndarray

    def __post_init__(self):
        g = np.asarray(self.gammas, dtype=float)
        if g.ndim != 1 or g.size < 2:
            raise ValidationError("basis needs at least two rates")
        if g[0] <= 0 or np.any(np.diff(g) <= 0):
            raise ValidationError("rates must be positive and strictly ascending")
        object.__setattr__(self, "gammas", g)

    @property
    def K(self) -> int:
        return self.gammas.size

    @property
    def cutpoints(self) -> np.ndarray:
        """``xi_r`` with ``B'_r(xi_r) == B'_{r+1}(xi_r)``, ``r = 1..K-1``."""
        g0, g1 = self.gammas[:-1], self.gammas[1:]
        return np.log(g1 / g0) / (g1 - g0)

    def values(self, x) -> np.ndarray:
        """``B(x)`` with shape ``x.shape + (K,)``."""
        x = _nonneg(x)
        return -np.expm1(-np.multiply.outer(x, self.gammas))

    def derivatives(self, x) -> np.ndarray:
        x = _nonneg(x)
        return self.gammas * np.exp(-np.multiply.outer(x, self.gammas))

    def evaluate(self, x) -> tuple[np.ndarray, np.ndarray]:
        return self.values(x), self.derivatives(x)

    def to_dict(self) -> dict:
        return {"K": self.K, "gammas": [float(v) for v in self.gammas]}

    def to_json(self) -> str:
        return json.dumps(self.to_dict())

    @classmethod
    def from_dict(cls, d: dict) -> "ExpBasis":
        b = cls(np.asarray(d["gammas"], dtype=float))
        if "K" in d and int(d["K"]) != b.K:
            raise ValidationError("K does not match number of rates")
        return b


def _nonneg(x) -> np.ndarray:
    x = np.asarray(x, dtype=float)
    if np.any(x < 0) or np.any(np.isnan(x)):
        raise ValidationError("basis arguments must be nonnegative")
    return x


def build_basis(K: int = 20, gamma_min: float = 0.0005, gamma_max: float = 1.0) -> ExpBasis:
    """``K`` rates spaced geometrically between ``gamma_min`` and ``gamma_max``."""
    if K < 2:
        raise ValidationError(f"K must be at least 2, got {K}")
    if not 0 < gamma_min < gamma_max:
        raise ValidationError(f"need 0 < gamma_min < gamma_max, got {gamma_min}, {gamma_max}")
    return ExpBasis(np.geomspace(gamma_min, gamma_max, K))


def eval_basis(b: ExpBasis, x) -> tuple[np.ndarray, np.ndarray]:
    return b.evaluate(x)


@dataclass(frozen=True)
class ConstraintMatrix:
    """Monotonicity constraints ``A @ beta >= 0`` on ``(theta0, u_1, .., u_p)``.

    Row ``l * (K - 1) + r`` holds ``signs[l] * B'(xi_r)`` in the columns
    of block ``u_l``.
    """

    A: np.ndarray
    signs: np.ndarray

    def block_rows(self, l: int) -> slice:
        k1 = self.A.shape[0] // len(self.signs)
        return slice(l * k1, (l + 1) * k1)


def constraint_matrix(b: ExpBasis, signs: Sequence[int], p: int | None = None) -> ConstraintMatrix:
    signs = np.asarray(signs, dtype=int)
    p = signs.size if p is None else p
    if signs.size != p or not np.all(np.isin(signs, (-1, 1))):
        raise ValidationError("signs must have length p with entries +-1")
    K = b.K
    D = b.derivatives(b.cutpoints)  # (K-1, K)
    A = np.zeros((p * (K - 1), 1 + p * K))
    for l in range(p):
        A[l * (K - 1) : (l + 1) * (K - 1), 1 + l * K : 1 + (l + 1) * K] = signs[l] * D
    return ConstraintMatrix(A, signs)


def curve(b: ExpBasis, u: np.ndarray, x) -> np.ndarray:
    """Smooth effect ``m(x) = B(x)' u``."""
    return b.values(x) @ np.asarray(u, dtype=float)
