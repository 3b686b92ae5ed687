"""Mean and depth-median summaries of per-round curve estimates.

Each usable round contributes one stacked row ``(theta0, m_1 on grid,
.., m_p on grid)``. The functional median is the observed row that is
deepest in band depth with bands of two curves; ties in band depth are
broken by modified band depth and then by the lowest round index.
"""

from __future__ import annotations

import csv
import json
import os
from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np
from numba import njit, prange

from .basis import ExpBasis
from .errors import DegenerateFamilyError, EmptySummaryError, ValidationError
from .npfit import CONVERGED, NpModel, model_label


@dataclass
class CurveFamily:
    grids: list[np.ndarray]
    curves: np.ndarray
    round_ids: np.ndarray
    names: tuple[str, ...] = ()

    def __post_init__(self):
        self.curves = np.atleast_2d(np.asarray(self.curves, dtype=float))
        self.round_ids = np.asarray(self.round_ids, dtype=int)
        width = 1 + sum(len(g) for g in self.grids)
        if self.curves.shape[1] != width or len(self.round_ids) != len(self.curves):
            raise ValidationError("curve rows do not match grids / round ids")

    @property
    def m(self) -> int:
        return self.curves.shape[0]

    def segment(self, l: int) -> np.ndarray:
        start = 1 + sum(len(g) for g in self.grids[:l])
        return self.curves[:, start : start + len(self.grids[l])]


@dataclass
class Depths:
    bd: np.ndarray
    mbd: np.ndarray

    def order(self, round_ids: np.ndarray) -> np.ndarray:
        """Indices from deepest to least deep; ties go to the lower round."""
        return np.lexsort((round_ids, -self.mbd, -self.bd))


@dataclass
class MedianModel:
    round: int
    model: NpModel
    depths: Depths
    index: int


def usable_models(models: Sequence[NpModel]) -> list[NpModel]:
    return [m for m in models if m.status == CONVERGED]


def evaluate_curve_family(models: Sequence[NpModel], basis: ExpBasis, G: int = 200) -> CurveFamily:
    """Evaluate all usable models on shared grids.

    The grid of effect ``l`` has ``G`` equally spaced points on
    ``[0, max x_max]`` over the usable models.
    """
    used = usable_models(models)
    if not used:
        raise EmptySummaryError("no usable models to combine")
    if G < 2:
        raise ValidationError("G must be at least 2")
    p = used[0].u.shape[0]
    top = np.max([m.x_max for m in used], axis=0)
    grids = [np.linspace(0.0, top[l], G) for l in range(p)]
    Bs = [basis.values(gr) for gr in grids]
    rows = np.empty((len(used), 1 + p * G))
    for r, m in enumerate(used):
        rows[r, 0] = m.theta0
        for l in range(p):
            seg = slice(1 + l * G, 1 + (l + 1) * G)
            rows[r, seg] = 0.0 if m.zeroed[l] else Bs[l] @ m.u[l]
    return CurveFamily(grids, rows, np.array([m.round for m in used]), tuple(used[0].names))


@njit(cache=True)
def _pack(F, i, W):
    m, T = F.shape
    below = np.zeros((m, W), np.uint64)
    above = np.zeros((m, W), np.uint64)
    for j in range(m):
        for t in range(T):
            bit = np.uint64(1) << np.uint64(t & 63)
            if F[j, t] < F[i, t]:
                below[j, t >> 6] |= bit
            elif F[j, t] > F[i, t]:
                above[j, t >> 6] |= bit
    return below, above


@njit(parallel=True, cache=True)
def _band_depth_counts(F, candidates, pivots):
    # Number of pairs {j, k} whose envelope contains row i at every
    # column. Such a pair must straddle row i at the pivot column, so only
    # pairs with one member weakly below and one weakly above there are
    # scanned.
    m, T = F.shape
    W = (T + 63) // 64
    out = np.zeros(m, np.int64)
    for c in prange(candidates.size):
        i = candidates[c]
        t0 = pivots[c]
        x0 = F[i, t0]
        below, above = _pack(F, i, W)
        lo = np.flatnonzero(F[:, t0] <= x0)
        hi = np.flatnonzero(F[:, t0] >= x0)
        cnt = 0
        for a in lo:
            tie_a = F[a, t0] == x0
            for b in hi:
                if b == a or (tie_a and F[b, t0] == x0 and b < a):
                    continue
                ok = True
                for w in range(W):
                    if (below[a, w] & below[b, w]) != 0 or (above[a, w] & above[b, w]) != 0:
                        ok = False
                        break
                if ok:
                    cnt += 1
        out[i] = cnt
    return out


def _pointwise_counts(F: np.ndarray) -> np.ndarray:
    """Pairs containing ``F[i, t]`` at each column: C(m,2) - C(L,2) - C(U,2)."""
    m = F.shape[0]
    S = np.sort(F, axis=0)
    L = np.empty_like(F, dtype=np.int64)
    U = np.empty_like(F, dtype=np.int64)
    for t in range(F.shape[1]):
        L[:, t] = np.searchsorted(S[:, t], F[:, t], side="left")
        U[:, t] = m - np.searchsorted(S[:, t], F[:, t], side="right")
    c2 = lambda a: a * (a - 1) // 2  # noqa: E731
    return c2(m) - c2(L) - c2(U)


def band_depth(f: CurveFamily | np.ndarray) -> np.ndarray:
    """Exact band depth with bands from all pairs of curves."""
    F = _matrix(f)
    m = F.shape[0]
    pw = _pointwise_counts(F)
    # a row can only be inside a band everywhere if it is inside at each column
    cand = np.flatnonzero(pw.min(axis=1) > 0).astype(np.int64)
    pivots = np.argmin(pw[cand], axis=1).astype(np.int64)
    counts = _band_depth_counts(F, cand, pivots)
    return counts / (m * (m - 1) / 2)


def modified_band_depth(f: CurveFamily | np.ndarray) -> Depths:
    """Band depth and modified band depth of every curve.

    Returns both stages: ``bd`` is the proportion of curve pairs whose
    envelope contains the curve at every grid column, ``mbd`` the
    average over pairs of the proportion of columns where it does.
    """
    F = _matrix(f)
    m = F.shape[0]
    if m < 3:
        raise DegenerateFamilyError(f"depth needs at least 3 curves, got {m}")
    total = m * (m - 1) / 2
    mbd = _pointwise_counts(F).mean(axis=1) / total
    return Depths(band_depth(F), mbd)


def _matrix(f) -> np.ndarray:
    F = f.curves if isinstance(f, CurveFamily) else np.atleast_2d(np.asarray(f, dtype=float))
    if not np.all(np.isfinite(F)):
        raise ValidationError("curves must be finite")
    return np.ascontiguousarray(F)


def select_median(f: CurveFamily, models: Sequence[NpModel]) -> MedianModel:
    """Deepest observed curve and the model it came from."""
    depths = modified_band_depth(f)
    idx = int(depths.order(f.round_ids)[0])
    rnd = int(f.round_ids[idx])
    by_round = {m.round: m for m in models}
    if rnd not in by_round:
        raise ValidationError(f"no model for round {rnd}")
    return MedianModel(rnd, by_round[rnd], depths, idx)


def mean_curve(f: CurveFamily) -> np.ndarray:
    """Pointwise mean of the stacked rows."""
    if f.m < 1:
        raise EmptySummaryError("empty curve family")
    return f.curves.mean(axis=0)


def mean_model(models: Sequence[NpModel]) -> NpModel:
    """Model with averaged coefficients of the usable fits.

    Because every fit uses the same basis, its curves equal the
    pointwise mean curves.
    """
    used = usable_models(models)
    if not used:
        raise EmptySummaryError("no usable models to average")
    u = np.mean([m.u for m in used], axis=0)
    zeroed = np.all([m.zeroed for m in used], axis=0)
    signs = np.sign(np.sum(u, axis=1)).astype(int)
    return NpModel(
        round=0, status=CONVERGED, theta0=float(np.mean([m.theta0 for m in used])), u=u,
        lam=np.full(u.shape[0], np.nan), signs=np.where(signs == 0, 1, signs), zeroed=zeroed,
        x_max=np.max([m.x_max for m in used], axis=0), model_label=model_label(zeroed, used[0].names),
        message=f"mean of {len(used)} fits", names=used[0].names,
    )


@dataclass
class Combined:
    family: CurveFamily
    mean: np.ndarray
    median: MedianModel
    mean_model: NpModel


def combine(models: Sequence[NpModel], basis: ExpBasis, G: int = 200) -> Combined:
    f = evaluate_curve_family(models, basis, G)
    return Combined(f, mean_curve(f), select_median(f, models), mean_model(models))


def write_combined_json(c: Combined, basis: ExpBasis, path: str | os.PathLike) -> None:
    d = c.median.depths
    rec = {
        "basis": basis.to_dict(),
        "names": list(c.family.names),
        "grids": [[float(v) for v in g] for g in c.family.grids],
        "mean": [float(v) for v in c.mean],
        "mean_model": c.mean_model.to_record(),
        "median_round": c.median.round,
        "median_model": c.median.model.to_record(),
        "depths": [
            {"round": int(r), "bd": float(a), "mbd": float(b)}
            for r, a, b in zip(c.family.round_ids, d.bd, d.mbd)
        ],
    }
    with open(path, "w", encoding="utf-8") as fh:
        json.dump(rec, fh, indent=1, allow_nan=False)


def write_curves_csv(c: Combined | None, path: str | os.PathLike) -> None:
    """Long-format curves: one line per (curve, term, grid point)."""
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["curve", "term", "x", "value"])
        if c is None:
            return
        f = c.family
        rows = [(str(r), f.curves[i]) for i, r in enumerate(f.round_ids)]
        rows += [("mean", c.mean), ("median", f.curves[c.median.index])]
        for label, row in rows:
            w.writerow([label, "intercept", "", repr(float(row[0]))])
            start = 1
            for name, grid in zip(f.names, f.grids):
                for x, v in zip(grid, row[start : start + len(grid)]):
                    w.writerow([label, name, repr(float(x)), repr(float(v))])
                start += len(grid)
