"""Decomposition of the dyad set into perfect matchings.

For even ``n`` the ``n - 1`` rounds of the circle (round-robin) method
form a 1-factorization of the complete graph: every dyad lies in
exactly one round and every round pairs each node once. Within one
round the dyads of a Markov graph model are conditionally independent
given the rest of the network, so each round yields an ordinary
logistic regression sample.

Rounds are generated on demand from ``(n, k)``; the factorization is
never stored unless explicitly requested.
"""

from __future__ import annotations

import csv
import os
from collections.abc import Iterator, Sequence
from dataclasses import dataclass, field

import numba
import numpy as np

from .errors import ValidationError
from .graph import STATISTICS, UndirectedGraph, change_statistics_batch


@dataclass(frozen=True)
class Matching:
    """One round: ``n/2`` node-disjoint pairs, ``i < j``, sorted by ``i``."""

    round: int
    pairs: np.ndarray

    def __len__(self) -> int:
        return len(self.pairs)


def _circle_round(n: int, k: int) -> np.ndarray:
    """Round ``k`` alone, for lazy iteration without the full array."""
    # 0-based round k: (n-1, k) plus ((k+m) mod (n-1), (k-m) mod (n-1))
    m = np.arange(1, n // 2)
    a = np.concatenate([[n - 1], (k + m) % (n - 1)])
    b = np.concatenate([[k], (k - m) % (n - 1)])
    pairs = np.column_stack([np.minimum(a, b), np.maximum(a, b)])
    return pairs[np.argsort(pairs[:, 0], kind="stable")]


@numba.njit(cache=True)
def _circle_pairs(n):
    out = np.empty((n - 1, n // 2, 2), dtype=np.int64)
    partner = np.empty(n, dtype=np.int64)
    for k in range(n - 1):
        partner[:] = -1
        partner[k] = n - 1
        for m in range(1, n // 2):
            a = (k + m) % (n - 1)
            b = (k - m + n - 1) % (n - 1)
            if a < b:
                partner[a] = b
            else:
                partner[b] = a
        q = 0
        for i in range(n):
            if partner[i] >= 0:
                out[k, q, 0] = i
                out[k, q, 1] = partner[i]
                q += 1
    return out


_OK, _OUT_OF_RANGE, _SELF_PAIR, _NODE_REPEATED, _PAIR_REPEATED = range(5)


@numba.njit(cache=True)
def _scan_rounds(arr, n):
    # one pass: (code, round, node, lo, hi) of the first violation
    seen = np.full(n, -1, dtype=np.int64)
    cover = np.zeros(n * n, dtype=np.bool_)
    for k in range(arr.shape[0]):
        for q in range(arr.shape[1]):
            i = arr[k, q, 0]
            j = arr[k, q, 1]
            if i < 0 or j < 0 or i >= n or j >= n:
                return _OUT_OF_RANGE, k, -1, -1, -1
            if i == j:
                return _SELF_PAIR, k, i, -1, -1
            for v in (i, j):
                if seen[v] == k:
                    return _NODE_REPEATED, k, v, -1, -1
                seen[v] = k
            lo = min(i, j)
            hi = max(i, j)
            if cover[lo * n + hi]:
                return _PAIR_REPEATED, k, -1, lo, hi
            cover[lo * n + hi] = True
    return _OK, -1, -1, -1, -1


def _check_even(n: int) -> None:
    if int(n) != n or n < 4 or n % 2:
        raise ValidationError(f"factorization needs an even n >= 4, got {n}")


class OneFactorization:
    """The ``n - 1`` perfect matchings of ``K_n``, indexed ``1..n-1``.

    Without ``rounds`` the circle method supplies each round lazily.
    Explicit rounds may be passed (e.g. to validate a hand-made or
    loaded schedule); they are then used verbatim.
    """

    def __init__(self, n: int, rounds: Sequence[Matching] | None = None):
        self.n = int(n)
        self._rounds = None if rounds is None else list(rounds)
        if rounds is None:
            _check_even(self.n)

    def __len__(self) -> int:
        return self.n - 1 if self._rounds is None else len(self._rounds)

    def round(self, k: int) -> Matching:
        """Round ``k`` with ``1 <= k <= len(self)``."""
        if not 1 <= k <= len(self):
            raise ValidationError(f"round {k} out of range 1..{len(self)}")
        if self._rounds is not None:
            return self._rounds[k - 1]
        return Matching(k, _circle_round(self.n, k - 1))

    def __iter__(self) -> Iterator[Matching]:
        for k in range(1, len(self) + 1):
            yield self.round(k)

    @property
    def rounds(self) -> list[Matching]:
        return list(self)

    def as_array(self) -> np.ndarray:
        """All rounds stacked into shape ``(rounds, n/2, 2)``."""
        if self._rounds is not None:
            return np.stack([np.asarray(m.pairs, dtype=np.int64) for m in self._rounds])
        return _circle_pairs(self.n)


def one_factorization(n: int) -> OneFactorization:
    """Circle-method 1-factorization of ``K_n`` for even ``n >= 4``."""
    _check_even(n)
    return OneFactorization(n)


@dataclass(frozen=True)
class FactorizationReport:
    ok: bool
    message: str = "ok"
    round: int | None = None
    node: int | None = None
    pair: tuple[int, int] | None = None

    def __bool__(self) -> bool:
        return self.ok


def validate_factorization(f: OneFactorization) -> FactorizationReport:
    """Check that ``f`` is a 1-factorization; report the first violation.

    Every round must pair each of the ``n`` nodes exactly once and every
    unordered dyad must occur in exactly one round. Rounds are numbered
    from 1 in the report.
    """
    n = f.n
    if n < 2 or n % 2:
        return FactorizationReport(False, f"n={n} is not even")
    try:
        arr = f.as_array()
    except ValueError:
        return FactorizationReport(False, "rounds have unequal sizes")
    if arr.ndim != 3 or arr.shape[-1] != 2:
        return FactorizationReport(False, "rounds are not lists of pairs")
    r, p, _ = arr.shape
    if r != n - 1:
        return FactorizationReport(False, f"expected {n - 1} rounds, found {r}")
    if p != n // 2:
        return FactorizationReport(False, f"rounds have {p} pairs, expected {n // 2}")
    code, k, node, lo, hi = _scan_rounds(np.ascontiguousarray(arr, dtype=np.int64), n)
    if code == _OUT_OF_RANGE:
        return FactorizationReport(False, f"round {k + 1} has a node out of range", round=k + 1)
    if code == _SELF_PAIR:
        return FactorizationReport(
            False, f"round {k + 1} pairs node {node} with itself", round=k + 1, node=node
        )
    if code == _NODE_REPEATED:
        return FactorizationReport(
            False, f"round {k + 1} repeats node {node}", round=k + 1, node=node
        )
    if code == _PAIR_REPEATED:
        return FactorizationReport(
            False, f"pair {(lo, hi)} appears more than once (again in round {k + 1})",
            round=k + 1, pair=(lo, hi),
        )
    # each round pairs n/2 distinct nodes and no dyad repeats; with
    # (n-1) * n/2 == C(n, 2) pairs in total every dyad is covered
    return FactorizationReport(True)


@dataclass
class Subsample:
    """Responses and change-statistic covariates of one round.

    ``covariates`` holds the change statistics of the non-intercept
    statistics only (two-stars, triangles); the edge change statistic is
    identically one and enters models as the intercept.
    """

    round: int
    pairs: np.ndarray
    responses: np.ndarray
    covariates: np.ndarray
    names: tuple[str, ...] = field(default=STATISTICS[1:])

    @property
    def ones_count(self) -> int:
        return int(self.responses.sum())

    @property
    def size(self) -> int:
        return len(self.responses)

    def design(self) -> np.ndarray:
        """Design matrix with a leading intercept column."""
        return np.column_stack([np.ones(self.size), self.covariates.astype(float)])

    def to_csv(self, path: str | os.PathLike) -> None:
        with open(path, "w", newline="", encoding="utf-8") as fh:
            w = csv.writer(fh)
            w.writerow(["y", "delta_edges"] + [f"delta_{s}" for s in self.names])
            for y, row in zip(self.responses, self.covariates):
                w.writerow([int(y), 1] + [int(v) for v in row])


def extract_subsample(g: UndirectedGraph, m: Matching) -> Subsample:
    """Responses ``y_A`` and change statistics for the dyads of ``m``.

    Change statistics are evaluated on the observed network. For a
    matching this equals evaluating them with the other matched dyads
    removed, because no two dyads of a matching share a node.
    """
    pairs = np.asarray(m.pairs, dtype=np.int64).reshape(-1, 2)
    if pairs.size and (pairs.min() < 0 or pairs.max() >= g.n):
        raise ValidationError(f"round {m.round}: node index out of range for n={g.n}")
    delta = change_statistics_batch(g, pairs[:, 0], pairs[:, 1])
    y = g.has_edges(pairs[:, 0], pairs[:, 1])
    return Subsample(m.round, pairs, y, delta[:, 1:])


def read_subsample_csv(path: str | os.PathLike, round: int = 0) -> Subsample:
    data = np.loadtxt(path, delimiter=",", skiprows=1, dtype=np.int64, ndmin=2)
    pairs = np.full((len(data), 2), -1, dtype=np.int64)
    return Subsample(round, pairs, data[:, 0].astype(np.int8), data[:, 2:])
