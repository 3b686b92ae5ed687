"""Prediction, Pearson residuals and Gibbs simulation.

Both model types reduce to the same conditional logit
``theta0 + m_2(delta_twostars) + m_3(delta_triangles)``; the
parametric model has linear ``m_l``. On a graph with ``n`` nodes the
change statistics are integers below ``2n``, so every conditional is
read from two small lookup tables.
"""

from __future__ import annotations

import csv
import math
import os
from collections.abc import Sequence
from dataclasses import dataclass
from itertools import combinations

import numpy as np
from numba import njit
from scipy.special import expit

from .basis import ExpBasis
from .errors import DegeneratePredictionError, ValidationError
from .glm import GlmFit
from .graph import UndirectedGraph, count_statistics
from .npfit import NpModel

DENSITY_BAND = (0.001, 0.9)


def _linear_predictor(model, delta: np.ndarray, basis: ExpBasis | None) -> np.ndarray:
    """``eta`` for rows of ``(delta_twostars, delta_triangles)``."""
    delta = np.atleast_2d(np.asarray(delta, dtype=float))
    if np.any(delta < 0):
        raise ValidationError("change statistics must be nonnegative")
    if isinstance(model, NpModel):
        if basis is None:
            raise ValidationError("a basis is required for non-parametric models")
        return model.linear_predictor(delta, basis)
    theta = np.asarray(model.theta if isinstance(model, GlmFit) else model, dtype=float)
    if theta.size != delta.shape[1] + 1:
        raise ValidationError(f"theta has {theta.size} entries, expected {delta.shape[1] + 1}")
    return theta[0] + delta @ theta[1:]


def predict_edge_prob(model, delta, basis: ExpBasis | None = None) -> np.ndarray | float:
    """Conditional edge probability given change statistics.

    Parameters
    ----------
    model : NpModel, GlmFit or array_like
        A non-parametric fit, a parametric fit or a coefficient vector
        ``(theta_edges, theta_twostars, theta_triangles)``.
    delta : array_like
        Change statistics without the edge term, one row per dyad;
        a single vector gives a scalar result.
    """
    scalar = np.ndim(delta) == 1
    pi = expit(_linear_predictor(model, delta, basis))
    return float(pi[0]) if scalar else pi


def effect_tables(model, n: int, basis: ExpBasis | None = None) -> tuple[float, np.ndarray, np.ndarray]:
    """Intercept and the effects at every attainable integer change statistic."""
    x2 = np.arange(max(2 * n, 2), dtype=float)
    x3 = np.arange(max(n, 2), dtype=float)
    z2 = np.zeros_like(x2)
    z3 = np.zeros_like(x3)
    theta0 = float(_linear_predictor(model, np.zeros((1, 2)), basis)[0])
    t2 = _linear_predictor(model, np.column_stack([x2, z2]), basis) - theta0
    t3 = _linear_predictor(model, np.column_stack([z3, x3]), basis) - theta0
    return theta0, t2, t3


@dataclass
class ResidualReport:
    node_avg: np.ndarray
    per_node_count: int
    degrees: np.ndarray
    labels: np.ndarray
    model_source: int | str = ""

    def top(self, k: int) -> np.ndarray:
        """Labels of the ``k`` nodes with the largest average residual."""
        order = np.lexsort((self.labels, -self.node_avg))
        return self.labels[order[:k]]


@njit(cache=True)
def _residual_sums(indptr, indices, n, theta0, t2, t3):
    deg = indptr[1:] - indptr[:-1]
    mark = np.zeros(n, np.uint8)
    sums = np.zeros(n)
    for i in range(n):
        for q in range(indptr[i], indptr[i + 1]):
            mark[indices[q]] = 1
        for j in range(i + 1, n):
            common = 0
            for q in range(indptr[j], indptr[j + 1]):
                common += mark[indices[q]]
            y = mark[j]
            eta = theta0 + t2[deg[i] + deg[j] - 2 * y] + t3[common]
            pi = 1.0 / (1.0 + math.exp(-eta))
            if not (0.0 < pi < 1.0):
                return sums, i, j
            e = (y - pi) / math.sqrt(pi * (1.0 - pi))
            sums[i] += e
            sums[j] += e
        for q in range(indptr[i], indptr[i + 1]):
            mark[indices[q]] = 0
    return sums, -1, -1


def pearson_node_residuals(
    g: UndirectedGraph, model, basis: ExpBasis | None = None, source: int | str = ""
) -> ResidualReport:
    """Average Pearson residual of every node over its ``n - 1`` dyads.

    Change statistics are those of the observed network at each dyad.

    Raises
    ------
    DegeneratePredictionError
        If a predicted probability is exactly 0 or 1.
    """
    n = g.n
    if n < 2:
        raise ValidationError("need at least two nodes")
    theta0, t2, t3 = effect_tables(model, n, basis)
    a = g.csr()
    sums, bi, bj = _residual_sums(
        a.indptr.astype(np.int64), a.indices.astype(np.int64), n, theta0, t2, t3
    )
    labels = np.arange(n) if g.labels is None else g.labels
    if bi >= 0:
        raise DegeneratePredictionError(
            f"predicted probability is 0 or 1 for dyad ({labels[bi]}, {labels[bj]})"
        )
    if source == "" and isinstance(model, (NpModel, GlmFit)):
        source = model.round
    return ResidualReport(sums / (n - 1), n - 1, g.degrees.copy(), labels, source)


def pearson_residual(y, pi):
    """``(y - pi) / sqrt(pi (1 - pi))``."""
    pi = np.asarray(pi, dtype=float)
    return (np.asarray(y, dtype=float) - pi) / np.sqrt(pi * (1 - pi))


def write_residuals_csv(r: ResidualReport | None, path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["node", "avg_pearson", "degree"])
        if r is not None:
            for lab, v, d in zip(r.labels, r.node_avg, r.degrees):
                w.writerow([int(lab), repr(float(v)), int(d)])


# exact distribution of small networks


def enumerate_ergm(n: int, theta: Sequence[float]) -> tuple[np.ndarray, np.ndarray, list]:
    """All networks on ``n`` nodes with probabilities proportional to ``exp(theta's)``.

    Returns the 0/1 dyad states (rows, dyads in lexicographic order), the
    probabilities and the dyad list. Feasible for ``n <= 6``.
    """
    if n > 6:
        raise ValidationError("enumeration is limited to n <= 6")
    dyads = list(combinations(range(n), 2))
    M = len(dyads)
    states = ((np.arange(2**M)[:, None] >> np.arange(M)) & 1).astype(np.int8)
    stats = np.empty((len(states), 3))
    for r, s in enumerate(states):
        g = UndirectedGraph(n, [d for d, b in zip(dyads, s) if b])
        stats[r] = count_statistics(g).as_array()
    w = stats @ np.asarray(theta, dtype=float)
    w = np.exp(w - w.max())
    return states, w / w.sum(), dyads


# Gibbs sampling


@dataclass
class GibbsTrace:
    """Output of :func:`gibbs_simulate`.

    ``density_path[s]`` is the density after sweep ``s + 1``;
    ``dyad_freq`` (if requested) holds the fraction of sweeps after
    which each dyad was present.
    """

    sweeps: int
    density_path: np.ndarray
    final_graph: UndirectedGraph
    seed: int
    dyad_freq: np.ndarray | None = None
    band: tuple[float, float] = DENSITY_BAND

    @property
    def degenerate(self) -> bool:
        lo, hi = self.band
        d = self.density_path
        return bool(np.any((d <= lo) | (d >= hi)))

    @property
    def exit_sweep(self) -> int | None:
        """First sweep (1-based) whose density is outside the band."""
        lo, hi = self.band
        out = np.flatnonzero((self.density_path <= lo) | (self.density_path >= hi))
        return int(out[0]) + 1 if out.size else None


@njit(cache=True)
def _gibbs_block(adj, deg, edges, theta0, t2, t3, unif, dens, freq, offset, track):
    n = adj.shape[0]
    pairs = n * (n - 1) // 2
    nsweep = unif.shape[0] // pairs
    u = 0
    for s in range(nsweep):
        for i in range(n):
            for j in range(i + 1, n):
                y = adj[i, j]
                common = 0
                for k in range(n):
                    common += adj[i, k] & adj[j, k]
                eta = theta0 + t2[deg[i] + deg[j] - 2 * y] + t3[common]
                new = 1 if unif[u] * (1.0 + math.exp(-eta)) < 1.0 else 0
                u += 1
                if new != y:
                    adj[i, j] = new
                    adj[j, i] = new
                    d = 1 if new else -1
                    deg[i] += d
                    deg[j] += d
                    edges += d
        dens[offset + s] = edges / pairs
        if track:
            for i in range(n):
                for j in range(i + 1, n):
                    freq[i, j] += adj[i, j]
    return edges


def gibbs_simulate(
    params,
    n: int,
    sweeps: int,
    seed: int = 0,
    *,
    basis: ExpBasis | None = None,
    init: UndirectedGraph | float | str = 0.5,
    track_dyads: bool = False,
    band: tuple[float, float] = DENSITY_BAND,
) -> GibbsTrace:
    """Systematic-scan Gibbs sampler of the conditional network model.

    Every sweep visits all dyads in lexicographic order and redraws each
    from its full conditional given the current network.

    Parameters
    ----------
    params : array_like, GlmFit or NpModel
        Coefficients ``(theta_edges, theta_twostars, theta_triangles)`` or a
        fitted model.
    init : UndirectedGraph, float or "empty"
        Start network, or a density for a Bernoulli start drawn from the
        same generator.
    """
    if n < 4:
        raise ValidationError("n must be at least 4")
    if sweeps < 1:
        raise ValidationError("sweeps must be at least 1")
    rng = np.random.default_rng(seed)
    theta0, t2, t3 = effect_tables(params, n, basis)
    if isinstance(init, UndirectedGraph):
        if init.n != n:
            raise ValidationError("initial graph has the wrong size")
        adj = init.to_dense().astype(np.uint8)
    elif isinstance(init, str) and init == "empty":
        adj = np.zeros((n, n), np.uint8)
    else:
        p0 = float(init)
        upper = np.triu(rng.random((n, n)) < p0, 1)
        adj = (upper | upper.T).astype(np.uint8)
    deg = adj.sum(axis=1).astype(np.int64)
    edges = int(deg.sum() // 2)
    pairs = n * (n - 1) // 2
    dens = np.empty(sweeps)
    freq = np.zeros((n, n) if track_dyads else (1, 1), np.int64)
    block = max(1, 2_000_000 // pairs)
    done = 0
    while done < sweeps:
        k = min(block, sweeps - done)
        unif = rng.random(k * pairs)
        edges = _gibbs_block(adj, deg, edges, theta0, t2, t3, unif, dens, freq, done, track_dyads)
        done += k
    final = UndirectedGraph.from_dense(adj)
    return GibbsTrace(
        sweeps, dens, final, seed, freq / sweeps if track_dyads else None, tuple(band)
    )


def write_trace_csv(t: GibbsTrace | None, path: str | os.PathLike) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh)
        w.writerow(["sweep", "density"])
        if t is not None:
            for s, d in enumerate(t.density_path, start=1):
                w.writerow([s, repr(float(d))])
