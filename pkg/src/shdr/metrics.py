"""Scores for comparing driver estimates with ground truth, plus graph diagnostics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components
from scipy.stats import rankdata

from .errors import ConstantSeries, ShapeMismatch
from .recurrence import ConsensusGraph


def _paired(a, b, min_len=2):
    a = np.asarray(a, dtype=float).ravel()
    b = np.asarray(b, dtype=float).ravel()
    if a.shape != b.shape:
        raise ShapeMismatch(f"sequences have lengths {a.size} and {b.size}")
    if a.size < min_len:
        raise ShapeMismatch(f"need at least {min_len} paired values, got {a.size}")
    return a, b


def pearson(a, b) -> float:
    a, b = _paired(a, b)
    a = a - a.mean()
    b = b - b.mean()
    na, nb = np.sqrt(a @ a), np.sqrt(b @ b)
    if na == 0 or nb == 0:
        raise ConstantSeries("correlation is undefined for a constant series")
    return float(np.clip((a @ b) / (na * nb), -1.0, 1.0))


def spearman(a, b) -> float:
    """Pearson correlation of average ranks."""
    a, b = _paired(a, b, min_len=3)
    return pearson(rankdata(a), rankdata(b))


def mse(a, b) -> float:
    a, b = _paired(a, b, min_len=1)
    return float(np.mean((a - b) ** 2))


def covariance(a, b) -> float:
    """Population covariance."""
    a, b = _paired(a, b)
    return float(np.mean((a - a.mean()) * (b - b.mean())))


def _comb2(x):
    x = np.asarray(x, dtype=float)
    return x * (x - 1) / 2.0


def adjusted_rand(truth, pred) -> float:
    """Adjusted Rand index from the pair-counting contingency table.

    Two trivial partitions that agree (both one cluster, or both all
    singletons) score 1.
    """
    truth = np.asarray(truth).ravel()
    pred = np.asarray(pred).ravel()
    if truth.shape != pred.shape:
        raise ShapeMismatch(f"label sequences have lengths {truth.size} and {pred.size}")
    if truth.size < 2:
        raise ShapeMismatch("need at least 2 labels")
    _, t = np.unique(truth, return_inverse=True)
    _, p = np.unique(pred, return_inverse=True)
    table = sp.coo_matrix((np.ones(t.size), (t, p))).tocsr()
    sum_cells = _comb2(table.data).sum()
    sum_rows = _comb2(np.asarray(table.sum(axis=1)).ravel()).sum()
    sum_cols = _comb2(np.asarray(table.sum(axis=0)).ravel()).sum()
    total = _comb2(truth.size)
    expected = sum_rows * sum_cols / total
    max_index = 0.5 * (sum_rows + sum_cols)
    if max_index == expected:
        return 1.0
    return float((sum_cells - expected) / (max_index - expected))


@dataclass(frozen=True)
class PercolationReport:
    lcc_fraction: float
    component_sizes: list
    edge_count: int
    threshold_used: float

    def as_dict(self) -> dict:
        return {
            "lcc_fraction": self.lcc_fraction,
            "component_sizes": list(self.component_sizes),
            "edge_count": self.edge_count,
            "threshold_used": self.threshold_used,
        }


DEFAULT_PERCOLATION_THRESHOLD = float(np.exp(-1.0))


def percolation(b, threshold: float = DEFAULT_PERCOLATION_THRESHOLD) -> PercolationReport:
    """Largest-connected-component census.

    ``b`` is a boolean adjacency (threshold ignored) or a weighted graph
    where edges with ``A_ij >= threshold`` are kept. Self-loops never count.
    """
    if isinstance(b, ConsensusGraph):
        b = b.A
    if sp.issparse(b):
        W = sp.csr_matrix(b)
        if W.dtype != bool:
            W = W.copy()
            W.data = W.data >= threshold
        else:
            threshold = float("nan")
    else:
        W = np.asarray(b)
        if W.dtype == bool:
            threshold = float("nan")
        else:
            W = W >= threshold
        W = sp.csr_matrix(W)
    W = W.astype(bool).tolil()
    W.setdiag(False)
    W = W.tocsr()
    W.eliminate_zeros()
    n = W.shape[0]
    _, labels = connected_components(W, directed=False)
    sizes = sorted(np.bincount(labels).tolist(), reverse=True)
    edges = int(sp.triu(W + W.T, k=1).nnz)
    return PercolationReport(sizes[0] / n, sizes, edges, float(threshold))


def beta_null(n_responses: int, n_states: int = 2, q: float = 0.5) -> float:
    """Null accuracy if each response independently reveals each driver state with probability q.

    ``q`` is calibrated from the single-response accuracy. The expected
    fraction of resolved states does not depend on ``n_states``; it is kept
    to validate the setting.
    """
    if n_responses < 1:
        raise ValueError("n_responses must be >= 1")
    if n_states < 2:
        raise ValueError("n_states must be >= 2")
    if not 0.0 <= q <= 1.0:
        raise ValueError("q must be a probability")
    return float(1.0 - (1.0 - q) ** n_responses)


def beta_null_curve(ns, q: float, n_states: int = 2) -> list:
    return [beta_null(int(n), n_states, q) for n in ns]


def distmat_pearson(a, b) -> float:
    """Pearson correlation between the strict upper triangles of two square matrices."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.shape != b.shape or a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ShapeMismatch(f"need equal square matrices, got {a.shape} and {b.shape}")
    iu = np.triu_indices(a.shape[0], 1)
    return pearson(a[iu], b[iu])


def align_truth(truth, time_offset: int, length: int) -> np.ndarray:
    """Truncate a raw-time truth series to the rows of an embedded reconstruction."""
    truth = np.asarray(truth)
    out = truth[time_offset:time_offset + length]
    if out.shape[0] != length:
        raise ShapeMismatch(
            f"truth of length {truth.shape[0]} cannot cover offset {time_offset} + {length}"
        )
    return out


def signed_spearman(truth, estimate) -> float:
    """Spearman correlation after choosing the estimate's sign to maximize it.

    Eigenvector signs are arbitrary, so this is simply the absolute value.
    """
    return abs(spearman(truth, estimate))
