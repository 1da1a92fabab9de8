"""Per-response distance matrices and their consensus recurrence graph.

The consensus weight between timepoints i and j is the p-mean of the
per-response kernels ``exp(-d_ij / sigma)``::

    A_ij = ((1/N) sum_k exp(-p d_ij^(k) / sigma^(k))) ** (1/p)

``p = inf`` keeps only the closest response, which is the classical exact
reconstruction once thresholded.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from functools import cached_property
from pathlib import Path
from typing import Iterable, Optional, Union

import numpy as np
import scipy.sparse as sp
from scipy.spatial.distance import pdist

from . import _kernels
from .embedding import EmbeddedSeries
from .errors import (
    ArgumentRange,
    DegenerateGeometry,
    NoUsablePairs,
    ShapeMismatch,
)

INF = math.inf
DENSE_LIMIT = 2000


def _condensed_index(n, i, j):
    if i > j:
        i, j = j, i
    return n * i - i * (i + 1) // 2 + (j - i - 1)


@dataclass(frozen=True)
class DistanceMatrix:
    """Pairwise distances between the rows of one embedded response.

    Stored condensed (strict upper triangle, pdist order). NaN marks a pair
    with no jointly observed coordinate.
    """

    condensed: np.ndarray
    n: int
    sigma: float

    @property
    def d(self) -> np.ndarray:
        return _kernels.condensed_to_square(self.condensed, self.n, 0.0)

    @cached_property
    def has_unusable(self) -> bool:
        return bool(np.isnan(self.condensed).any())

    def __getitem__(self, ij):
        i, j = ij
        if i == j:
            return 0.0
        return float(self.condensed[_condensed_index(self.n, i, j)])

    @classmethod
    def from_square(cls, d) -> "DistanceMatrix":
        d = np.asarray(d, dtype=float)
        if d.ndim != 2 or d.shape[0] != d.shape[1]:
            raise ShapeMismatch("distance matrix must be square")
        n = d.shape[0]
        iu = np.triu_indices(n, 1)
        cond = d[iu]
        return cls(cond, n, _sigma(cond))


def _sigma(condensed) -> float:
    std, _ = _kernels.nan_std(np.ascontiguousarray(condensed, dtype=float))
    return float(std)


def pairwise_distances(e: Union[EmbeddedSeries, np.ndarray]) -> DistanceMatrix:
    """Euclidean distance matrix of an embedded series, tolerant of missing coordinates."""
    points = e.points if isinstance(e, EmbeddedSeries) else np.asarray(e, dtype=float)
    if points.ndim == 1:
        points = points[:, None]
    n = points.shape[0]
    if n < 2:
        raise ArgumentRange("need at least 2 embedded points")
    valid = ~np.isnan(points)
    if valid.all():
        cond = pdist(points)
    else:
        cond = _kernels.masked_pdist(np.where(valid, points, 0.0), valid)
        if np.isnan(cond).all():
            raise NoUsablePairs("no pair of rows shares an observed coordinate")
    return DistanceMatrix(cond, n, _sigma(cond))


@dataclass(frozen=True)
class ConsensusGraph:
    """Symmetric weighted graph over embedded timepoints.

    ``A`` is a dense ndarray or a scipy CSR matrix; the diagonal is 1.
    """

    A: Union[np.ndarray, sp.csr_matrix]
    p: float = 1.0
    sparsity: str = "dense"
    k: Optional[int] = None

    @property
    def n(self) -> int:
        return self.A.shape[0]

    @property
    def is_sparse(self) -> bool:
        return sp.issparse(self.A)

    def dense(self) -> np.ndarray:
        return self.A.toarray() if self.is_sparse else np.asarray(self.A)

    def csr(self) -> sp.csr_matrix:
        return sp.csr_matrix(self.A)

    def degree(self) -> np.ndarray:
        return np.asarray(self.A.sum(axis=1)).ravel()


class ConsensusAccumulator:
    """Streaming consensus: add one response's distances at a time.

    Keeps only condensed running sums, so memory does not grow with N.
    """

    def __init__(self, n: int, p: float = 1.0):
        if not (p == INF or p >= 1):
            raise ArgumentRange(f"p must be >= 1 or inf, got {p}")
        self.n = n
        self.p = float(p)
        size = n * (n - 1) // 2
        self.n_added = 0
        self._count = None
        if self.p == INF:
            self._best = np.full(size, np.inf)
        else:
            self._total = np.zeros(size)
            self._comp = np.zeros(size)

    def add(self, dm: DistanceMatrix) -> None:
        if dm.n != self.n:
            raise ShapeMismatch(f"distance matrix has {dm.n} points, expected {self.n}")
        if not np.isfinite(dm.sigma):
            raise NoUsablePairs("distance matrix has no usable pairs")
        if dm.sigma == 0:
            raise DegenerateGeometry("all pairwise distances are equal (sigma = 0)")
        inv_sigma = 1.0 / dm.sigma
        if self.p == INF:
            _kernels.accumulate_min(self._best, dm.condensed, inv_sigma)
        else:
            track = dm.has_unusable or self._count is not None
            if track and self._count is None:
                self._count = np.full(self._total.shape, self.n_added, dtype=np.int32)
            count = self._count if self._count is not None else np.empty(0, dtype=np.int32)
            _kernels.accumulate_power(
                self._total, self._comp, count, dm.condensed, inv_sigma, self.p, track
            )
        self.n_added += 1

    def condensed(self) -> np.ndarray:
        """Consensus weights for the strict upper triangle."""
        if self.n_added == 0:
            raise ArgumentRange("no distance matrices were added")
        if self.p == INF:
            return np.exp(-self._best)
        total = self._total + self._comp
        if self._count is None:
            mean = total / self.n_added
        else:
            with np.errstate(invalid="ignore", divide="ignore"):
                mean = np.where(self._count > 0, total / self._count, 0.0)
        return mean if self.p == 1.0 else mean ** (1.0 / self.p)

    def graph(self) -> ConsensusGraph:
        A = _kernels.condensed_to_square(self.condensed(), self.n, 1.0)
        return ConsensusGraph(A, self.p, "dense")


def consensus(mats: Iterable[DistanceMatrix], p: float = 1.0) -> ConsensusGraph:
    mats = list(mats)
    if not mats:
        raise ArgumentRange("need at least one distance matrix")
    n = mats[0].n
    if any(m.n != n for m in mats):
        raise ShapeMismatch(f"distance matrices have sizes {sorted({m.n for m in mats})}")
    acc = ConsensusAccumulator(n, p)
    for m in mats:
        acc.add(m)
    return acc.graph()


def default_knn(n: int) -> int:
    return int(math.ceil(4 * math.log(n)))


def sparsify_knn(g: ConsensusGraph, k: int, theiler: int = 0) -> ConsensusGraph:
    """Keep each row's k strongest off-diagonal edges, then symmetrize by maximum.

    With ``theiler > 0`` the candidates exclude timepoints within ``theiler``
    samples of the row, so that for smooth signals the neighbors are genuine
    recurrences rather than the adjacent samples of the same passage.
    """
    n = g.n
    if not 1 <= k < n:
        raise ArgumentRange(f"k must satisfy 1 <= k < {n}, got {k}")
    if theiler < 0 or k > n - 1 - 2 * theiler:
        raise ArgumentRange(f"theiler window {theiler} leaves fewer than k={k} candidates")
    A = g.dense()
    cols = _kernels.topk_rows(A, k, int(theiler))
    rows = np.repeat(np.arange(n), k)
    cols = cols.ravel()
    W = sp.csr_matrix((A[rows, cols], (rows, cols)), shape=(n, n))
    W = W.maximum(W.T).tolil()
    W.setdiag(np.diag(A))
    return ConsensusGraph(W.tocsr(), g.p, "knn", k)


def binarize(g: ConsensusGraph, eps: float):
    """Exact-mode adjacency: edge when the closest scaled distance ``-ln A_ij`` is <= eps.

    Returns a boolean array for dense graphs and a boolean CSR matrix for
    sparse ones; the diagonal is cleared.
    """
    if g.p != INF:
        raise ArgumentRange("binarize expects a consensus built with p = inf")
    if not eps > 0:
        raise ArgumentRange("eps must be positive")
    if g.is_sparse:
        W = g.csr().copy()
        with np.errstate(divide="ignore"):
            W.data = -np.log(W.data) <= eps
        W.setdiag(False)
        W.eliminate_zeros()
        return W.astype(bool)
    with np.errstate(divide="ignore"):
        B = -np.log(g.dense()) <= eps
    np.fill_diagonal(B, False)
    return B


def save_triplets(g: ConsensusGraph, path) -> None:
    """Write ``i j w`` lines (0-based, i <= j) for every stored edge."""
    W = sp.triu(g.csr()).tocoo()
    order = np.lexsort((W.col, W.row))
    with Path(path).open("w") as fh:
        for i, j, w in zip(W.row[order], W.col[order], W.data[order]):
            fh.write(f"{i} {j} {format(float(w), '.17g')}\n")


def load_triplets(path, n: Optional[int] = None, p: float = 1.0) -> ConsensusGraph:
    data = np.loadtxt(path, ndmin=2)
    i = data[:, 0].astype(np.int64)
    j = data[:, 1].astype(np.int64)
    w = data[:, 2]
    n = n if n is not None else int(max(i.max(), j.max())) + 1
    off = i != j
    rows = np.concatenate([i, j[off]])
    cols = np.concatenate([j, i[off]])
    vals = np.concatenate([w, w[off]])
    return ConsensusGraph(sp.csr_matrix((vals, (rows, cols)), shape=(n, n)), p, "sparse")
