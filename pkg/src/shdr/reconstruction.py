"""Driver estimates from a consensus graph.

Continuous drivers come from the slowest non-stationary modes of the random
walk on the graph; discrete drivers from modularity communities; the exact
limit from connected components of the thresholded graph.
"""

from __future__ import annotations

import logging
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.sparse as sp
from scipy.sparse.csgraph import connected_components

from . import _kernels
from .ensemble import DriverSignal
from .errors import ArgumentRange, DisconnectedGraph
from .lanczos import lanczos_largest
from .recurrence import ConsensusGraph

logger = logging.getLogger(__name__)


class DegenerateSpectrumWarning(UserWarning):
    pass


def relabel_by_first_occurrence(labels) -> np.ndarray:
    labels = np.asarray(labels)
    _, first, inverse = np.unique(labels, return_index=True, return_inverse=True)
    rank = np.empty(len(first), dtype=np.int64)
    rank[np.argsort(first, kind="stable")] = np.arange(len(first))
    return rank[inverse]


def _offdiag(A):
    W = sp.csr_matrix(A, copy=True)
    W.setdiag(0)
    W.eliminate_zeros()
    return W


def components(adjacency):
    """Connected components of an undirected 0/1 or weighted adjacency, diagonal ignored.

    Returns labels re-indexed by first occurrence.
    """
    W = _offdiag(adjacency)
    _, labels = connected_components(W, directed=False)
    return relabel_by_first_occurrence(labels)


@dataclass(frozen=True)
class SpectralResult:
    eigenvalues: np.ndarray
    eigenvectors: np.ndarray
    residuals: np.ndarray
    symmetric_vectors: np.ndarray
    degenerate: bool

    @property
    def gaps(self) -> np.ndarray:
        return -np.diff(self.eigenvalues)


def _fix_sign(X):
    X = np.array(X)
    idx = np.argmax(np.abs(X), axis=0)
    signs = np.sign(X[idx, np.arange(X.shape[1])])
    signs[signs == 0] = 1.0
    return X * signs


def diffusion_spectrum(g: ConsensusGraph, m: int = 1, tol: float = 1e-8,
                       max_iter: int = 20000, seed: int = 0) -> SpectralResult:
    """Leading m+1 eigenpairs of ``S = D^-1/2 A D^-1/2``.

    The stationary pair (eigenvalue 1, eigenvector proportional to
    sqrt(degree)) is known in closed form and deflated before iterating.
    """
    if m < 1:
        raise ArgumentRange("need at least one subleading mode")
    n = g.n
    if m + 1 > n:
        raise ArgumentRange(f"cannot extract {m} modes from a {n}-node graph")
    W = g.csr() if g.is_sparse else np.asarray(g.A)
    n_comp, comp = connected_components(_offdiag(W), directed=False)
    if n_comp > 1:
        raise DisconnectedGraph(sorted(np.bincount(comp).tolist(), reverse=True))
    deg = np.asarray(W.sum(axis=1)).ravel()
    inv_sqrt = 1.0 / np.sqrt(deg)

    def matvec(x):
        return inv_sqrt * (W @ (inv_sqrt * x))

    u0 = np.sqrt(deg) / np.linalg.norm(np.sqrt(deg))
    n_want = min(m + 1, n - 1)  # one extra mode to measure the gap below the last one
    theta, U, res = lanczos_largest(matvec, n, n_want, tol=tol, max_iter=max_iter,
                                    seed=seed, deflate=u0[:, None])
    lam = np.concatenate([[1.0], theta])
    U = np.column_stack([u0, U])
    res0 = np.linalg.norm(matvec(u0) - u0)
    res = np.concatenate([[res0], res])
    degenerate = bool(np.any(np.abs(np.diff(lam[1:])) < tol)) if len(lam) > 2 else False
    lam, U, res = lam[: m + 1], U[:, : m + 1], res[: m + 1]
    U = _fix_sign(U)
    Vrw = U * inv_sqrt[:, None]
    Vrw = _fix_sign(Vrw / np.linalg.norm(Vrw, axis=0))
    return SpectralResult(lam, Vrw, res, U, degenerate)


def continuous_driver(g: ConsensusGraph, m: int = 1, tol: float = 1e-8,
                      max_iter: int = 20000, seed: int = 0,
                      time_offset: int = 0) -> DriverSignal:
    """Subleading diffusion eigenvectors as the continuous driver estimate."""
    spectrum = diffusion_spectrum(g, m, tol, max_iter, seed)
    if spectrum.degenerate:
        warnings.warn(
            "subleading eigenvalues are degenerate within tolerance; the returned "
            "modes span the eigenspace but their individual orientation is arbitrary",
            DegenerateSpectrumWarning,
            stacklevel=2,
        )
    values = spectrum.eigenvectors[:, 1:]
    if m == 1:
        values = values[:, 0]
    info = {
        "eigenvalues": spectrum.eigenvalues.tolist(),
        "residuals": spectrum.residuals.tolist(),
        "degenerate": spectrum.degenerate,
    }
    return DriverSignal(values, "continuous", time_offset, info)


def greedy_modularity(W) -> np.ndarray:
    """Agglomerative (CNM) modularity maximization on a weighted undirected graph.

    Starts from singletons and repeatedly merges the adjacent pair with the
    largest modularity gain until no merge improves modularity. Equal gains
    go to the pair with the smallest (row, column) community indices; the
    merged community keeps the smaller index. Self-loops are ignored.

    Returns raw community ids (not re-indexed).
    """
    E = _offdiag(W).toarray() if sp.issparse(W) else np.array(W, dtype=float)
    np.fill_diagonal(E, 0.0)
    total = E.sum()
    if total <= 0:
        return np.arange(E.shape[0])
    E /= total
    return _kernels.greedy_modularity_merge(E, E.sum(axis=1))


def modularity(W, labels) -> float:
    E = _offdiag(W).toarray() if sp.issparse(W) else np.array(W, dtype=float)
    np.fill_diagonal(E, 0.0)
    total = E.sum()
    labels = np.asarray(labels)
    q = 0.0
    deg = E.sum(axis=1)
    for c in np.unique(labels):
        idx = labels == c
        q += E[np.ix_(idx, idx)].sum() / total - (deg[idx].sum() / total) ** 2
    return float(q)


def discrete_driver(g: ConsensusGraph, seed: int = 0, time_offset: int = 0) -> DriverSignal:
    """Community labels from greedy modularity, numbered by first appearance in time.

    The procedure is deterministic; ``seed`` is accepted for interface symmetry.
    """
    if g.n == 0:
        raise ArgumentRange("empty graph")
    labels = relabel_by_first_occurrence(greedy_modularity(g.A))
    return DriverSignal(labels, "discrete", time_offset, {"n_communities": int(labels.max()) + 1})


def exact_labels(b, time_offset: int = 0) -> DriverSignal:
    """Equivalence classes of the thresholded recurrence graph (connected components)."""
    labels = components(b)
    return DriverSignal(labels, "discrete", time_offset, {"n_classes": int(labels.max()) + 1})
