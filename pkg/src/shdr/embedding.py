"""Time-delay lifting and the heuristics that pick its parameters."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.spatial import cKDTree

from .errors import ArgumentRange, EmbeddingTooLong


@dataclass(frozen=True)
class EmbeddingParams:
    D: int = 1
    tau: int = 1

    def __post_init__(self):
        if int(self.D) != self.D or self.D < 1:
            raise ArgumentRange(f"embedding dimension must be an integer >= 1, got {self.D}")
        if int(self.tau) != self.tau or self.tau < 1:
            raise ArgumentRange(f"delay must be an integer >= 1, got {self.tau}")
        object.__setattr__(self, "D", int(self.D))
        object.__setattr__(self, "tau", int(self.tau))

    @property
    def window(self) -> int:
        """Raw samples consumed before the first complete row, i.e. the row time offset."""
        return (self.D - 1) * self.tau

    def embedded_length(self, T: int) -> int:
        return T - self.window


@dataclass(frozen=True)
class EmbeddedSeries:
    points: np.ndarray
    missing_mask: np.ndarray
    source_channel: int = 0
    params: EmbeddingParams = EmbeddingParams()

    @property
    def T_e(self) -> int:
        return self.points.shape[0]

    @property
    def D(self) -> int:
        return self.points.shape[1]

    @property
    def has_missing(self) -> bool:
        return bool(self.missing_mask.any())


def delay_matrix(x: np.ndarray, D: int, tau: int) -> np.ndarray:
    """Rows ``[x(t'), x(t'-tau), ..., x(t'-(D-1)tau)]`` for ``t' = (D-1)tau .. T-1``."""
    x = np.asarray(x, dtype=float)
    n = x.shape[0] - (D - 1) * tau
    return np.column_stack([x[(D - 1 - j) * tau:(D - 1 - j) * tau + n] for j in range(D)])


def embed(channel, params: EmbeddingParams, source_channel: int = 0) -> EmbeddedSeries:
    x = np.asarray(channel, dtype=float)
    if params.window >= x.shape[0]:
        raise EmbeddingTooLong(
            f"(D-1)*tau = {params.window} must be smaller than T = {x.shape[0]}"
        )
    points = delay_matrix(x, params.D, params.tau)
    points.setflags(write=False)
    return EmbeddedSeries(points, np.isnan(points), source_channel, params)


def autocorrelation(x, max_lag: int) -> np.ndarray:
    """Lag autocorrelation r(0..max_lag) from observed pairs only.

    The mean and variance come from all observed samples; each lag averages
    over the pairs where both ends are observed.
    """
    x = np.asarray(x, dtype=float)
    ok = ~np.isnan(x)
    xc = np.where(ok, x - x[ok].mean(), 0.0)
    var = np.mean(xc[ok] ** 2)
    okf = ok.astype(float)
    r = np.empty(max_lag + 1)
    for lag in range(max_lag + 1):
        n_pairs = np.dot(okf[: len(x) - lag], okf[lag:])
        r[lag] = np.dot(xc[: len(x) - lag], xc[lag:]) / max(n_pairs, 1.0) / var
    return r


def choose_tau(channel, max_lag: int = 50) -> int:
    """Delay from the autocorrelation function.

    Returns the earliest lag that is either a local minimum of the ACF or the
    first drop below 1/e; ``max_lag`` if neither happens.
    """
    x = np.asarray(channel, dtype=float)
    ok = ~np.isnan(x)
    if ok.sum() < max_lag + 2:
        raise ArgumentRange(f"need at least max_lag + 2 = {max_lag + 2} observed values")
    if np.ptp(x[ok]) == 0:
        return 1
    r = autocorrelation(x, max_lag + 1)
    candidates = []
    below = np.nonzero(r[1:max_lag + 1] < np.exp(-1.0))[0]
    if below.size:
        candidates.append(below[0] + 1)
    for lag in range(1, max_lag + 1):
        if r[lag] < r[lag - 1] and r[lag] <= r[lag + 1]:
            candidates.append(lag)
            break
    return int(min(candidates)) if candidates else int(max_lag)


def false_nearest_fraction(x, D: int, tau: int, rtol: float = 15.0) -> float:
    """Fraction of nearest neighbors in dimension D that separate in dimension D+1.

    Kennel distance-ratio test: a neighbor is false when the added coordinate
    differs by more than ``rtol`` times the D-dimensional distance. The added
    coordinate is the sample one delay after the newest entry, as in the
    usual forward construction.
    """
    full = delay_matrix(x, D + 1, tau)
    full = full[~np.isnan(full).any(axis=1)]
    if full.shape[0] < 2:
        raise ArgumentRange("too few complete delay vectors for false-neighbor test")
    lower, extra = full[:, 1:], full[:, 0]
    tree = cKDTree(lower)
    dist, idx = tree.query(lower, k=2)
    # column 0 is normally the point itself; with duplicates it may be a twin
    nn = np.where(idx[:, 0] == np.arange(len(lower)), idx[:, 1], idx[:, 0])
    r_d = np.linalg.norm(lower - lower[nn], axis=1)
    gap = np.abs(extra - extra[nn])
    with np.errstate(divide="ignore", invalid="ignore"):
        false = np.where(r_d > 0, gap / r_d > rtol, gap > 0)
    return float(np.mean(false))


def choose_dim(channel, tau: int, max_dim: int = 10, rtol: float = 15.0,
               threshold: float = 0.05) -> int:
    """Smallest D whose false-nearest-neighbor fraction is below ``threshold``."""
    x = np.asarray(channel, dtype=float)
    if x.shape[0] - max_dim * tau < 10:
        raise ArgumentRange(f"series too short for max_dim={max_dim}, tau={tau}")
    ok = ~np.isnan(x)
    if np.ptp(x[ok]) == 0:
        return 1
    for D in range(1, max_dim):
        if false_nearest_fraction(x, D, tau, rtol) < threshold:
            return D
    return int(max_dim)


def choose_params(values: np.ndarray, max_lag: int = 50, max_dim: int = 10,
                  rtol: float = 15.0, dim=None, tau=None) -> EmbeddingParams:
    """One (D, tau) for every channel of a (T, N) array: per-channel heuristics, median-aggregated.

    Explicit ``dim``/``tau`` override the heuristics. The medians are rounded up.
    """
    values = np.asarray(values, dtype=float)
    if values.ndim == 1:
        values = values[:, None]
    T = values.shape[0]
    max_lag = min(max_lag, T - 2)
    if tau is None:
        taus = [choose_tau(values[:, k], max_lag) for k in range(values.shape[1])]
        tau = int(np.ceil(np.median(taus)))
    if dim is None:
        max_dim = max(1, min(max_dim, (T - 10) // tau))
        dims = [choose_dim(values[:, k], tau, max_dim, rtol) for k in range(values.shape[1])]
        dim = int(np.ceil(np.median(dims)))
    params = EmbeddingParams(dim, tau)
    if params.window >= T:
        raise EmbeddingTooLong(f"(D-1)*tau = {params.window} must be smaller than T = {T}")
    return params
