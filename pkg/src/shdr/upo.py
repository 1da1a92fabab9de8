"""Unstable periodic orbits by the method of closest returns.

Orbits are cut from a sampled trajectory where it nearly closes on itself,
deduplicated by Hausdorff distance, and ranked by how long the trajectory
stays phase-locked near each one.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np
from scipy.spatial import cKDTree
from scipy.spatial.distance import directed_hausdorff, pdist, squareform

from . import _kernels
from .dynamics import dominant_period
from .embedding import choose_params, embed
from .ensemble import DriverSignal
from .errors import ArgumentRange, NoOrbitsFound
from .metrics import distmat_pearson

CMP_LIMIT = 500


@dataclass(frozen=True)
class PeriodicOrbit:
    """One cycle of a near-closed trajectory segment.

    ``points`` holds ``period_samples`` rows at the source sampling interval;
    the closing point x(t+P) is not repeated.
    """

    points: np.ndarray
    period_samples: int
    recurrence_gap: float
    shadow_fraction: float
    start: int = -1

    def as_dict(self) -> dict:
        return {
            "period_samples": int(self.period_samples),
            "recurrence_gap": float(self.recurrence_gap),
            "shadow_fraction": float(self.shadow_fraction),
            "start": int(self.start),
        }


def trajectory_rms(traj) -> float:
    """Root-mean-square distance of the points from their centroid."""
    X = np.asarray(traj, dtype=float)
    return float(np.sqrt(np.mean(np.sum((X - X.mean(axis=0)) ** 2, axis=1))))


def _as_trajectory(traj) -> np.ndarray:
    X = np.asarray(traj, dtype=float)
    if X.ndim == 1:
        X = X[:, None]
    if X.ndim != 2 or not np.all(np.isfinite(X)):
        raise ArgumentRange("trajectory must be a finite (T, d) array")
    return np.ascontiguousarray(X)


def _hausdorff(a, b) -> float:
    return max(directed_hausdorff(a, b)[0], directed_hausdorff(b, a)[0])


def shadow_fraction(traj, orbit_points, eps: float) -> float:
    """Fraction of trajectory points that follow the orbit within eps, in phase, for a full period.

    A point counts when it lies within eps of the orbit and belongs to a run
    of consecutive such points whose nearest orbit phase advances by about one
    sample per step, the run lasting at least one period.
    """
    X = _as_trajectory(traj)
    O = np.asarray(orbit_points, dtype=float)
    P = O.shape[0]
    dist, phase = cKDTree(O).query(X, distance_upper_bound=eps)
    near = dist <= eps
    slack = max(2, int(round(0.1 * P)))
    count = _kernels.coherent_shadow_count(near, phase.astype(np.int64), P, slack)
    return count / X.shape[0]


def _candidates(periods, gaps):
    """Best start of each run of consecutive starts that return with a similar period."""
    starts = np.nonzero(periods > 0)[0]
    out = []
    i = 0
    while i < starts.size:
        j = i
        while (j + 1 < starts.size and starts[j + 1] == starts[j] + 1
               and abs(periods[starts[j + 1]] - periods[starts[j]]) <= 1):
            j += 1
        run = starts[i:j + 1]
        best = run[np.argmin(gaps[run])]
        out.append((float(gaps[best]), int(periods[best]), int(best)))
        i = j + 1
    out.sort()
    return out


def find_upos(traj, max_period: Optional[int] = None, eps: Optional[float] = None,
              n_orbits: int = 3, sample_dt: float = 1.0,
              max_candidates: int = 5000) -> list:
    """Extract up to ``n_orbits`` periodic orbits ranked by shadowing fraction.

    Parameters
    ----------
    traj : (T, d) array
        Uniformly sampled trajectory.
    max_period : int, optional
        Longest period scanned, in samples. Defaults to five dominant
        oscillation periods of the first coordinate.
    eps : float, optional
        Closure and clustering tolerance. Defaults to 0.05 times the
        trajectory rms.
    max_candidates : int
        Cap on the closest-return segments that enter clustering; the ones
        with the smallest gaps are kept.

    Raises
    ------
    NoOrbitsFound
        If no segment closes within eps.
    """
    X = _as_trajectory(traj)
    T = X.shape[0]
    if eps is None:
        eps = 0.05 * trajectory_rms(X)
    if not eps > 0:
        raise ArgumentRange("eps must be positive")
    if max_period is None:
        max_period = int(round(5 * dominant_period(X[:, 0], 1.0)))
    max_period = int(max_period)
    if max_period < 2:
        raise ArgumentRange("max_period must be >= 2")
    if T < 3 * max_period:
        raise ArgumentRange(f"trajectory of {T} samples is shorter than 3 * max_period")
    if n_orbits < 1:
        raise ArgumentRange("n_orbits must be >= 1")

    periods, gaps = _kernels.closest_returns(X, max_period, eps, 2.0 * eps)
    cands = _candidates(periods, gaps)[:max_candidates]
    if not cands:
        raise NoOrbitsFound(f"no closed segment within eps={eps:.3g}; try a larger eps")

    reps = []
    boxes = []
    for gap, P, t in cands:
        seg = X[t:t + P]
        box = np.concatenate([seg.min(axis=0), seg.max(axis=0)])
        # sets within Hausdorff distance eps have bounding boxes within eps per face
        if any(np.all(np.abs(box - b) < eps) and _hausdorff(seg, X[rt:rt + rP]) < eps
               for (_, rP, rt), b in zip(reps, boxes)):
            continue
        reps.append((gap, P, t))
        boxes.append(box)

    orbits = []
    for gap, P, t in reps:
        assert gap <= eps
        pts = X[t:t + P].copy()
        orbits.append(PeriodicOrbit(pts, P, gap, shadow_fraction(X, pts, eps), t))
    orbits.sort(key=lambda o: (-o.shadow_fraction, o.period_samples))
    return orbits[:n_orbits]


def resample_closed(points, n_points: int) -> np.ndarray:
    """Resample a closed curve to n points equally spaced in arc length, starting at points[0]."""
    P = np.asarray(points, dtype=float)
    if P.ndim == 1:
        P = P[:, None]
    loop = np.vstack([P, P[:1]])
    seg = np.linalg.norm(np.diff(loop, axis=0), axis=1)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    if s[-1] == 0:
        return np.repeat(P[:1], n_points, axis=0)
    target = np.arange(n_points) * (s[-1] / n_points)
    return np.column_stack([np.interp(target, s, loop[:, q]) for q in range(loop.shape[1])])


def orbit_distance_matrix(orbit, n_points: int) -> np.ndarray:
    """Pairwise Euclidean distances of the orbit resampled uniformly in arc length."""
    if n_points < 4:
        raise ArgumentRange("n_points must be >= 4")
    points = orbit.points if isinstance(orbit, PeriodicOrbit) else orbit
    return squareform(pdist(resample_closed(points, n_points)))


def _resample_phase(points, n_points: int) -> np.ndarray:
    """Resample one cycle to n points uniformly in time (phase), cyclically."""
    P = np.asarray(points, dtype=float)
    loop = np.vstack([P, P[:1]])
    src = np.arange(loop.shape[0]) / P.shape[0]
    target = np.arange(n_points) / n_points
    return np.column_stack([np.interp(target, src, loop[:, q]) for q in range(P.shape[1])])


def _lift(recon) -> np.ndarray:
    if isinstance(recon, DriverSignal):
        Y = np.asarray(recon.values, dtype=float)
    else:
        Y = np.asarray(recon, dtype=float)
    if Y.ndim == 1:
        Y = Y[:, None]
    if Y.shape[1] == 1:
        params = choose_params(Y)
        Y = embed(Y[:, 0], params).points
    return Y


def orbit_reconstruction_correlation(recon, orbits: Sequence, sample_ratio: float = 1.0,
                                     window_step: Optional[int] = None) -> list:
    """Distance-matrix correlation between a reconstruction and each orbit.

    Each orbit cycle is resampled in time to the number of reconstruction
    samples it spans (``period_samples / sample_ratio``, capped at 500 points).
    Every window of that length along the reconstruction is compared with it
    through the Pearson correlation of the two distance matrices; the best
    window is the phase alignment and its correlation is reported. A
    one-mode reconstruction is delay-lifted first.

    Returns one correlation per orbit.
    """
    Y = _lift(recon)
    if Y.shape[0] < 100:
        raise ArgumentRange("reconstruction must have at least 100 samples")
    out = []
    for orbit in orbits:
        points = orbit.points if isinstance(orbit, PeriodicOrbit) else np.asarray(orbit)
        period = orbit.period_samples if isinstance(orbit, PeriodicOrbit) else len(points)
        W = int(round(period / sample_ratio))
        W = max(4, min(W, Y.shape[0]))
        n_cmp = min(W, CMP_LIMIT)
        sub = np.linspace(0, W - 1, n_cmp).round().astype(int)
        ref = pdist(_resample_phase(points, W)[sub])
        step = window_step or max(1, (Y.shape[0] - W) // 2000)
        best = -np.inf
        for s in range(0, Y.shape[0] - W + 1, step):
            cand = pdist(Y[s + sub])
            if np.ptp(cand) == 0:
                continue
            r = np.corrcoef(ref, cand)[0, 1]
            if r > best:
                best = r
        if not np.isfinite(best):
            best = distmat_pearson(squareform(ref), squareform(pdist(Y[sub])))
        out.append(float(best))
    return out
