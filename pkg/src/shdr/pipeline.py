"""End-to-end reconstruction, linear baselines, and benchmark sweeps."""

from __future__ import annotations

import dataclasses
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

import numpy as np

from . import metrics
from .embedding import EmbeddingParams, choose_params, embed
from .ensemble import DriverSignal, ResponseEnsemble, constant_channels, zscore
from .errors import ArgumentRange, DegenerateChannel, ShdrError, StageError
from .recurrence import (
    DENSE_LIMIT,
    INF,
    ConsensusAccumulator,
    ConsensusGraph,
    binarize,
    default_knn,
    pairwise_distances,
    sparsify_knn,
)
from .reconstruction import components, continuous_driver, discrete_driver, exact_labels

logger = logging.getLogger(__name__)

MODES = ("continuous", "discrete", "exact")


@dataclass(frozen=True)
class ReconstructOptions:
    """Pipeline settings.

    ``knn`` is ``"auto"``, ``"dense"``, or an integer k. ``theiler`` is the
    half-width of the temporal band excluded from kNN candidates; ``"auto"``
    uses the embedding window (D - 1) * tau.
    """

    mode: str = "continuous"
    p: float = 1.0
    dim: Optional[int] = None
    tau: Optional[int] = None
    max_dim: int = 10
    max_lag: int = 50
    rtol: float = 15.0
    knn: Union[str, int] = "auto"
    theiler: Union[str, int] = "auto"
    n_modes: int = 1
    tol: float = 1e-8
    max_iter: int = 20000
    seed: int = 0
    eps: float = 1e-3
    standardize: bool = True
    community: str = "modularity"
    percolation_threshold: float = metrics.DEFAULT_PERCOLATION_THRESHOLD

    def __post_init__(self):
        if self.mode not in MODES:
            raise ArgumentRange(f"mode must be one of {MODES}")
        if self.community not in ("modularity", "components"):
            raise ArgumentRange("community must be 'modularity' or 'components'")
        if not (self.p == INF or self.p >= 1):
            raise ArgumentRange("p must be >= 1 or inf")

    def replace(self, **changes) -> "ReconstructOptions":
        return dataclasses.replace(self, **changes)

    def as_dict(self) -> dict:
        out = dataclasses.asdict(self)
        if math.isinf(out["p"]):
            out["p"] = "inf"
        return out


@dataclass
class Reconstruction:
    driver: DriverSignal
    graph: ConsensusGraph
    embedding: EmbeddingParams
    percolation: metrics.PercolationReport
    options: ReconstructOptions
    timings: dict = field(default_factory=dict)

    def parameters(self) -> dict:
        out = self.options.as_dict()
        out.update(dim=self.embedding.D, tau=self.embedding.tau,
                   graph=self.graph.sparsity, k=self.graph.k)
        if self.options.mode == "exact":
            out["p"] = "inf"
        if self.graph.is_sparse and self.options.theiler == "auto":
            out["theiler"] = self.embedding.window
        return out


class _Stage:
    def __init__(self, name, timings):
        self.name = name
        self.timings = timings

    def __enter__(self):
        self.t0 = time.perf_counter()
        return self

    def __exit__(self, exc_type, exc, tb):
        self.timings[self.name] = time.perf_counter() - self.t0
        if exc is not None and isinstance(exc, ShdrError) and not isinstance(exc, StageError):
            raise StageError(self.name, exc) from exc
        return False


def consensus_graph(values: np.ndarray, params: EmbeddingParams, p: float) -> ConsensusGraph:
    """Stream each channel's distance matrix into the consensus, one at a time."""
    acc = None
    for k in range(values.shape[1]):
        e = embed(values[:, k], params, source_channel=k)
        dm = pairwise_distances(e)
        if acc is None:
            acc = ConsensusAccumulator(dm.n, p)
        acc.add(dm)
    return acc.graph()


def _resolve_knn(knn, n: int) -> Optional[int]:
    if knn == "auto":
        return default_knn(n) if n > DENSE_LIMIT else None
    if knn == "dense":
        return None
    return min(int(knn), n - 1)


def _threshold(graph: ConsensusGraph, threshold: float):
    if graph.is_sparse:
        W = graph.csr().copy()
        W.data = (W.data >= threshold).astype(float)
        return W
    return graph.A >= threshold


def reconstruct(ensemble: ResponseEnsemble, options: ReconstructOptions = ReconstructOptions()
                ) -> Reconstruction:
    """zscore -> delay embedding -> consensus graph -> [kNN] -> driver estimate."""
    timings = {}
    opts = options
    with _Stage("zscore", timings):
        if opts.standardize:
            if len(constant_channels(ensemble)) == ensemble.N:
                raise DegenerateChannel("every channel is constant; nothing to reconstruct")
            ensemble = zscore(ensemble)
        values = ensemble.values
    with _Stage("embed", timings):
        params = choose_params(values, opts.max_lag, opts.max_dim, opts.rtol, opts.dim, opts.tau)
    p = INF if opts.mode == "exact" else opts.p
    with _Stage("consensus", timings):
        graph = consensus_graph(values, params, p)
    offset = params.window
    with _Stage("sparsify", timings):
        if opts.mode == "exact":
            b = binarize(graph, opts.eps)
            perc = metrics.percolation(b)
        else:
            k = _resolve_knn(opts.knn, graph.n)
            if k is not None:
                w = params.window if opts.theiler == "auto" else int(opts.theiler)
                graph = sparsify_knn(graph, k, min(w, (graph.n - 1 - k) // 2))
            # percolation of the graph the solver actually sees
            perc = metrics.percolation(graph, opts.percolation_threshold)
    with _Stage("solve", timings):
        if opts.mode == "exact":
            driver = exact_labels(b, time_offset=offset)
        elif opts.mode == "continuous":
            driver = continuous_driver(graph, opts.n_modes, opts.tol, opts.max_iter,
                                       opts.seed, time_offset=offset)
        elif opts.community == "components":
            labels = components(_threshold(graph, opts.percolation_threshold))
            driver = DriverSignal(labels, "discrete", offset,
                                  {"n_communities": int(labels.max()) + 1})
        else:
            driver = discrete_driver(graph, opts.seed, time_offset=offset)
    return Reconstruction(driver, graph, params, perc, opts, timings)


# ---------------------------------------------------------------------------
# baselines


def _filled_zscored(ensemble: ResponseEnsemble) -> np.ndarray:
    X = zscore(ensemble).values
    # zscored channels have mean 0, so mean filling is zero filling
    return np.where(np.isnan(X), 0.0, X)


def baseline_pca(ensemble: ResponseEnsemble) -> DriverSignal:
    """First left singular vector of the z-scored (T, N) data."""
    if ensemble.N < 2:
        raise ArgumentRange("PCA baseline needs at least 2 channels")
    X = _filled_zscored(ensemble)
    U, s, _ = np.linalg.svd(X, full_matrices=False)
    u = U[:, 0]
    if u[np.argmax(np.abs(u))] < 0:
        u = -u
    return DriverSignal(u, "continuous", 0, {"singular_value": float(s[0])})


def baseline_mean(ensemble: ResponseEnsemble) -> DriverSignal:
    """Per-timepoint mean of the observed z-scored channels; NaN where none is observed."""
    X = zscore(ensemble).values
    observed = ~np.isnan(X)
    counts = observed.sum(axis=1)
    total = np.where(observed, X, 0.0).sum(axis=1)
    with np.errstate(invalid="ignore", divide="ignore"):
        mean = np.where(counts > 0, total / np.maximum(counts, 1), np.nan)
    all_missing = np.nonzero(counts == 0)[0].tolist()
    return DriverSignal(mean, "continuous", 0, {"all_missing_timepoints": all_missing})


# ---------------------------------------------------------------------------
# scoring


def score_continuous(truth, estimate: DriverSignal) -> float:
    """|Spearman| of the leading mode against the offset-aligned truth."""
    est = estimate.primary
    ok = ~np.isnan(est)
    aligned = metrics.align_truth(truth, estimate.time_offset, len(est))
    return metrics.signed_spearman(aligned[ok], est[ok])


def score_discrete(truth, estimate: DriverSignal) -> float:
    aligned = metrics.align_truth(truth, estimate.time_offset, len(estimate))
    return metrics.adjusted_rand(aligned, estimate.values)


# ---------------------------------------------------------------------------
# benchmark sweeps

SWEEP_FIELDS = {"noise": "snr", "coupling": "coupling", "n_responses": "n_responses"}
SWEEP_COLUMNS = ("param", "seed", "ari", "spearman", "lcc_fraction", "n_states", "error")


@dataclass
class SweepResult:
    """Long-format sweep table: one row per (grid value, seed), failures included."""

    experiment: str
    regime: str
    rows: list

    def column(self, name: str, param=None) -> np.ndarray:
        rows = self.rows if param is None else [r for r in self.rows if r["param"] == param]
        return np.array([r[name] for r in rows], dtype=float)

    def params(self) -> list:
        seen = []
        for r in self.rows:
            if r["param"] not in seen:
                seen.append(r["param"])
        return seen

    def summary(self) -> list:
        """Median and interquartile range per grid value (failed cells ignored)."""
        out = []
        for value in self.params():
            entry = {"param": value}
            cells = [r for r in self.rows if r["param"] == value]
            entry["n_failed"] = sum(1 for r in cells if r["error"])
            for name in ("ari", "spearman", "lcc_fraction"):
                col = self.column(name, value)
                col = col[~np.isnan(col)]
                if col.size:
                    q25, med, q75 = np.percentile(col, [25, 50, 75])
                else:
                    q25 = med = q75 = float("nan")
                entry[f"{name}_median"] = float(med)
                entry[f"{name}_q25"] = float(q25)
                entry[f"{name}_q75"] = float(q75)
            out.append(entry)
        return out

    def medians(self, name: str) -> np.ndarray:
        return np.array([s[f"{name}_median"] for s in self.summary()])

    def write_csv(self, path, summary_path=None) -> None:
        import csv

        with open(path, "w", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=SWEEP_COLUMNS)
            writer.writeheader()
            writer.writerows(self.rows)
        if summary_path is not None:
            summary = self.summary()
            with open(summary_path, "w", newline="") as fh:
                writer = csv.DictWriter(fh, fieldnames=list(summary[0]))
                writer.writeheader()
                writer.writerows(summary)


def _sweep_cell(experiment, regime, value, seed, base, options):
    from .dynamics import simulate

    row = {"param": value, "seed": seed, "ari": float("nan"), "spearman": float("nan"),
           "lcc_fraction": float("nan"), "n_states": -1, "error": ""}
    try:
        cfg = base.replace(seed=int(seed), **{SWEEP_FIELDS[experiment]: value})
        ds = simulate(cfg, regime)
        truth = ds.driver_truth
        mode = options.mode
        if mode == "continuous" and truth.mode == "discrete":
            mode = "discrete"
        result = reconstruct(ds.responses, options.replace(mode=mode))
        row["lcc_fraction"] = result.percolation.lcc_fraction
        if result.driver.mode == "discrete":
            row["n_states"] = result.driver.n_states
            if truth.mode == "discrete":
                row["ari"] = score_discrete(truth.values, result.driver)
        else:
            row["spearman"] = score_continuous(truth.values, result.driver)
    except ShdrError as exc:
        inner = exc.error if isinstance(exc, StageError) else exc
        row["error"] = f"{type(inner).__name__}:{exc.exit_code}"
        logger.info("sweep cell %s=%s seed=%s failed: %s", experiment, value, seed, exc)
    return row


def benchmark_sweep(experiment: str, regime: str, grid: Sequence, seeds: Sequence[int],
                    base_config=None, options: Optional[ReconstructOptions] = None,
                    threads: int = 1) -> SweepResult:
    """Generate, reconstruct and score every (grid value, seed) cell.

    Periodic regimes are scored by ARI of the discrete reconstruction; the
    chaotic logistic regime and continuous drivers by |Spearman|. A failing
    cell becomes a row with an ``error`` code rather than aborting the sweep.
    """
    from .dynamics import SkewSystemConfig

    if experiment not in SWEEP_FIELDS:
        raise ArgumentRange(f"experiment must be one of {tuple(SWEEP_FIELDS)}")
    if len(grid) == 0 or len(seeds) == 0:
        raise ArgumentRange("grid and seeds must be non-empty")
    base = base_config if base_config is not None else SkewSystemConfig()
    if options is None:
        options = ReconstructOptions(mode="discrete")
    cells = [(v, s) for v in grid for s in seeds]
    if threads > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=threads) as pool:
            futures = [pool.submit(_sweep_cell, experiment, regime, v, s, base, options)
                       for v, s in cells]
            rows = [f.result() for f in futures]
    else:
        rows = [_sweep_cell(experiment, regime, v, s, base, options) for v, s in cells]
    return SweepResult(experiment, regime, rows)


def first_index(values, predicate) -> int:
    """Index of the first element satisfying ``predicate``; len(values) if none."""
    for i, v in enumerate(values):
        if predicate(v):
            return i
    return len(values)
