"""Command-line entry point: ``shdr <subcommand> ...``.

Every run writes its outputs plus a single ``manifest.json`` into ``--out-dir``.
Exit codes: 0 success, 2 input error, 3 numerical failure.
"""

from __future__ import annotations

import argparse
import json
import logging
import math
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__, metrics
from .dynamics import SkewSystemConfig, simulate
from .ensemble import (
    IngestOptions,
    load_csv,
    load_driver,
    save_csv,
    save_driver,
)
from .errors import ArgumentRange, ShdrError, StageError
from .pipeline import (
    ReconstructOptions,
    baseline_mean,
    baseline_pca,
    benchmark_sweep,
    reconstruct,
)
from .recurrence import load_triplets, save_triplets

logger = logging.getLogger("shdr")

SYSTEMS = {
    "logistic": ("logistic", "logistic"),
    "rossler-lorenz": ("rossler", "lorenz"),
    "double-gyre": ("sine", "tracer"),
}


def _float_or_inf(text: str) -> float:
    if text.strip().lower() in ("inf", "infinity"):
        return math.inf
    return float(text)


def _knn(text: str):
    if text in ("auto", "dense"):
        return text
    return int(text)


def _theiler(text: str):
    return text if text == "auto" else int(text)


def _number_list(text: str) -> list:
    out = []
    for item in text.split(","):
        value = _float_or_inf(item)
        out.append(int(value) if math.isfinite(value) and value == int(value) else value)
    return out


def _jsonify(value):
    if isinstance(value, float) and math.isinf(value):
        return "inf"
    if isinstance(value, float) and math.isnan(value):
        return None
    if isinstance(value, dict):
        return {k: _jsonify(v) for k, v in value.items()}
    if isinstance(value, (list, tuple)):
        return [_jsonify(v) for v in value]
    if isinstance(value, Path):
        return str(value)
    if isinstance(value, np.generic):
        return _jsonify(value.item())
    return value


def write_manifest(out_dir: Path, subcommand: str, parameters: dict, inputs: list,
                   outputs: list, seed: int, runtime: float) -> Path:
    manifest = {
        "subcommand": subcommand,
        "parameters": parameters,
        "inputs": [str(p) for p in inputs],
        "outputs": [str(p) for p in outputs],
        "seed": seed,
        "version": __version__,
        "runtime_seconds": runtime,
        "argv": sys.argv[1:],
    }
    path = out_dir / "manifest.json"
    path.write_text(json.dumps(_jsonify(manifest), indent=2, sort_keys=True))
    return path


# ---------------------------------------------------------------------------
# parser


def _add_reconstruct_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--mode", choices=("continuous", "discrete", "exact"), default="continuous")
    p.add_argument("--p", type=_float_or_inf, default=1.0, help="consensus norm (>= 1 or inf)")
    p.add_argument("--dim", type=int, help="embedding dimension (default: false nearest neighbors)")
    p.add_argument("--tau", type=int, help="embedding delay (default: autocorrelation)")
    p.add_argument("--max-dim", type=int, default=10)
    p.add_argument("--max-lag", type=int, default=50)
    p.add_argument("--rtol", type=float, default=15.0)
    p.add_argument("--knn", type=_knn, default="auto", help="'auto', 'dense', or an integer k")
    p.add_argument("--theiler", type=_theiler, default="auto",
                   help="temporal band excluded from kNN candidates ('auto' = embedding window)")
    p.add_argument("--n-modes", type=int, default=1)
    p.add_argument("--tol", type=float, default=1e-8)
    p.add_argument("--max-iter", type=int, default=20000)
    p.add_argument("--community", choices=("modularity", "components"), default="modularity")
    p.add_argument("--eps", type=float, default=1e-3, help="exact-mode threshold on -ln A")
    p.add_argument("--percolation-threshold", type=float,
                   default=metrics.DEFAULT_PERCOLATION_THRESHOLD)
    p.add_argument("--no-standardize", action="store_true", help="skip per-channel z-scoring")


def _reconstruct_options(args) -> ReconstructOptions:
    return ReconstructOptions(
        mode=args.mode, p=args.p, dim=args.dim, tau=args.tau, max_dim=args.max_dim,
        max_lag=args.max_lag, rtol=args.rtol, knn=args.knn, theiler=args.theiler,
        n_modes=args.n_modes, tol=args.tol, max_iter=args.max_iter, seed=args.seed,
        eps=args.eps, standardize=not args.no_standardize, community=args.community,
        percolation_threshold=args.percolation_threshold,
    )


def _add_system_flags(p: argparse.ArgumentParser) -> None:
    p.add_argument("--system", choices=tuple(SYSTEMS), default="logistic")
    p.add_argument("--regime", default="period2",
                   help="logistic regime: period2, period4, period8, chaotic")
    p.add_argument("--config", type=Path, help="flat key=value file of SkewSystemConfig fields")
    p.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE",
                   help="override one config field (repeatable)")
    p.add_argument("--n-responses", type=int)
    p.add_argument("--coupling", type=float)
    p.add_argument("--snr", type=_float_or_inf)
    p.add_argument("--t-points", type=int)
    p.add_argument("--dt", type=float)
    p.add_argument("--filter", dest="measurement_filter", choices=("identity", "random_gaussian"))


def _read_key_values(lines) -> dict:
    out = {}
    for line in lines:
        line = line.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ArgumentRange(f"expected key=value, got {line!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def _system_config(args) -> SkewSystemConfig:
    driver, response = SYSTEMS[args.system]
    data = {"driver": driver, "response": response, "seed": args.seed}
    if args.config is not None:
        data.update(_read_key_values(args.config.read_text().splitlines()))
    data.update(_read_key_values(args.overrides))
    for name in ("n_responses", "coupling", "snr", "t_points", "dt", "measurement_filter"):
        value = getattr(args, name, None)
        if value is not None:
            data[name] = value
    return SkewSystemConfig.from_dict(data)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="shdr",
        description="Reconstruct a hidden driving signal from an ensemble of response series.",
    )
    parser.add_argument("--seed", type=int, default=0)
    parser.add_argument("--threads", type=int, default=None,
                        help="worker processes for sweeps (default: $SHDR_THREADS or 1)")
    parser.add_argument("--out-dir", type=Path, default=Path("shdr_out"))
    parser.add_argument("-v", "--verbose", action="count", default=0)
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("reconstruct", help="estimate the driver from a CSV of responses")
    p.add_argument("input", type=Path)
    p.add_argument("--header", action="store_true")
    p.add_argument("--delimiter", default=",")
    p.add_argument("--sample-period", type=float, default=1.0)
    p.add_argument("--baseline", choices=("none", "pca", "mean"), default="none",
                   help="also write a linear baseline estimate")
    p.add_argument("--save-graph", action="store_true", help="write the graph as i j w triplets")
    _add_reconstruct_flags(p)

    p = sub.add_parser("simulate", help="generate a synthetic skew-product dataset")
    _add_system_flags(p)

    p = sub.add_parser("benchmark", help="sweep one control parameter over seeds")
    p.add_argument("--experiment", choices=("noise", "coupling", "n_responses"), required=True)
    p.add_argument("--grid", type=_number_list, required=True, help="comma-separated values")
    p.add_argument("--seeds", type=int, default=20, help="number of seeds, starting at --seed")
    _add_system_flags(p)
    _add_reconstruct_flags(p)
    p.set_defaults(mode="discrete")

    p = sub.add_parser("diagnose", help="score an estimate against ground truth")
    p.add_argument("--truth", type=Path, required=True, help="one-column CSV of the raw-time truth")
    p.add_argument("--estimate", type=Path, required=True,
                   help="driver CSV written by reconstruct (with its JSON sidecar)")
    p.add_argument("--graph", type=Path, help="triplet file for the percolation census")
    p.add_argument("--percolation-threshold", type=float,
                   default=metrics.DEFAULT_PERCOLATION_THRESHOLD)
    p.add_argument("--beta-q", type=float, default=0.5,
                   help="per-response discovery probability for the null curve")
    p.add_argument("--beta-n", type=_number_list, default=[1, 2, 4, 8, 16, 32, 64])
    p.add_argument("--n-states", type=int, default=2)

    p = sub.add_parser("upo", help="extract periodic orbits from a trajectory CSV")
    p.add_argument("input", type=Path, help="(T, d) trajectory CSV")
    p.add_argument("--header", action="store_true")
    p.add_argument("--max-period", type=int)
    p.add_argument("--eps", type=float)
    p.add_argument("--n-orbits", type=int, default=3)
    p.add_argument("--sample-dt", type=float, default=1.0)
    return parser


# ---------------------------------------------------------------------------
# subcommands


def cmd_reconstruct(args, out: Path):
    ens = load_csv(args.input, IngestOptions(args.header, args.delimiter, args.sample_period))
    opts = _reconstruct_options(args)
    result = reconstruct(ens, opts)
    params = result.parameters()
    outputs = [out / "driver.csv"]
    save_driver(result.driver, outputs[0], params)
    perc_path = out / "percolation.json"
    perc_path.write_text(json.dumps(_jsonify(result.percolation.as_dict()), indent=2))
    outputs.append(perc_path)
    if args.save_graph:
        outputs.append(out / "graph.txt")
        save_triplets(result.graph, outputs[-1])
    if args.baseline != "none":
        base = baseline_pca(ens) if args.baseline == "pca" else baseline_mean(ens)
        outputs.append(out / f"baseline_{args.baseline}.csv")
        save_driver(base, outputs[-1], {"baseline": args.baseline})
    params["timings"] = result.timings
    return params, [args.input], outputs


def cmd_simulate(args, out: Path):
    cfg = _system_config(args)
    ds = simulate(cfg, args.regime)
    outputs = [out / "responses.csv", out / "driver_truth.csv", out / "config.json"]
    save_csv(ds.responses, outputs[0])
    save_driver(ds.driver_truth, outputs[1], {"regime": args.regime})
    outputs[2].write_text(json.dumps(_jsonify(ds.config), indent=2, sort_keys=True))
    params = cfg.as_dict() | {"regime": args.regime, "system": args.system}
    return params, [], outputs


def cmd_benchmark(args, out: Path):
    cfg = _system_config(args)
    opts = _reconstruct_options(args)
    seeds = list(range(args.seed, args.seed + args.seeds))
    result = benchmark_sweep(args.experiment, args.regime, args.grid, seeds, cfg, opts,
                             threads=args.threads)
    outputs = [out / "sweep.csv", out / "summary.csv"]
    result.write_csv(outputs[0], outputs[1])
    params = {
        "experiment": args.experiment, "regime": args.regime, "grid": args.grid,
        "seeds": seeds, "config": cfg.as_dict(), "options": opts.as_dict(),
    }
    return params, [], outputs


def _read_truth(path: Path) -> np.ndarray:
    data = np.loadtxt(path, delimiter=",", ndmin=2)
    return data[:, 0]


def cmd_diagnose(args, out: Path):
    truth = _read_truth(args.truth)
    est = load_driver(args.estimate)
    aligned = metrics.align_truth(truth, est.time_offset, len(est))
    values = est.primary
    report = {k: None for k in ("spearman", "pearson", "mse", "covariance", "ari",
                                "lcc_fraction", "component_sizes")}
    if est.mode == "discrete":
        report["ari"] = metrics.adjusted_rand(aligned, values)
    else:
        ok = ~np.isnan(values)
        a, v = aligned[ok], values[ok]
        report["spearman"] = metrics.spearman(a, v)
        report["pearson"] = metrics.pearson(a, v)
        report["mse"] = metrics.mse(a, v)
        report["covariance"] = metrics.covariance(a, v)
    if args.graph is not None:
        perc = metrics.percolation(load_triplets(args.graph), args.percolation_threshold)
        report["lcc_fraction"] = perc.lcc_fraction
        report["component_sizes"] = perc.component_sizes
    report["beta_null_curve"] = {
        "n_responses": list(args.beta_n),
        "accuracy": metrics.beta_null_curve(args.beta_n, args.beta_q, args.n_states),
        "q": args.beta_q,
    }
    path = out / "diagnose.json"
    path.write_text(json.dumps(_jsonify(report), indent=2, sort_keys=True))
    print(json.dumps(_jsonify(report), sort_keys=True))
    params = {"beta_q": args.beta_q, "beta_n": args.beta_n, "n_states": args.n_states,
              "percolation_threshold": args.percolation_threshold}
    inputs = [args.truth, args.estimate] + ([args.graph] if args.graph else [])
    return params, inputs, [path]


def cmd_upo(args, out: Path):
    from .upo import find_upos

    traj = np.loadtxt(args.input, delimiter=",", ndmin=2, skiprows=1 if args.header else 0)
    orbits = find_upos(traj, args.max_period, args.eps, args.n_orbits, args.sample_dt)
    outputs = []
    for i, orbit in enumerate(orbits):
        csv_path = out / f"orbit_{i}.csv"
        np.savetxt(csv_path, orbit.points, delimiter=",", fmt="%.17g")
        meta = out / f"orbit_{i}.json"
        meta.write_text(json.dumps(orbit.as_dict() | {"sample_dt": args.sample_dt}, indent=2))
        outputs += [csv_path, meta]
    params = {"max_period": args.max_period, "eps": args.eps, "n_orbits": args.n_orbits,
              "sample_dt": args.sample_dt, "found": len(orbits)}
    return params, [args.input], outputs


COMMANDS = {
    "reconstruct": cmd_reconstruct,
    "simulate": cmd_simulate,
    "benchmark": cmd_benchmark,
    "diagnose": cmd_diagnose,
    "upo": cmd_upo,
}


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    logging.basicConfig(level=logging.WARNING - 10 * min(args.verbose, 2),
                        format="%(levelname)s %(name)s: %(message)s")
    if args.threads is None:
        args.threads = int(os.environ.get("SHDR_THREADS", "1"))
    out = args.out_dir
    out.mkdir(parents=True, exist_ok=True)
    t0 = time.perf_counter()
    try:
        params, inputs, outputs = COMMANDS[args.command](args, out)
    except ShdrError as exc:
        inner = exc.error if isinstance(exc, StageError) else exc
        print(f"shdr {args.command}: {type(inner).__name__}: {exc}", file=sys.stderr)
        return exc.exit_code
    params = dict(params, threads=args.threads)
    write_manifest(out, args.command, params, inputs, outputs, args.seed,
                   time.perf_counter() - t0)
    return 0


if __name__ == "__main__":
    sys.exit(main())
