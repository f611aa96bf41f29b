"""Command-line front end: synthetic data, distance matrices, clustering runs,
noise sweeps, and the bound calculators, each leaving a run manifest beside
its outputs so any result can be reproduced bit for bit (timings aside).

Exit codes: 0 success, 1 usage error, 2 data error, 3 solver error.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import os
import sys
import time
from pathlib import Path

import numpy as np

from . import __version__
from .baselines import d2_clustering, kmeans_on_means, sc_on_means
from .bounds import (
    BoundInputs,
    SpectralDiagnostics,
    VacuousBoundError,
    ZeroGapError,
    consistency_bound,
    correctness_condition,
    zeta,
)
from .distributions import (
    DistributionSet,
    SyntheticConfig,
    add_gaussian_noise,
    generate_synthetic,
    load_jsonl,
    set_content_hash,
    set_to_jsonl,
)
from .divergences import NotConvergedError
from .evaluation import ami, ari
from .exact_ot import SolverFailureError
from .graph import (
    DEFAULT_TAU,
    build_distance_matrix,
    load_distance_matrix,
    params_hash,
    save_distance_matrix,
)
from .spectral import ConvergenceFailureError, IsolatedNodeError, cluster_pipeline

USAGE_ERROR = 1
DATA_ERROR = 2
SOLVER_ERROR = 3

DATA_ERRORS = (ValueError, OSError, json.JSONDecodeError)
SOLVER_ERRORS = (SolverFailureError, NotConvergedError, ConvergenceFailureError, IsolatedNodeError)


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(USAGE_ERROR, f"{self.prog}: error: {message}\n")


def atomic_write_text(path: Path, text: str) -> None:
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text, encoding="utf-8")
    os.replace(tmp, path)


def file_sha256(path: Path) -> str:
    return hashlib.sha256(path.read_bytes()).hexdigest()


def write_manifest(out_dir: Path, command: str, args: dict, seed: int | None,
                   input_hashes: dict, wall_times: dict, outputs: list[str]) -> None:
    manifest = {
        "tool": "distclust",
        "version": __version__,
        "command": command,
        "args": args,
        "seed": seed,
        "input_hashes": input_hashes,
        "wall_times_seconds": wall_times,
        "outputs": outputs,
    }
    atomic_write_text(out_dir / "manifest.json", json.dumps(manifest, indent=2, sort_keys=True) + "\n")


def labels_csv(ids: list[str], labels) -> str:
    lines = ["id,label"]
    for i, lab in zip(ids, labels):
        lines.append(f"{i},{int(lab)}")
    return "\n".join(lines) + "\n"


def parse_metric_spec(spec: str) -> tuple[str, dict]:
    """'sinkhorn:5' -> ('sinkhorn', {'epsilon': 5.0}); plain names pass through."""
    if ":" in spec:
        name, arg = spec.split(":", 1)
        if name != "sinkhorn":
            raise ValueError(f"only sinkhorn takes a :epsilon suffix, got {spec!r}")
        return name, {"epsilon": float(arg)}
    return spec, {}


def parse_sigma_grid(spec: str) -> list[float]:
    """'0:3:0.25' -> inclusive arange."""
    parts = spec.split(":")
    if len(parts) != 3:
        raise ValueError(f"sigma grid must be start:stop:step, got {spec!r}")
    start, stop, step = (float(p) for p in parts)
    if step <= 0 or stop < start:
        raise ValueError(f"bad sigma grid {spec!r}")
    return [round(start + k * step, 10) for k in range(int(np.floor((stop - start) / step + 0.5)) + 1)]


def _metric_params(args, metric: str) -> dict:
    params: dict = {}
    if metric == "mmd":
        params["sigma"] = args.sigma
    if metric == "sinkhorn":
        params["epsilon"] = args.epsilon
        if getattr(args, "sinkhorn_tol", None) is not None:
            params["tol"] = args.sinkhorn_tol
        if getattr(args, "sinkhorn_max_iter", None) is not None:
            params["max_iter"] = args.sinkhorn_max_iter
    return params


def _sigma_value(text: str):
    return text if text == "median-heuristic" else float(text)


def cmd_synth(args) -> int:
    cfg = SyntheticConfig(
        n_per_class=args.n_per_class,
        m=args.m,
        seed=args.seed,
        ring_radius=args.ring_radius,
        base_scale=args.base_scale,
        scale_log_amplitude=args.scale_log_amplitude,
        jitter=args.jitter,
    )
    t0 = time.perf_counter()
    dset = generate_synthetic(cfg)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    data_path = out / "synthetic.jsonl"
    atomic_write_text(data_path, set_to_jsonl(dset))
    labels_path = out / "labels.csv"
    atomic_write_text(labels_path, labels_csv(dset.ids, dset.labels()))
    write_manifest(
        out, "synth", vars(args) | {"func": None}, args.seed,
        {}, {"generate": time.perf_counter() - t0},
        [str(data_path), str(labels_path)],
    )
    print(f"wrote {data_path} ({dset.N} records) and {labels_path}")
    return 0


def _load_set(path: str) -> DistributionSet:
    return load_jsonl(path)


def cmd_distmat(args) -> int:
    dset = _load_set(args.infile)
    metric, extra = parse_metric_spec(args.metric)
    params = _metric_params(args, metric) | extra
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    set_hash = set_content_hash(dset)[:12]
    cache_name = (
        f"distmat-{set_hash}-{metric}-{params_hash(params)}-f{args.fraction}-s{args.seed}.csv"
    )
    cache_path = out / cache_name
    t0 = time.perf_counter()
    if cache_path.exists() and not args.force:
        D = load_distance_matrix(cache_path)
        action = "loaded"
    else:
        D = build_distance_matrix(dset, metric, params=params, fraction=args.fraction, seed=args.seed)
        save_distance_matrix(D, cache_path)
        action = "computed"
    wall = time.perf_counter() - t0
    write_manifest(
        out, "distmat", {k: v for k, v in vars(args).items() if k != "func"}, args.seed,
        {args.infile: file_sha256(Path(args.infile))}, {action: wall}, [str(cache_path)],
    )
    print(f"{action} {cache_path} ({D.N}x{D.N}, metric={D.metric})")
    for w in D.warnings:
        print(f"warning: {w}", file=sys.stderr)
    return 0


def cmd_cluster(args) -> int:
    dset = _load_set(args.infile)
    truth = dset.labels()
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    gamma = "auto" if args.gamma == "auto" else float(args.gamma)
    timings: dict = {}
    diagnostics: dict = {}

    t0 = time.perf_counter()
    if args.method == "ddsc":
        if args.metric is None:
            print("cluster: error: --metric is required for --method ddsc", file=sys.stderr)
            return USAGE_ERROR
        metric, extra = parse_metric_spec(args.metric)
        params = _metric_params(args, metric) | extra
        result = cluster_pipeline(
            dset, metric, K=args.k, params=params, tau=args.tau, gamma=gamma,
            seed=args.seed, fraction=args.fraction,
        )
        assignment = result.assignment
        timings = dict(result.timings)
        diagnostics = dict(result.diagnostics)
    elif args.method == "d2":
        assignment = d2_clustering(dset, args.k, seed=args.seed, m0=args.m0)
    elif args.method == "kmeans-mean":
        assignment = kmeans_on_means(dset, args.k, seed=args.seed)
    elif args.method == "sc-mean":
        assignment = sc_on_means(dset, args.k, seed=args.seed, tau=args.tau, gamma=gamma)
    else:
        print(f"cluster: error: unknown method {args.method!r}", file=sys.stderr)
        return USAGE_ERROR
    timings.setdefault("total", time.perf_counter() - t0)

    labels_path = out / "labels.csv"
    atomic_write_text(labels_path, labels_csv(dset.ids, assignment.labels))
    report = {
        "method": assignment.method,
        "ami": None if truth is None else ami(truth, assignment.labels),
        "ari": None if truth is None else ari(truth, assignment.labels),
        "timings": timings,
        "diagnostics": diagnostics,
        "warnings": assignment.warnings,
    }
    report_path = out / "report.json"
    atomic_write_text(report_path, json.dumps(report, indent=2, sort_keys=True) + "\n")
    write_manifest(
        out, "cluster", {k: v for k, v in vars(args).items() if k != "func"}, args.seed,
        {args.infile: file_sha256(Path(args.infile))}, timings,
        [str(labels_path), str(report_path)],
    )
    shown = {k: v for k, v in report.items() if k in ("method", "ami", "ari")}
    print(json.dumps(shown, sort_keys=True))
    return 0


def cmd_noise_sweep(args) -> int:
    dset = _load_set(args.infile)
    sigmas = parse_sigma_grid(args.sigmas)
    metric_specs = [parse_metric_spec(s.strip()) for s in args.metrics.split(",") if s.strip()]
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)

    def build(noisy, metric, extra):
        params = dict(extra)
        if metric == "mmd":
            params["sigma"] = 1.0  # kernel width held fixed across the sweep
        return build_distance_matrix(noisy, metric, params=params, seed=args.seed)

    t0 = time.perf_counter()
    baselines = {}
    for metric, extra in metric_specs:
        key = metric if not extra else f"{metric}:{extra['epsilon']:g}"
        baselines[key] = build(dset, metric, extra)
    rows = ["sigma,metric,median_relative_error"]
    for sigma in sigmas:
        noisy = add_gaussian_noise(dset, sigma, seed=args.seed)
        for metric, extra in metric_specs:
            key = metric if not extra else f"{metric}:{extra['epsilon']:g}"
            base = baselines[key]
            if sigma == 0:
                rel = 0.0
            else:
                D = build(noisy, metric, extra)
                iu = np.triu_indices(D.N, k=1)
                keep = base.mask[iu] & D.mask[iu]
                base_vals = base.values[iu][keep]
                new_vals = D.values[iu][keep]
                rel = float(np.median((new_vals - base_vals) / base_vals))
            rows.append(f"{sigma},{key},{rel!r}")
    csv_path = out / "noise_sweep.csv"
    atomic_write_text(csv_path, "\n".join(rows) + "\n")
    write_manifest(
        out, "noise-sweep", {k: v for k, v in vars(args).items() if k != "func"}, args.seed,
        {args.infile: file_sha256(Path(args.infile))},
        {"sweep": time.perf_counter() - t0}, [str(csv_path)],
    )
    print(f"wrote {csv_path} ({len(rows) - 1} rows)")
    return 0


def cmd_bounds(args) -> int:
    if args.report:
        report = json.loads(Path(args.report).read_text(encoding="utf-8"))
        diag_in = report.get("diagnostics") or {}
        missing = [k for k in ("alpha", "delta", "n", "tau", "gamma") if k not in diag_in]
        if missing:
            print(f"bounds: error: report is missing diagnostics {missing}", file=sys.stderr)
            return DATA_ERROR
        alpha, delta = float(diag_in["alpha"]), float(diag_in["delta"])
        n, tau, gamma = int(diag_in["n"]), int(diag_in["tau"]), float(diag_in["gamma"])
    else:
        if None in (args.alpha, args.delta, args.n, args.gamma):
            print("bounds: error: give --report or all of --alpha --delta --n --gamma",
                  file=sys.stderr)
            return USAGE_ERROR
        alpha, delta, n, tau, gamma = args.alpha, args.delta, args.n, args.tau, args.gamma

    inputs = BoundInputs(
        support_count=args.m,
        epsilon=args.epsilon,
        failure_prob=args.failure_prob,
        kernel_gamma=gamma,
        tau=tau,
        n_distributions=n,
        cost_scale=args.cost_scale,
        dual_lipschitz=args.dual_lipschitz,
        potential_norm=args.potential_norm,
        kernel_sup=args.kernel_sup,
    )
    diag = SpectralDiagnostics(alpha=alpha, delta=delta)
    z = zeta(inputs)
    payload: dict = {
        "zeta": z,
        "alpha": alpha,
        "delta": delta,
        "consistency_bound": None,
        "verdict": None,
    }
    try:
        payload["consistency_bound"] = consistency_bound(diag, inputs)
        payload["verdict"] = "finite"
    except VacuousBoundError:
        payload["verdict"] = "vacuous (alpha <= zeta)"
    except ZeroGapError:
        payload["verdict"] = "undefined (zero eigen-gap)"
    if args.xi is not None:
        check = correctness_condition(diag, inputs, xi=args.xi)
        payload["correctness"] = {
            "lhs": check.lhs,
            "threshold": check.threshold,
            "satisfied": check.satisfied,
            "xi": check.margin_xi,
        }
    if args.json:
        print(json.dumps(payload, indent=2, sort_keys=True))
    else:
        print(f"zeta = {z:.6g}")
        if payload["consistency_bound"] is not None:
            print(f"consistency bound = {payload['consistency_bound']:.6g}")
        print(f"verdict: {payload['verdict']}")
        if "correctness" in payload:
            c = payload["correctness"]
            print(
                f"correctness condition: lhs={c['lhs']:.6g} <= xi/2={c['threshold']:.6g}: "
                f"{c['satisfied']}"
            )
    return 0


def build_parser() -> _Parser:
    parser = _Parser(prog="distclust", description=__doc__)
    parser.add_argument("--version", action="version", version=f"distclust {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("synth", help="generate the two-class synthetic benchmark set")
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--n-per-class", type=int, default=20)
    p.add_argument("--m", type=int, default=40)
    p.add_argument("--ring-radius", type=float, default=SyntheticConfig.ring_radius)
    p.add_argument("--base-scale", type=float, default=SyntheticConfig.base_scale)
    p.add_argument("--scale-log-amplitude", type=float, default=SyntheticConfig.scale_log_amplitude)
    p.add_argument("--jitter", type=float, default=0.0)
    p.set_defaults(func=cmd_synth)

    p = sub.add_parser("distmat", help="compute or load a cached distance matrix")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--metric", required=True,
                   help="mmd | wasserstein | sinkhorn | lot (sinkhorn:EPS also accepted)")
    p.add_argument("--epsilon", type=float, default=1.0, help="sinkhorn regularizer")
    p.add_argument("--sigma", type=_sigma_value, default="median-heuristic",
                   help="mmd kernel bandwidth or 'median-heuristic'")
    p.add_argument("--fraction", type=float, default=1.0)
    p.add_argument("--seed", type=int, required=True)
    p.add_argument("--force", action="store_true", help="recompute even if cached")
    p.set_defaults(func=cmd_distmat)

    p = sub.add_parser("cluster", help="run a clustering method and score it")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--method", required=True, choices=["ddsc", "d2", "kmeans-mean", "sc-mean"])
    p.add_argument("--metric", default=None,
                   help="divergence for ddsc: mmd | wasserstein | sinkhorn | lot")
    p.add_argument("--k", type=int, required=True)
    p.add_argument("--tau", type=int, default=DEFAULT_TAU)
    p.add_argument("--gamma", default="auto")
    p.add_argument("--epsilon", type=float, default=1.0)
    p.add_argument("--sigma", type=_sigma_value, default="median-heuristic")
    p.add_argument("--fraction", type=float, default=1.0)
    p.add_argument("--m0", type=int, default=None, help="barycenter support size for d2")
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_cluster)

    p = sub.add_parser("noise-sweep", help="median relative error of each metric under noise")
    p.add_argument("--in", dest="infile", required=True)
    p.add_argument("--out", required=True)
    p.add_argument("--sigmas", default="0:3:0.25")
    p.add_argument(
        "--metrics",
        default="mmd,sinkhorn:5,sinkhorn:10,sinkhorn:50,sinkhorn:100,sinkhorn:500,wasserstein,lot",
    )
    p.add_argument("--seed", type=int, required=True)
    p.set_defaults(func=cmd_noise_sweep)

    p = sub.add_parser("bounds", help="evaluate the consistency/correctness bounds")
    p.add_argument("--report", default=None, help="report.json from a cluster run")
    p.add_argument("--m", type=int, required=True, help="support points per distribution")
    p.add_argument("--epsilon", type=float, required=True)
    p.add_argument("--failure-prob", type=float, default=0.05)
    p.add_argument("--cost-scale", type=float, default=1.0)
    p.add_argument("--dual-lipschitz", type=float, default=1.0)
    p.add_argument("--potential-norm", type=float, default=1.0)
    p.add_argument("--kernel-sup", type=float, default=1.0)
    p.add_argument("--alpha", type=float, default=None)
    p.add_argument("--delta", type=float, default=None)
    p.add_argument("--n", type=int, default=None)
    p.add_argument("--tau", type=int, default=DEFAULT_TAU)
    p.add_argument("--gamma", type=float, default=None)
    p.add_argument("--xi", type=float, default=None)
    p.add_argument("--json", action="store_true")
    p.set_defaults(func=cmd_bounds)
    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except SOLVER_ERRORS as exc:
        print(f"distclust: solver error: {exc}", file=sys.stderr)
        return SOLVER_ERROR
    except DATA_ERRORS as exc:
        print(f"distclust: data error: {exc}", file=sys.stderr)
        return DATA_ERROR


if __name__ == "__main__":
    sys.exit(main())
