"""Margin diagnostics for candidate synthetic-generator geometries.

For each candidate configuration this prints, per divergence, the worst-case
ratio between a member's nearest different-class divergence and its tau-th
same-class divergence (>1 means the tau-NN precondition holds with margin),
plus the mean-based and barycenter baseline scores.  Used to pick the shipped
defaults.
"""

import argparse
import sys
import time

import numpy as np

from distclust.baselines import d2_clustering, kmeans_on_means, sc_on_means
from distclust.distributions import SyntheticConfig, generate_synthetic
from distclust.evaluation import ami
from distclust.graph import build_distance_matrix, check_connectivity, to_affinity
from distclust.spectral import cluster_pipeline


def margin_ratio(D, labels, tau):
    values = D.values.copy()
    if D.metric == "mmd":
        values = np.maximum(values, 0.0)
    n = len(labels)
    worst = np.inf
    for i in range(n):
        same = labels == labels[i]
        same[i] = False
        intra = np.sort(values[i, same])
        inter = values[i, labels != labels[i]]
        denom = intra[tau - 1]
        ratio = np.inf if denom == 0 else inter.min() / denom
        worst = min(worst, ratio)
    return worst


def main():
    parser = argparse.ArgumentParser()
    parser.add_argument("--ring-radius", type=float, nargs="+", default=[0.1, 0.15, 0.2])
    parser.add_argument("--amplitude", type=float, nargs="+", default=[0.04, 0.06, 0.08])
    parser.add_argument("--circle-factor", type=float, nargs="+", default=[2.0 / 3.0**0.5])
    parser.add_argument("--base-scale", type=float, default=3.0)
    parser.add_argument("--seed", type=int, default=7)
    parser.add_argument("--tau", type=int, default=10)
    parser.add_argument("--mmd-sigma", type=float, default=1.0)
    parser.add_argument("--d2", action="store_true", help="also run the (slow) d2 baseline")
    parser.add_argument("--ami", action="store_true", help="also run the full pipelines")
    args = parser.parse_args()

    import itertools
    for radius, amp, cf in itertools.product(args.ring_radius, args.amplitude, args.circle_factor):
            cfg = SyntheticConfig(
                seed=args.seed,
                ring_radius=radius,
                base_scale=args.base_scale,
                scale_log_amplitude=amp,
                circle_radius_factor=cf,
            )
            dset = generate_synthetic(cfg)
            labels = dset.labels()
            print(f"\n=== R={radius} A={amp} cf={cf:.3f} scale={args.base_scale} seed={args.seed} ===")
            for metric, params in (
                ("mmd", {"sigma": args.mmd_sigma}),
                ("wasserstein", None),
                ("sinkhorn", {"epsilon": 1.0}),
                ("lot", None),
            ):
                t0 = time.time()
                D = build_distance_matrix(dset, metric, params=params, seed=args.seed)
                ratio = margin_ratio(D, labels, args.tau)
                graph = to_affinity(D, tau=args.tau)
                report = check_connectivity(graph, labels)
                line = (f"  {metric:12s} ratio={ratio:6.3f} comp={report.n_components} "
                        f"no_inter={report.no_inter_class_edges} margin={report.margin:.4f}")
                if args.ami:
                    res = cluster_pipeline(dset, metric, K=2, params=params,
                                           tau=args.tau, seed=args.seed)
                    line += f" AMI={ami(labels, res.assignment.labels):.3f}"
                print(line + f" ({time.time() - t0:.1f}s)")
            km = kmeans_on_means(dset, 2, seed=args.seed)
            sc = sc_on_means(dset, 2, seed=args.seed, tau=args.tau)
            print(f"  kmeans-mean AMI={ami(labels, km.labels):.3f}  "
                  f"sc-mean AMI={ami(labels, sc.labels):.3f}")
            if args.d2:
                t0 = time.time()
                d2 = d2_clustering(dset, 2, seed=args.seed)
                print(f"  d2 AMI={ami(labels, d2.labels):.3f} ({time.time() - t0:.1f}s)")


if __name__ == "__main__":
    sys.exit(main())
