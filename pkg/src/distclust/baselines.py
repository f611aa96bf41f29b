"""Comparison methods: vector k-means / spectral clustering on distribution
means, and D2 clustering with free-support Wasserstein barycenters."""

from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np

from .distributions import DiscreteDistribution, DistributionSet
from .divergences import cost_matrix
from .exact_ot import solve_transport
from .graph import DEFAULT_TAU, build_distance_matrix, to_affinity
from .lot import round_half_up
from .spectral import ClusterAssignment, eig_smallest, kmeans, laplacian

logger = logging.getLogger(__name__)


def mean_vector(dset: DistributionSet) -> np.ndarray:
    """Weighted mean of each distribution's support, stacked N x d."""
    return np.array([d.mean for d in dset])


def kmeans_on_means(dset: DistributionSet, K: int, seed: int, restarts: int = 10) -> ClusterAssignment:
    """Vector k-means on the per-distribution means."""
    result = kmeans(mean_vector(dset), K, seed=seed, restarts=restarts)
    result.method = "kmeans-mean"
    result.params.update({"K": K, "seed": seed})
    return result


def sc_on_means(
    dset: DistributionSet,
    K: int,
    seed: int,
    tau: int = DEFAULT_TAU,
    gamma: float | str = "auto",
) -> ClusterAssignment:
    """Normalized-cut spectral clustering on the per-distribution means,
    sharing the affinity/Laplacian machinery of the main pipeline."""
    D = build_distance_matrix(dset, "euclidean-mean", seed=seed)
    graph = to_affinity(D, gamma=gamma, tau=tau)
    embedding = eig_smallest(laplacian(graph), K)
    ss = np.random.SeedSequence(seed)
    kmeans_seed = int(ss.generate_state(1)[0])
    result = kmeans(embedding.rows, K, seed=kmeans_seed)
    result.method = "sc-mean"
    result.params.update({"K": K, "tau": tau, "gamma": graph.gamma, "seed": seed})
    return result


@dataclass
class Barycenter:
    """Free-support barycenter with uniform weights and its objective trace."""

    support: np.ndarray
    objective_history: list[float] = field(default_factory=list)

    @property
    def m0(self) -> int:
        return self.support.shape[0]

    @property
    def weights(self) -> np.ndarray:
        return np.full(self.m0, 1.0 / self.m0)

    @property
    def objective(self) -> float:
        return self.objective_history[-1]


def _resample_support(dist: DiscreteDistribution, m0: int, rng: np.random.Generator) -> np.ndarray:
    if dist.m == m0:
        return dist.support.copy()
    idx = rng.choice(dist.m, size=m0, replace=True, p=dist.weights)
    return dist.support[idx].copy()


def _member_plans(support: np.ndarray, members: list[DiscreteDistribution]):
    """Exact plans from the uniform barycenter support to every member, plus
    the summed squared-Wasserstein objective."""
    m0 = support.shape[0]
    uniform = np.full(m0, 1.0 / m0)
    plans = []
    objective = 0.0
    for member in members:
        C = cost_matrix(support, member.support)
        plan, cost = solve_transport(C, uniform, member.weights)
        plans.append(plan)
        objective += cost
    return plans, objective


def barycenter(
    members: list[DiscreteDistribution],
    m0: int,
    seed: int,
    max_iter: int = 30,
    tol: float = 1e-7,
    initial_support: np.ndarray | None = None,
) -> Barycenter:
    """Fixed-point free-support barycenter of the given distributions.

    Initializes from a seeded random member (resampled to m0 points) unless an
    explicit starting support is given, then alternates exact transport plans
    with the average of their barycentric projections until the summed
    squared-Wasserstein objective stalls.  The objective trace is
    non-increasing.
    """
    if not members:
        raise ValueError("members must be nonempty")
    rng = np.random.default_rng(seed)
    if initial_support is not None:
        support = np.asarray(initial_support, dtype=float).copy()
        if support.shape[0] != m0:
            raise ValueError(f"initial support has {support.shape[0]} rows, expected {m0}")
    else:
        start = members[int(rng.integers(len(members)))]
        support = _resample_support(start, m0, rng)
    plans, objective = _member_plans(support, members)
    history = [objective]
    for _ in range(max_iter):
        projected = np.zeros_like(support)
        for plan, member in zip(plans, members):
            projected += m0 * (plan @ member.support)
        support = projected / len(members)
        plans, objective = _member_plans(support, members)
        history.append(objective)
        if history[-2] - history[-1] <= tol * max(abs(history[-2]), 1e-300):
            break
    return Barycenter(support=support, objective_history=history)


def d2_clustering(
    dset: DistributionSet,
    K: int,
    seed: int,
    m0: int | None = None,
    max_outer: int = 20,
    barycenter_iter: int = 15,
) -> ClusterAssignment:
    """K-means-style alternation between Wasserstein-nearest-barycenter
    assignment and per-cluster barycenter refits.

    Initial barycenters are K distinct seeded members (resampled to m0);
    emptied clusters are re-seeded from the distribution farthest from its
    current barycenter.  Stops when assignments repeat or max_outer is hit.
    The recorded objective is the summed squared distance, which the
    alternation drives monotonically down.
    """
    n = dset.N
    if not 1 <= K <= n:
        raise ValueError(f"K must be in [1, {n}], got {K}")
    if m0 is None:
        m0 = round_half_up(float(dset.support_counts().mean()))
    rng = np.random.default_rng(seed)
    chosen = rng.choice(n, size=K, replace=False)
    supports = [_resample_support(dset[int(i)], m0, rng) for i in chosen]

    members = list(dset)
    uniform = np.full(m0, 1.0 / m0)
    labels = np.full(n, -1, dtype=int)
    objective_history: list[float] = []
    warnings: list[str] = []

    for outer in range(max_outer):
        # squared distances to every barycenter
        d2 = np.empty((n, K))
        for k, support in enumerate(supports):
            for i, member in enumerate(members):
                _, cost = solve_transport(
                    cost_matrix(support, member.support), uniform, member.weights
                )
                d2[i, k] = cost
        new_labels = np.argmin(d2, axis=1)

        # re-seed emptied clusters from the worst-fit member whose own
        # cluster can spare it, repeating until every cluster is populated
        for _ in range(K):
            empty = [k for k in range(K) if not (new_labels == k).any()]
            if not empty:
                break
            counts = np.bincount(new_labels, minlength=K)
            movable = np.flatnonzero(counts[new_labels] > 1)
            if movable.size == 0:
                break
            k = empty[0]
            far = int(movable[np.argmax(d2[movable, new_labels[movable]])])
            new_labels[far] = k
            warnings.append(f"outer {outer}: cluster {k} re-seeded from member {far}")
            logger.info("d2: cluster %d re-seeded from member %d", k, far)

        objective_history.append(float(d2[np.arange(n), new_labels].sum()))
        if (new_labels == labels).all():
            break
        labels = new_labels
        for k in range(K):
            cluster_members = [members[i] for i in np.flatnonzero(labels == k)]
            # warm start at the incumbent support so the outer objective can
            # only go down
            refit = barycenter(
                cluster_members,
                m0=m0,
                seed=int(rng.integers(2**63)),
                max_iter=barycenter_iter,
                initial_support=supports[k],
            )
            supports[k] = refit.support

    inertia = objective_history[-1] if objective_history else float("nan")
    return ClusterAssignment(
        labels=labels,
        inertia=inertia,
        method="d2",
        params={
            "K": K,
            "m0": m0,
            "seed": seed,
            "max_outer": max_outer,
            "objective_history": objective_history,
        },
        all_clusters_present=len(np.unique(labels)) == K,
        warnings=warnings,
    )
