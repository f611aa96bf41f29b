"""Normalized-cut spectral clustering on affinity graphs.

Symmetric normalized Laplacian, its K smallest eigenpairs, row-normalized
spectral embedding, and a seeded k-means with k-means++ restarts.  The
cluster_pipeline function chains distance matrix -> affinity -> Laplacian ->
eigenvectors -> k-means and keeps every intermediate artifact for diagnostics.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field

import numpy as np

from .distributions import DistributionSet
from .graph import (
    DEFAULT_TAU,
    AffinityGraph,
    DistanceMatrix,
    build_distance_matrix,
    to_affinity,
)

logger = logging.getLogger(__name__)

EIG_RESIDUAL_TOL = 1e-8


class IsolatedNodeError(ValueError):
    def __init__(self, node: int):
        super().__init__(
            f"node {node} has zero degree; increase tau or the computed fraction"
        )
        self.node = node


class ConvergenceFailureError(RuntimeError):
    pass


@dataclass
class Laplacian:
    """Symmetric normalized Laplacian I - S^{-1/2} A S^{-1/2} with degrees."""

    matrix: np.ndarray
    degrees: np.ndarray

    @property
    def N(self) -> int:
        return self.matrix.shape[0]


@dataclass
class SpectralEmbedding:
    """K smallest eigenpairs of the Laplacian.

    basis holds the orthonormal eigenvectors (columns); rows holds the same
    matrix after row l2-normalization, which is what k-means consumes.
    """

    basis: np.ndarray
    rows: np.ndarray
    eigenvalues: np.ndarray
    eigen_gap: float
    zero_rows: int = 0


@dataclass
class ClusterAssignment:
    """Cluster labels with the provenance needed to reproduce them."""

    labels: np.ndarray
    inertia: float
    method: str
    params: dict = field(default_factory=dict)
    all_clusters_present: bool = True
    warnings: list[str] = field(default_factory=list)


@dataclass
class PipelineResult:
    """Cluster assignment plus every intermediate artifact of the run."""

    assignment: ClusterAssignment
    distance_matrix: DistanceMatrix
    affinity: AffinityGraph
    laplacian: Laplacian
    embedding: SpectralEmbedding
    diagnostics: dict
    timings: dict


def laplacian(graph: AffinityGraph | np.ndarray) -> Laplacian:
    """Build the symmetric normalized Laplacian; zero-degree nodes are errors."""
    adjacency = graph.adjacency if isinstance(graph, AffinityGraph) else np.asarray(graph, float)
    degrees = adjacency.sum(axis=0)
    if (degrees <= 0).any():
        raise IsolatedNodeError(int(np.flatnonzero(degrees <= 0)[0]))
    inv_sqrt = 1.0 / np.sqrt(degrees)
    L = np.eye(len(degrees)) - adjacency * inv_sqrt[:, None] * inv_sqrt[None, :]
    L = (L + L.T) / 2.0
    return Laplacian(matrix=L, degrees=degrees)


def eig_smallest(lap: Laplacian, K: int) -> SpectralEmbedding:
    """Deterministic full symmetric eigendecomposition, keeping the K smallest.

    Eigenvector signs are fixed by making the largest-magnitude component
    positive; each pair's residual ||Lv - lambda v|| must clear 1e-8.
    """
    n = lap.N
    if not 1 <= K < n:
        raise ValueError(f"K must be in [1, {n - 1}], got {K}")
    eigenvalues, vectors = np.linalg.eigh(lap.matrix)
    basis = vectors[:, :K].copy()
    for k in range(K):
        pivot = int(np.argmax(np.abs(basis[:, k])))
        if basis[pivot, k] < 0:
            basis[:, k] = -basis[:, k]
        residual = float(np.linalg.norm(lap.matrix @ basis[:, k] - eigenvalues[k] * basis[:, k]))
        if residual > EIG_RESIDUAL_TOL:
            raise ConvergenceFailureError(
                f"eigenpair {k} residual {residual:.2e} exceeds {EIG_RESIDUAL_TOL}"
            )
    norms = np.linalg.norm(basis, axis=1)
    zero_rows = int((norms <= 1e-300).sum())
    if zero_rows:
        logger.warning("%d zero rows in the spectral embedding left unnormalized", zero_rows)
    safe = np.where(norms > 1e-300, norms, 1.0)
    rows = basis / safe[:, None]
    gap = float(abs(eigenvalues[K] - eigenvalues[K - 1]))
    return SpectralEmbedding(
        basis=basis,
        rows=rows,
        eigenvalues=eigenvalues[:K].copy(),
        eigen_gap=gap,
        zero_rows=zero_rows,
    )


def _kmeans_pp_init(points: np.ndarray, K: int, rng: np.random.Generator) -> np.ndarray:
    n = points.shape[0]
    centers = np.empty((K, points.shape[1]))
    first = int(rng.integers(n))
    centers[0] = points[first]
    closest = ((points - centers[0]) ** 2).sum(axis=1)
    for k in range(1, K):
        total = closest.sum()
        if total <= 0:
            idx = int(rng.integers(n))
        else:
            idx = int(rng.choice(n, p=closest / total))
        centers[k] = points[idx]
        dist = ((points - centers[k]) ** 2).sum(axis=1)
        closest = np.minimum(closest, dist)
    return centers


def _lloyd(points, centers, max_iter=300, rtol=1e-7):
    n, _ = points.shape
    K = centers.shape[0]
    prev_inertia = np.inf
    labels = np.zeros(n, dtype=int)
    for _ in range(max_iter):
        d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
        labels = np.argmin(d2, axis=1)
        inertia = float(d2[np.arange(n), labels].sum())
        for k in range(K):
            members = labels == k
            if members.any():
                centers[k] = points[members].mean(axis=0)
            else:
                # re-seed an emptied cluster from the point farthest from its center
                far = int(np.argmax(d2[np.arange(n), labels]))
                centers[k] = points[far]
                logger.info("re-seeded empty cluster %d from point %d", k, far)
        if prev_inertia - inertia <= rtol * max(prev_inertia, 1e-300):
            break
        prev_inertia = inertia
    d2 = ((points[:, None, :] - centers[None, :, :]) ** 2).sum(axis=2)
    labels = np.argmin(d2, axis=1)
    inertia = float(d2[np.arange(n), labels].sum())
    return labels, inertia


def kmeans(points: np.ndarray, K: int, seed: int, restarts: int = 10) -> ClusterAssignment:
    """Seeded k-means++ with restarts; returns the lowest-inertia run.

    Deterministic given seed: each restart draws from its own child stream and
    ties between runs resolve by restart index.
    """
    points = np.asarray(points, dtype=float)
    n = points.shape[0]
    if not 1 <= K <= n:
        raise ValueError(f"K must be in [1, {n}], got {K}")
    seeds = np.random.SeedSequence(seed).spawn(restarts)
    best_labels = None
    best_inertia = np.inf
    for child in seeds:
        rng = np.random.default_rng(child)
        centers = _kmeans_pp_init(points, K, rng)
        labels, inertia = _lloyd(points, centers)
        if inertia < best_inertia:
            best_inertia = inertia
            best_labels = labels
    present = np.unique(best_labels)
    complete = len(present) == K
    warnings = [] if complete else [f"only {len(present)} of {K} clusters are non-empty"]
    return ClusterAssignment(
        labels=best_labels,
        inertia=best_inertia,
        method="kmeans",
        params={"K": K, "seed": seed, "restarts": restarts},
        all_clusters_present=complete,
        warnings=warnings,
    )


def cluster_pipeline(
    dset: DistributionSet,
    metric: str,
    K: int,
    params: dict | None = None,
    tau: int = DEFAULT_TAU,
    gamma: float | str = "auto",
    seed: int = 0,
    fraction: float = 1.0,
) -> PipelineResult:
    """Full chain: distances -> affinity -> Laplacian -> eigenvectors -> k-means.

    Records per-stage wall times and the diagnostics (alpha, delta, n, tau,
    gamma) that the error-bound calculators consume.
    """
    ss = np.random.SeedSequence(seed)
    dist_seed, kmeans_seed = (int(s.generate_state(1)[0]) for s in ss.spawn(2))
    timings = {}

    t0 = time.perf_counter()
    D = build_distance_matrix(dset, metric, params=params, fraction=fraction, seed=dist_seed)
    timings["distmat"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    graph = to_affinity(D, gamma=gamma, tau=tau)
    timings["affinity"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    lap = laplacian(graph)
    embedding = eig_smallest(lap, K)
    timings["eig"] = time.perf_counter() - t0

    t0 = time.perf_counter()
    assignment = kmeans(embedding.rows, K, seed=kmeans_seed)
    timings["kmeans"] = time.perf_counter() - t0

    assignment = ClusterAssignment(
        labels=assignment.labels,
        inertia=assignment.inertia,
        method=f"ddsc-{metric}",
        params={
            "metric": metric,
            "metric_params": D.params,
            "K": K,
            "tau": tau,
            "gamma": graph.gamma,
            "seed": seed,
            "fraction": fraction,
        },
        all_clusters_present=assignment.all_clusters_present,
        warnings=list(D.warnings) + assignment.warnings,
    )
    diagnostics = {
        "alpha": graph.smallest_nonzero(),
        "delta": embedding.eigen_gap,
        "n": dset.N,
        "tau": tau,
        "gamma": graph.gamma,
    }
    return PipelineResult(
        assignment=assignment,
        distance_matrix=D,
        affinity=graph,
        laplacian=lap,
        embedding=embedding,
        diagnostics=diagnostics,
        timings=timings,
    )
