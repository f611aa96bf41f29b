"""Distance matrices over distribution sets and their sparse affinity graphs.

Pipeline stage between divergences and spectral clustering: assemble the
(optionally partial) symmetric N x N distance matrix, map it through a
Gaussian kernel, keep the top-tau entries of each column, symmetrize by
averaging, and check the nearest-neighbor class structure.
"""

from __future__ import annotations

import hashlib
import json
import logging
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .distributions import DistributionSet
from .divergences import (
    KernelSpec,
    MEDIAN_HEURISTIC,
    NotConvergedError,
    mmd2,
    resolve_bandwidth,
    sinkhorn,
    wasserstein2_exact,
)

logger = logging.getLogger(__name__)

METRICS = ("mmd", "wasserstein", "sinkhorn", "lot", "euclidean-mean")

DEFAULT_TAU = 6


class TauOutOfRangeError(ValueError):
    pass


class AllEntriesUncomputedError(ValueError):
    pass


class LabelLengthMismatchError(ValueError):
    pass


def params_hash(params: dict | None) -> str:
    payload = json.dumps(params or {}, sort_keys=True, default=str)
    return hashlib.sha256(payload.encode("utf-8")).hexdigest()[:16]


@dataclass
class DistanceMatrix:
    """Symmetric divergence matrix with a computed-entry mask.

    Values follow each metric's convention: Wasserstein and LOT store
    distances, sinkhorn stores the regularized objective, and mmd stores the
    (possibly negative) unbiased squared estimate.
    """

    values: np.ndarray
    mask: np.ndarray
    metric: str
    params: dict | None = None
    stored_params_hash: str | None = None
    warnings: list[str] = field(default_factory=list)

    @property
    def N(self) -> int:
        return self.values.shape[0]

    @property
    def params_digest(self) -> str:
        if self.stored_params_hash is not None:
            return self.stored_params_hash
        return params_hash(self.params)

    def computed_offdiagonal(self) -> np.ndarray:
        """Computed off-diagonal entries (upper triangle, one per pair)."""
        iu = np.triu_indices(self.N, k=1)
        keep = self.mask[iu]
        return self.values[iu][keep]


@dataclass
class AffinityGraph:
    """Sparsified symmetric affinity matrix plus its construction record.

    adjacency is the final symmetrized matrix; kernel is the dense Gaussian
    affinity before sparsification (masked entries zero); selected marks the
    per-column top-tau entries that survived.
    """

    adjacency: np.ndarray
    tau: int
    gamma: float
    kernel: np.ndarray
    selected: np.ndarray

    @property
    def N(self) -> int:
        return self.adjacency.shape[0]

    def smallest_nonzero(self) -> float:
        nz = self.adjacency[self.adjacency > 0]
        if nz.size == 0:
            raise AllEntriesUncomputedError("affinity graph has no edges")
        return float(nz.min())


@dataclass
class ConnectivityReport:
    """Component structure of the affinity graph against ground-truth labels."""

    n_components: int
    no_inter_class_edges: bool
    margin: float


def pair_indices(n: int) -> list[tuple[int, int]]:
    return [(i, j) for i in range(n) for j in range(i + 1, n)]


def select_pairs(n: int, fraction: float, seed: int | None) -> list[tuple[int, int]]:
    """The unordered pairs to compute: all of them, or a seeded uniform sample
    of ceil(fraction * n(n-1)/2) when fraction < 1."""
    pairs = pair_indices(n)
    if fraction >= 1.0:
        return pairs
    if seed is None:
        raise ValueError("a seed is required when fraction < 1")
    count = int(np.ceil(fraction * len(pairs)))
    rng = np.random.default_rng(seed)
    chosen = rng.choice(len(pairs), size=count, replace=False)
    return [pairs[k] for k in np.sort(chosen)]


def build_distance_matrix(
    dset: DistributionSet,
    metric: str,
    params: dict | None = None,
    fraction: float = 1.0,
    seed: int | None = None,
) -> DistanceMatrix:
    """Compute pairwise divergences for a seeded sample of entry pairs.

    Each unordered pair is computed once and mirrored; uncomputed entries are
    flagged in the mask.  Deterministic given seed.  Sinkhorn non-convergence
    is accepted (partial value) and recorded as a warning rather than raised.
    """
    if not 0.0 < fraction <= 1.0:
        raise ValueError(f"fraction must be in (0, 1], got {fraction}")
    if metric not in METRICS:
        raise ValueError(f"unknown metric {metric!r}; expected one of {METRICS}")
    params = dict(params or {})
    n = dset.N
    values = np.zeros((n, n))
    mask = np.eye(n, dtype=bool)
    warnings: list[str] = []
    pairs = select_pairs(n, fraction, seed)

    if metric == "lot":
        from .lot import embed, embedding_distance, make_reference

        ref_seed = params.get("reference_seed")
        if ref_seed is None:
            ref_seed = seed
        if ref_seed is None:
            raise ValueError("lot metric needs a seed for the reference")
        ref = make_reference(dset, int(ref_seed))
        emb = embed(dset, ref)
        params.setdefault("m0", ref.m0)
        params["reference_seed"] = int(ref_seed)
        for i, j in pairs:
            values[i, j] = values[j, i] = embedding_distance(emb, i, j)
            mask[i, j] = mask[j, i] = True
        return DistanceMatrix(values, mask, metric, params, warnings=warnings)

    if metric == "mmd":
        sigma = params.get("sigma", MEDIAN_HEURISTIC)
        if isinstance(sigma, str):
            if sigma != MEDIAN_HEURISTIC:
                raise ValueError(f"unknown bandwidth rule {sigma!r}")
            if seed is None:
                raise ValueError("median-heuristic bandwidth needs a seed")
            sigma = resolve_bandwidth(dset, seed=seed)
        params["sigma"] = float(sigma)
        kernel = KernelSpec(bandwidth=float(sigma))

        def entry(di, dj):
            return mmd2(di.support, di.weights, dj.support, dj.weights, kernel)

    elif metric == "wasserstein":

        def entry(di, dj):
            dist, _ = wasserstein2_exact(di.support, di.weights, dj.support, dj.weights)
            return dist

    elif metric == "sinkhorn":
        if "epsilon" not in params:
            raise ValueError("sinkhorn metric needs an 'epsilon' parameter")
        epsilon = float(params["epsilon"])
        tol = float(params.get("tol", 1e-9))
        max_iter = int(params.get("max_iter", 10_000))

        def entry(di, dj):
            try:
                value, _ = sinkhorn(
                    di.support, di.weights, dj.support, dj.weights,
                    epsilon=epsilon, tol=tol, max_iter=max_iter,
                )
            except NotConvergedError as exc:
                warnings.append(f"({di.id},{dj.id}): {exc}")
                value = exc.result[0]
            return value

    else:  # euclidean-mean: plain distance between the weighted means
        means = np.array([d.mean for d in dset])
        for i, j in pairs:
            values[i, j] = values[j, i] = float(np.linalg.norm(means[i] - means[j]))
            mask[i, j] = mask[j, i] = True
        return DistanceMatrix(values, mask, metric, params, warnings=warnings)

    for i, j in pairs:
        try:
            values[i, j] = values[j, i] = entry(dset[i], dset[j])
        except Exception as exc:
            raise type(exc)(f"pair ({i},{j}): {exc}") from exc
        mask[i, j] = mask[j, i] = True
    return DistanceMatrix(values, mask, metric, params, warnings=warnings)


def resolve_gamma(D: DistanceMatrix) -> float:
    """Median-heuristic kernel width: 1 / (2 * median(|computed distances|)^2)."""
    vals = D.computed_offdiagonal()
    if vals.size == 0:
        raise AllEntriesUncomputedError("no computed off-diagonal entries")
    med = float(np.median(np.abs(vals)))
    if med <= 0:
        return 1.0
    return 1.0 / (2.0 * med * med)


def to_affinity(D: DistanceMatrix, gamma: float | str = "auto", tau: int = DEFAULT_TAU) -> AffinityGraph:
    """Gaussian affinity exp(-gamma * D * |D|) with per-column top-tau selection.

    For the nonnegative metrics this is exactly exp(-gamma * D^2).  Unbiased
    squared-MMD entries can be legitimately negative (more alike than a
    distribution is to itself under the diagonal-excluded estimator); the
    signed square keeps the kernel strictly decreasing there instead of
    flattening every negative pair into an exp(0) tie, so the neighbor
    ordering survives.  Uncomputed entries and the diagonal stay zero and
    never enter the top-tau choice; ties at the tau-th value keep the lower
    index; the kept pattern is symmetrized by averaging.
    """
    n = D.N
    if not 1 <= tau <= n - 1:
        raise TauOutOfRangeError(f"tau must be in [1, {n - 1}], got {tau}")
    values = D.values
    if D.metric == "mmd":
        negatives = int(((values < 0) & D.mask).sum() // 2)
        if negatives:
            logger.info("%d negative mmd^2 entries kept via the signed square", negatives)
    if gamma == "auto":
        gamma = resolve_gamma(D)
    gamma = float(gamma)
    if gamma <= 0:
        raise ValueError(f"gamma must be positive, got {gamma}")

    computed = D.mask.copy()
    np.fill_diagonal(computed, False)
    if not computed.any():
        raise AllEntriesUncomputedError("no computed off-diagonal entries")
    kernel = np.where(computed, np.exp(-gamma * values * np.abs(values)), 0.0)

    selected = np.zeros((n, n), dtype=bool)
    for j in range(n):
        col_computed = np.flatnonzero(computed[:, j])
        if col_computed.size == 0:
            continue
        col_vals = kernel[col_computed, j]
        keep = min(tau, col_computed.size)
        # sort by (-value, index): stable top-tau with lower-index tie-breaking
        order = np.lexsort((col_computed, -col_vals))
        selected[col_computed[order[:keep]], j] = True

    sparse = np.where(selected, kernel, 0.0)
    adjacency = (sparse + sparse.T) / 2.0
    return AffinityGraph(
        adjacency=adjacency, tau=tau, gamma=gamma, kernel=kernel, selected=selected
    )


def check_connectivity(graph: AffinityGraph, labels: np.ndarray) -> ConnectivityReport:
    """Component count, inter-class edge check, and the class-margin of the
    selected neighborhoods.

    The margin is min over nodes of (weakest selected same-class affinity)
    minus (strongest different-class affinity in that node's column, selected
    or not); -inf when any node's selection already contains a different-class
    neighbor or has no same-class neighbor at all.
    """
    labels = np.asarray(labels)
    n = graph.N
    if labels.shape != (n,):
        raise LabelLengthMismatchError(f"expected {n} labels, got {labels.shape}")
    adj = graph.adjacency
    n_components, _ = connected_components(csr_matrix(adj > 0), directed=False)

    same = labels[:, None] == labels[None, :]
    edges = adj > 0
    no_inter = not bool((edges & ~same).any())

    margin = np.inf
    for j in range(n):
        sel = graph.selected[:, j]
        intra_sel = sel & same[:, j]
        intra_sel[j] = False
        inter = ~same[:, j]
        if (sel & inter).any() or not intra_sel.any():
            margin = -np.inf
            break
        weakest_intra = graph.kernel[intra_sel, j].min()
        inter_vals = graph.kernel[inter, j]
        strongest_inter = inter_vals.max() if inter_vals.size else 0.0
        margin = min(margin, float(weakest_intra - strongest_inter))
    if margin < 0:
        margin = -np.inf
    return ConnectivityReport(
        n_components=int(n_components),
        no_inter_class_edges=no_inter,
        margin=float(margin),
    )


# --------------------------------------------------------------------------
# Distance matrix cache file: header `N,metric,params_hash`, dense CSV of
# values, then dense CSV of the 0/1 mask.
# --------------------------------------------------------------------------

def save_distance_matrix(D: DistanceMatrix, path: str | Path) -> None:
    lines = [f"{D.N},{D.metric},{D.params_digest}"]
    for row in D.values:
        lines.append(",".join(repr(float(x)) for x in row))
    for row in D.mask.astype(int):
        lines.append(",".join(str(x) for x in row))
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def load_distance_matrix(path: str | Path) -> DistanceMatrix:
    text = Path(path).read_text(encoding="utf-8").strip().split("\n")
    header = text[0].split(",")
    if len(header) != 3:
        raise ValueError(f"malformed distance cache header {text[0]!r}")
    n = int(header[0])
    metric = header[1]
    digest = header[2]
    if len(text) != 1 + 2 * n:
        raise ValueError(f"expected {1 + 2 * n} lines, found {len(text)}")
    values = np.array(
        [[float(x) for x in line.split(",")] for line in text[1:1 + n]]
    )
    mask = np.array(
        [[int(x) for x in line.split(",")] for line in text[1 + n:1 + 2 * n]]
    ).astype(bool)
    return DistanceMatrix(
        values=values, mask=mask, metric=metric, params=None, stored_params_hash=digest
    )
