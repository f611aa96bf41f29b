"""Clustering of discrete distributions via divergence graphs and normalized cuts."""

__version__ = "0.1.0"

from .distributions import (
    DiscreteDistribution,
    DistributionSet,
    SyntheticConfig,
    add_gaussian_noise,
    generate_synthetic,
    load_idx_images,
    load_jsonl,
    save_jsonl,
    validate,
)
from .divergences import KernelSpec, TransportPlan, mmd2, resolve_bandwidth, sinkhorn, wasserstein2_exact
from .graph import AffinityGraph, DistanceMatrix, build_distance_matrix, check_connectivity, to_affinity
from .lot import LotEmbedding, ReferenceDistribution, embed, lot_distance_matrix, make_reference
from .spectral import ClusterAssignment, PipelineResult, cluster_pipeline, eig_smallest, kmeans, laplacian
from .baselines import Barycenter, barycenter, d2_clustering, kmeans_on_means, mean_vector, sc_on_means
from .evaluation import ami, ari, timed
from .bounds import (
    BoundInputs,
    SpectralDiagnostics,
    consistency_bound,
    correctness_condition,
    davis_kahan_check,
    empirical_consistency_experiment,
    sin_theta_distance,
    sinkhorn_error_bound,
    zeta,
)
