"""Computable error-bound quantities and empirical spectral-stability checks.

The closed-form calculators evaluate the sampling-error, similarity and
consistency bounds for the Sinkhorn-based pipeline; the theoretical constants
they need (a dual Lipschitz constant, a potential-norm bound, and the kernel
sup) are user inputs with default 1.0 since no data-driven estimate exists.
The empirical side measures sin-theta subspace distances, verifies the
Davis-Kahan inequality on perturbed matrices, and reruns the pipeline on
subsampled supports to trace how the spectral embedding stabilizes with the
support size.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .distributions import DistributionSet, subsample_support
from .evaluation import ami as ami_score


class InvalidThetaError(ValueError):
    pass


class VacuousBoundError(ValueError):
    pass


class ZeroGapError(ValueError):
    pass


class NotOrthonormalError(ValueError):
    pass


@dataclass(frozen=True)
class BoundInputs:
    """Inputs for the closed-form bound evaluators.

    support_count is the per-distribution sample size m; cost_scale bounds the
    cost function's magnitude over the domain; dual_lipschitz, potential_norm
    and kernel_sup are the theoretical constants (defaults 1.0).
    """

    support_count: int
    epsilon: float
    failure_prob: float
    kernel_gamma: float = 1.0
    tau: int = 6
    n_distributions: int = 2
    cost_scale: float = 1.0
    dual_lipschitz: float = 1.0
    potential_norm: float = 1.0
    kernel_sup: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.failure_prob < 1.0:
            raise InvalidThetaError(
                f"failure probability must lie in (0, 1), got {self.failure_prob}"
            )
        for name in ("support_count", "epsilon", "tau", "n_distributions"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")
        if self.kernel_gamma < 0:
            raise ValueError("kernel_gamma must be nonnegative")

    @property
    def rho(self) -> float:
        """Bias term 6 * B * eta * psi / sqrt(m)."""
        return 6.0 * self.dual_lipschitz * self.potential_norm * self.kernel_sup \
            / math.sqrt(self.support_count)

    @property
    def deviation_scale(self) -> float:
        """Concentration scale sqrt(2/m) * (kappa + eps * exp(kappa/eps))."""
        kappa = self.cost_scale
        return math.sqrt(2.0 / self.support_count) * (
            kappa + self.epsilon * math.exp(kappa / self.epsilon)
        )


@dataclass
class SpectralDiagnostics:
    """Observed graph quantities: the smallest nonzero affinity and eigen-gap."""

    alpha: float
    delta: float


def sinkhorn_error_bound(inputs: BoundInputs) -> float:
    """High-probability deviation of a sampled entry of the divergence matrix:
    rho + E * sqrt(log(1/theta))."""
    return inputs.rho + inputs.deviation_scale * math.sqrt(
        math.log(1.0 / inputs.failure_prob)
    )


def zeta(inputs: BoundInputs) -> float:
    """Similarity-matrix deviation sqrt(gamma)*rho + E*sqrt(gamma*log(2 tau^2 N / theta))."""
    g = inputs.kernel_gamma
    log_term = math.log(
        2.0 * inputs.tau**2 * inputs.n_distributions / inputs.failure_prob
    )
    return math.sqrt(g) * inputs.rho + inputs.deviation_scale * math.sqrt(g * log_term)


def consistency_bound(diag: SpectralDiagnostics, inputs: BoundInputs) -> float:
    """Subspace-consistency bound 2 zeta sqrt(N) / (delta (alpha - zeta)^2 sqrt(tau))."""
    z = zeta(inputs)
    if diag.delta == 0:
        raise ZeroGapError("eigen-gap is zero; the bound is undefined")
    if diag.alpha <= z:
        raise VacuousBoundError(
            f"alpha={diag.alpha:.3e} <= zeta={z:.3e}: the bound is vacuous"
        )
    return (
        2.0 * z * math.sqrt(inputs.n_distributions)
        / (diag.delta * (diag.alpha - z) ** 2 * math.sqrt(inputs.tau))
    )


@dataclass
class CorrectnessReport:
    lhs: float
    threshold: float
    satisfied: bool
    margin_xi: float


def correctness_condition(diag: SpectralDiagnostics, inputs: BoundInputs,
                          xi: float) -> CorrectnessReport:
    """Checks sqrt(gamma)*rho + E*sqrt(gamma*log(N tau^2/theta)) <= xi/2.

    xi is the class margin of the affinity graph (see graph.check_connectivity,
    echoed back for comparison in the report).
    """
    if xi < 0:
        raise ValueError("xi must be nonnegative")
    g = inputs.kernel_gamma
    log_term = math.log(
        inputs.n_distributions * inputs.tau**2 / inputs.failure_prob
    )
    lhs = math.sqrt(g) * inputs.rho + inputs.deviation_scale * math.sqrt(g * log_term)
    return CorrectnessReport(
        lhs=lhs, threshold=0.5 * xi, satisfied=lhs <= 0.5 * xi, margin_xi=xi
    )


def sin_theta_distance(V1: np.ndarray, V2: np.ndarray, tol: float = 1e-8) -> float:
    """Frobenius norm of the sines of the principal angles between two
    column-orthonormal bases of equal dimension."""
    V1 = np.asarray(V1, dtype=float)
    V2 = np.asarray(V2, dtype=float)
    if V1.shape != V2.shape:
        raise ValueError(f"bases must share a shape, got {V1.shape} vs {V2.shape}")
    k = V1.shape[1]
    for name, V in (("first", V1), ("second", V2)):
        gram_err = np.linalg.norm(V.T @ V - np.eye(k))
        if gram_err > tol:
            raise NotOrthonormalError(
                f"{name} basis deviates from orthonormality by {gram_err:.2e}"
            )
    cosines = np.linalg.svd(V1.T @ V2, compute_uv=False)
    cosines = np.clip(cosines, 0.0, 1.0)
    sines_sq = 1.0 - cosines**2
    # float drift in an svd of an orthonormal product shows up as sin^2 of
    # order 1e-15; snap it so identical subspaces measure exactly zero
    sines_sq[sines_sq < 1e-13] = 0.0
    return float(np.sqrt(sines_sq.sum()))


@dataclass
class DavisKahanReport:
    distance: float
    bound: float
    holds: bool
    gap: float
    gap_ok: bool
    k_original: int
    k_perturbed: int


def davis_kahan_check(Z: np.ndarray, H: np.ndarray,
                      interval: tuple[float, float]) -> DavisKahanReport:
    """Empirically verify the eigenspace perturbation inequality.

    interval selects the eigenvalues of Z (and of Z + H) whose eigenspaces are
    compared; the gap is the distance from the interval to the rest of Z's
    spectrum.  A failed precondition (no gap, or differing eigenvalue counts
    inside the interval) is reported with gap_ok=False instead of asserted.
    """
    Z = np.asarray(Z, dtype=float)
    H = np.asarray(H, dtype=float)
    lo, hi = interval
    w, V = np.linalg.eigh(Z)
    inside = (w >= lo) & (w <= hi)
    outside = ~inside
    if inside.sum() == 0:
        raise ValueError("interval contains no eigenvalues of Z")
    if outside.any():
        gap = float(np.min(np.maximum.reduce([
            lo - w[outside], w[outside] - hi, np.zeros(outside.sum())
        ])))
    else:
        gap = math.inf
    w_hat, V_hat = np.linalg.eigh(Z + H)
    inside_hat = (w_hat >= lo) & (w_hat <= hi)
    gap_ok = gap > 0 and inside_hat.sum() == inside.sum()
    if not gap_ok:
        return DavisKahanReport(
            distance=math.nan, bound=math.nan, holds=False, gap=gap,
            gap_ok=False, k_original=int(inside.sum()), k_perturbed=int(inside_hat.sum()),
        )
    d = sin_theta_distance(V[:, inside], V_hat[:, inside_hat])
    bound = float(np.linalg.norm(H) / gap)
    return DavisKahanReport(
        distance=d, bound=bound, holds=bool(d <= bound + 1e-12), gap=gap,
        gap_ok=True, k_original=int(inside.sum()), k_perturbed=int(inside_hat.sum()),
    )


@dataclass
class ConsistencyRow:
    m_prime: int
    sin_theta: float
    ami: float


def empirical_consistency_experiment(
    dset: DistributionSet,
    metric: str,
    K: int,
    m_grid: list[int],
    seed: int,
    params: dict | None = None,
    tau: int = 6,
    gamma: float | str = "auto",
) -> list[ConsistencyRow]:
    """Rerun the pipeline on support-subsampled copies of the set and record
    the sin-theta distance between each subsampled spectral basis and the
    full-data basis, plus the clustering AMI against ground truth."""
    from .spectral import cluster_pipeline

    counts = dset.support_counts()
    if max(m_grid) > counts.min():
        raise ValueError(
            f"m_grid goes up to {max(m_grid)} but the smallest support is {counts.min()}"
        )
    labels = dset.labels()
    full = cluster_pipeline(dset, metric, K=K, params=params, tau=tau, gamma=gamma, seed=seed)
    rows = []
    rng = np.random.default_rng(seed)
    for m_prime in m_grid:
        sub_seed = int(rng.integers(2**63))
        subset = subsample_support(dset, m_prime, seed=sub_seed)
        result = cluster_pipeline(
            subset, metric, K=K, params=params, tau=tau, gamma=gamma, seed=seed
        )
        d = sin_theta_distance(full.embedding.basis, result.embedding.basis)
        score = math.nan
        if labels is not None:
            score = ami_score(labels, result.assignment.labels)
        rows.append(ConsistencyRow(m_prime=m_prime, sin_theta=d, ami=score))
    return rows


def consistency_rows_to_csv(rows: list[ConsistencyRow]) -> str:
    lines = ["m_prime,sin_theta,ami"]
    for row in rows:
        lines.append(f"{row.m_prime},{row.sin_theta!r},{row.ami!r}")
    return "\n".join(lines) + "\n"
