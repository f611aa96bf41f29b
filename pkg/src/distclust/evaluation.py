"""Clustering quality metrics and wall-time bookkeeping.

Adjusted mutual information uses the permutation-model (hypergeometric)
expected MI and normalizes by the arithmetic mean of the two entropies;
adjusted Rand index uses the usual pair-counting correction.  Both are
symmetric, invariant to relabeling, and equal 1 exactly when the partitions
coincide up to relabeling.
"""

from __future__ import annotations

import time

import numpy as np
from scipy.special import gammaln


class LengthMismatchError(ValueError):
    pass


def contingency_table(labels_a, labels_b) -> np.ndarray:
    """Counts matrix between two labelings over the same items."""
    labels_a = np.asarray(labels_a)
    labels_b = np.asarray(labels_b)
    if labels_a.shape != labels_b.shape or labels_a.ndim != 1 or labels_a.size == 0:
        raise LengthMismatchError(
            f"labelings must be equal-length non-empty vectors, got "
            f"{labels_a.shape} and {labels_b.shape}"
        )
    _, ca = np.unique(labels_a, return_inverse=True)
    _, cb = np.unique(labels_b, return_inverse=True)
    table = np.zeros((ca.max() + 1, cb.max() + 1), dtype=np.int64)
    np.add.at(table, (ca, cb), 1)
    return table


def _entropy(counts: np.ndarray) -> float:
    n = counts.sum()
    p = counts[counts > 0] / n
    return float(-(p * np.log(p)).sum())


def _mutual_information(table: np.ndarray) -> float:
    n = table.sum()
    pij = table / n
    pa = pij.sum(axis=1)
    pb = pij.sum(axis=0)
    outer = pa[:, None] * pb[None, :]
    mask = pij > 0
    return float((pij[mask] * np.log(pij[mask] / outer[mask])).sum())


def expected_mutual_information(table: np.ndarray) -> float:
    """E[MI] over random tables with the observed margins (hypergeometric)."""
    n = int(table.sum())
    a = table.sum(axis=1).astype(int)
    b = table.sum(axis=0).astype(int)
    log_fact = gammaln(np.arange(n + 2) + 1.0)  # log(k!) lookup
    emi = 0.0
    for ai in a:
        for bj in b:
            lo = max(1, ai + bj - n)
            hi = min(ai, bj)
            if hi < lo:
                continue
            nij = np.arange(lo, hi + 1)
            term_mi = (nij / n) * np.log(n * nij / (ai * bj))
            log_prob = (
                log_fact[ai] + log_fact[bj] + log_fact[n - ai] + log_fact[n - bj]
                - log_fact[n] - log_fact[nij] - log_fact[ai - nij]
                - log_fact[bj - nij] - log_fact[n - ai - bj + nij]
            )
            emi += float((term_mi * np.exp(log_prob)).sum())
    return emi


def ami(labels_a, labels_b) -> float:
    """Adjusted mutual information, normalized by the mean of the entropies."""
    table = contingency_table(labels_a, labels_b)
    h_a = _entropy(table.sum(axis=1))
    h_b = _entropy(table.sum(axis=0))
    mi = _mutual_information(table)
    # identical-up-to-relabeling includes the degenerate single-cluster pair
    denom_max = max(h_a, h_b)
    if denom_max == 0.0:
        return 1.0
    emi = expected_mutual_information(table)
    denom = 0.5 * (h_a + h_b) - emi
    if abs(denom) < 1e-15:
        return 1.0 if abs(mi - emi) < 1e-15 else 0.0
    return float((mi - emi) / denom)


def ari(labels_a, labels_b) -> float:
    """Adjusted Rand index via pair counting."""
    table = contingency_table(labels_a, labels_b)
    n = table.sum()

    def comb2(x):
        return x * (x - 1) / 2.0

    sum_ij = comb2(table.astype(float)).sum()
    sum_a = comb2(table.sum(axis=1).astype(float)).sum()
    sum_b = comb2(table.sum(axis=0).astype(float)).sum()
    total = comb2(float(n))
    expected = sum_a * sum_b / total
    max_index = 0.5 * (sum_a + sum_b)
    if abs(max_index - expected) < 1e-15:
        return 1.0
    return float((sum_ij - expected) / (max_index - expected))


def timed(op, *args, **kwargs):
    """Run op(*args, **kwargs) and return (result, wall_seconds)."""
    t0 = time.perf_counter()
    result = op(*args, **kwargs)
    return result, time.perf_counter() - t0


class StageTimer:
    """Accumulates named wall-time measurements for run reports."""

    def __init__(self):
        self.records: dict[str, float] = {}

    def run(self, name: str, op, *args, **kwargs):
        result, seconds = timed(op, *args, **kwargs)
        self.records[name] = self.records.get(name, 0.0) + seconds
        return result
