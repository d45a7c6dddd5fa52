"""Boltzmann action-sequence distributions and inverse-CDF sampling.

Probabilities are proportional to exp(-<lambda, c>) where c is a candidate's
cost vector. Costs are shifted by the finite minimum before exponentiation
so the softmax never overflows; candidates with any infinite cost receive
probability exactly zero.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Sequence

import numpy as np

from .errors import AllInfinite, DimensionMismatch


@dataclass(frozen=True)
class PolicyPMF:
    """Discrete distribution over candidates, aligned with their ordering."""

    probabilities: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "probabilities", np.asarray(self.probabilities, dtype=np.float64))

    def __len__(self) -> int:
        return len(self.probabilities)

    def __getitem__(self, i: int) -> float:
        return float(self.probabilities[i])


def build_joint_pmf(cost_matrix, rationality_vec) -> PolicyPMF:
    """Boltzmann PMF over rows of a cost matrix.

    Each row holds one candidate's cost terms; the rationality vector scales
    them term by term. Rows containing non-finite entries get probability 0.
    """
    try:
        costs = np.asarray(cost_matrix, dtype=np.float64)
    except ValueError as exc:
        raise DimensionMismatch(f"ragged cost matrix: {exc}") from exc
    if costs.ndim != 2:
        raise DimensionMismatch(f"cost matrix must be 2-D, got shape {costs.shape}")
    lam = np.asarray(rationality_vec, dtype=np.float64)
    if lam.ndim != 1 or lam.size != costs.shape[1]:
        raise DimensionMismatch(
            f"rationality vector of length {lam.size} does not match {costs.shape[1]} cost terms"
        )
    if not np.all(np.isfinite(lam)) or np.any(lam <= 0):
        raise ValueError("rationality entries must be positive and finite")

    finite = np.isfinite(costs).all(axis=1)
    if not finite.any():
        raise AllInfinite("every candidate has infinite cost")
    z = costs[finite] @ lam
    weights = np.zeros(costs.shape[0], dtype=np.float64)
    weights[finite] = np.exp(-(z - z.min()))
    return PolicyPMF(weights / weights.sum())


def build_pmf(costs: Sequence[float], rationality: float) -> PolicyPMF:
    """Boltzmann PMF over scalar candidate costs."""
    arr = np.asarray(costs, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionMismatch(f"costs must be 1-D, got shape {arr.shape}")
    return build_joint_pmf(arr.reshape(-1, 1), [rationality])


def sample(pmf: PolicyPMF, rng: np.random.Generator) -> int:
    """Draw one candidate index by inverse CDF.

    Consumes a single uniform draw; ties in the cumulative sums resolve to
    the lower index, so zero-probability candidates are never selected.
    """
    r = rng.random()
    cum = np.cumsum(pmf.probabilities)
    idx = int(np.searchsorted(cum, r, side="left"))
    return min(idx, len(cum) - 1)
