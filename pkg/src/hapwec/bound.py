"""Error-bound diagnostics for the weighted completion problem."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .weights import QualityGrid, WeightModel

DEFAULT_ALPHA = 0.5


@dataclass(frozen=True)
class BoundInputs:
    delta: float
    p: float
    N: int
    weight_inverse_sq_sum: float
    alpha: float = DEFAULT_ALPHA

    def __post_init__(self):
        if self.p <= 0:
            raise ValueError("sampling rate must be positive; bound undefined at p=0")
        if self.p > 1:
            raise ValueError("sampling rate cannot exceed 1")
        if not 0 < self.alpha < 1:
            raise ValueError("alpha must lie in (0, 1)")
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")

    @classmethod
    def from_model(cls, delta: float, weights: WeightModel, alpha: float = DEFAULT_ALPHA) -> "BoundInputs":
        mask = weights.mask
        return cls(
            delta=delta,
            p=float(mask.sum()) / mask.size,
            N=mask.shape[0],
            weight_inverse_sq_sum=weights.inverse_sq_sum,
            alpha=alpha,
        )


def theorem1_bound(inp: BoundInputs) -> float:
    """Upper bound on ``||M_hat - M||_F`` for the optimum of the weighted problem.

    ``2 delta sqrt((p+2)/p * N/(1-alpha)^2 + 1) * sqrt(sum 1/W^2)``, the sum
    taken over observed entries.
    """
    factor = (inp.p + 2.0) / inp.p * inp.N / (1.0 - inp.alpha) ** 2 + 1.0
    return 2.0 * inp.delta * math.sqrt(factor) * math.sqrt(inp.weight_inverse_sq_sum)


def truncation_factor(rank_of_estimate: int) -> float:
    if rank_of_estimate < 0:
        raise ValueError("rank must be nonnegative")
    return 1.0 + math.sqrt(rank_of_estimate + 1)


def expected_noise_sq(weights: WeightModel, qualities: QualityGrid) -> float:
    """``E ||W o P_Omega(Z)||_F^2`` when entry (i,j) flips with probability P_ij."""
    w = weights.weights[qualities.mask]
    return float(np.sum(4.0 * w**2 * qualities.observed_probs))


def default_delta(weights: WeightModel, qualities: QualityGrid, scale: float = 1.0) -> float:
    if scale <= 0:
        raise ValueError("delta scale must be positive")
    if not np.array_equal(weights.mask, qualities.mask):
        raise ValueError("weights and qualities must share the observation mask")
    return scale * math.sqrt(expected_noise_sq(weights, qualities))
