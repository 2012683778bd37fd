"""Phred scores, the log-affine weight model and its grid-search fit.

Weights follow ``W = a * log2(1/P) + b`` on the observed entries, with ``b``
pinned so that the best-quality entry gets weight exactly 1.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

log = logging.getLogger(__name__)

OBJECTIVES = ("literal-eq13", "delta-aware")
DEFAULT_GRID_POINTS = 1000
MAX_NORM_TOL = 1e-9


class WeightError(ValueError):
    pass


def phred_to_prob(Q):
    """Error probability ``10**(-Q/10)`` of a Phred score (scalar or array)."""
    q = np.asarray(Q, dtype=float)
    if not np.all(np.isfinite(q)):
        raise ValueError("Phred scores must be finite")
    if np.any(q < 0):
        raise ValueError("Phred scores must be nonnegative")
    p = np.power(10.0, -q / 10.0)
    return float(p) if p.ndim == 0 else p


@dataclass(frozen=True)
class QualityGrid:
    """Phred scores on the observed entries of an N x l read matrix.

    Scores and probabilities are stored densely; entries off the mask are 0
    and carry no meaning.
    """

    scores: np.ndarray
    mask: np.ndarray
    probs: np.ndarray = field(init=False, repr=False)

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=float)
        mask = np.asarray(self.mask, dtype=bool)
        if scores.shape != mask.shape:
            raise ValueError("scores and mask must share a shape")
        scores = np.where(mask, scores, 0.0)
        probs = np.where(mask, phred_to_prob(scores), 0.0)
        for arr in (scores, mask, probs):
            arr.setflags(write=False)
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "mask", mask)
        object.__setattr__(self, "probs", probs)

    @property
    def observed_scores(self) -> np.ndarray:
        return self.scores[self.mask]

    @property
    def observed_probs(self) -> np.ndarray:
        return self.probs[self.mask]

    @property
    def p_min(self) -> float:
        return float(self.observed_probs.min())

    @property
    def p_max(self) -> float:
        return float(self.observed_probs.max())


@dataclass(frozen=True)
class WeightModel:
    a: float
    b: float
    weights: np.ndarray
    mask: np.ndarray
    notice: str = ""

    @property
    def observed(self) -> np.ndarray:
        return self.weights[self.mask]

    @property
    def inverse_sq_sum(self) -> float:
        return float(np.sum(1.0 / self.observed**2))


def uniform_weights(mask) -> WeightModel:
    """``W = 1`` on the mask; turns the weighted problem into the plain one."""
    mask = np.asarray(mask, dtype=bool)
    return WeightModel(0.0, 1.0, mask.astype(float), mask)


def _raw_weights(a: float, b: float, probs: np.ndarray) -> np.ndarray:
    return a * np.log2(1.0 / probs) + b


def realize_weights(a: float, b: float, qualities: QualityGrid) -> WeightModel:
    """Evaluate the weight model on every observed entry.

    Raises :class:`WeightError` if any weight is nonpositive or the largest
    weight is not 1 (to within ``1e-9``); nothing is rescaled silently.
    """
    obs = _raw_weights(a, b, qualities.observed_probs)
    if obs.size == 0:
        raise WeightError("no observed entries")
    if np.any(obs <= 0):
        k = int(np.argmin(obs))
        idx = tuple(int(v) for v in np.argwhere(qualities.mask)[k])
        raise WeightError(
            f"nonpositive weight {obs[k]:.6g} at entry {idx} (Q={qualities.observed_scores[k]:g}); "
            f"a={a:g} b={b:g}"
        )
    if abs(obs.max() - 1.0) > MAX_NORM_TOL:
        raise WeightError(f"max weight is {obs.max():.12g}, expected 1")
    weights = np.zeros(qualities.mask.shape)
    weights[qualities.mask] = obs
    weights.setflags(write=False)
    return WeightModel(float(a), float(b), weights, qualities.mask)


def slope_limit(qualities: QualityGrid) -> float:
    """Largest slope keeping every weight positive once ``b = 1 + a log2 P_min``."""
    p_min, p_max = qualities.p_min, qualities.p_max
    if p_max <= p_min:
        return 0.0
    return 1.0 / math.log2(p_max / p_min)


def weight_objective(a, qualities: QualityGrid, objective: str = "delta-aware"):
    """Objective value(s) for slope(s) ``a`` under the pinned intercept.

    ``literal-eq13`` is ``sum 1/W^2``. ``delta-aware`` multiplies the root of
    that sum by the expected weighted flip-noise norm
    ``sqrt(sum 4 W^2 P)``, i.e. the error bound with the expected radius.
    """
    if objective not in OBJECTIVES:
        raise ValueError(f"unknown objective {objective!r}")
    a = np.atleast_1d(np.asarray(a, dtype=float))
    p = qualities.observed_probs
    b = 1.0 + a * math.log2(qualities.p_min)
    W = a[:, None] * np.log2(1.0 / p)[None, :] + b[:, None]
    inv_sq = np.sum(1.0 / W**2, axis=1)
    if objective == "literal-eq13":
        out = inv_sq
    else:
        out = np.sqrt(np.sum(4.0 * W**2 * p[None, :], axis=1)) * np.sqrt(inv_sq)
    return out


def slope_grid(qualities: QualityGrid, grid_points: int = DEFAULT_GRID_POINTS) -> np.ndarray:
    return np.linspace(0.0, 0.999 * slope_limit(qualities), grid_points)


def fit_weights(
    qualities: QualityGrid,
    objective: str = "delta-aware",
    grid_points: int = DEFAULT_GRID_POINTS,
) -> WeightModel:
    """Grid search over the slope; ties go to the smaller slope."""
    if objective not in OBJECTIVES:
        raise ValueError(f"unknown objective {objective!r}")
    if grid_points < 2:
        raise ValueError("grid_points must be >= 2")
    if qualities.observed_probs.size == 0:
        raise WeightError("no observed entries")
    if slope_limit(qualities) == 0.0:
        notice = "degenerate grid: all qualities equal, using uniform weights"
        log.info(notice)
        model = realize_weights(0.0, 1.0, qualities)
        return WeightModel(model.a, model.b, model.weights, model.mask, notice)
    grid = slope_grid(qualities, grid_points)
    values = weight_objective(grid, qualities, objective)
    a = float(grid[int(np.argmin(values))])
    b = 1.0 + a * math.log2(qualities.p_min)
    return realize_weights(a, b, qualities)


def make_weights(qualities: QualityGrid, mode: str, grid_points: int = DEFAULT_GRID_POINTS) -> WeightModel:
    """Dispatch on a weight mode: ``uniform`` or one of the fit objectives."""
    if mode == "uniform":
        return uniform_weights(qualities.mask)
    return fit_weights(qualities, mode, grid_points)
