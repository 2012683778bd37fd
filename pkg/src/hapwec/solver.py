"""Nuclear-norm minimization under a weighted Frobenius data constraint.

The constrained problem

    min ||X||_*  s.t.  ||W o P_Omega(X - Y)||_F <= delta

is solved through its penalized form

    lambda ||X||_* + 1/2 ||W o P_Omega(X - Y)||_F^2

with a monotone accelerated proximal-gradient inner loop and an outer
search on ``lambda`` that matches the residual to ``delta``. With ``W = 1``
this is ordinary noisy nuclear-norm completion.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from .core import MaskedMatrix
from .weights import WeightModel, uniform_weights

log = logging.getLogger(__name__)

LAMBDA_DESCENT = 10.0
DELTA_ZERO_DECADES = 10


@dataclass(frozen=True)
class SolverConfig:
    delta: float = 0.0
    max_inner_iters: int = 500
    inner_tol: float = 1e-6
    max_bisect_iters: int = 40
    constraint_tol: float = 1e-3
    acceleration: bool = True

    def __post_init__(self):
        if self.delta < 0:
            raise ValueError("delta must be nonnegative")
        if self.inner_tol <= 0 or self.constraint_tol <= 0:
            raise ValueError("tolerances must be positive")
        if self.max_inner_iters < 1 or self.max_bisect_iters < 1:
            raise ValueError("iteration caps must be >= 1")


@dataclass
class SolveReport:
    solution: np.ndarray
    final_residual: float
    penalty_lambda: float
    inner_iterations_total: int
    converged: bool
    nuclear_norm: float
    outer_iterations: int = 0
    message: str = ""
    objective_history: list[float] = field(default_factory=list, repr=False)


def _svt(A: np.ndarray, tau: float) -> tuple[np.ndarray, np.ndarray]:
    U, s, Vt = np.linalg.svd(A, full_matrices=False)
    s = np.maximum(s - tau, 0.0)
    k = int(np.count_nonzero(s))
    if k == 0:
        return np.zeros_like(A), s[:0]
    return (U[:, :k] * s[:k]) @ Vt[:k], s[:k]


def svt_prox(A, tau: float) -> np.ndarray:
    """Singular value soft-thresholding, the prox of ``tau * ||.||_*``."""
    if tau < 0:
        raise ValueError("threshold must be nonnegative")
    A = np.asarray(A, dtype=float)
    if not np.all(np.isfinite(A)):
        raise ValueError("svt_prox input contains non-finite entries")
    return _svt(A, tau)[0]


def weighted_residual(X: np.ndarray, Y: MaskedMatrix, W: WeightModel) -> float:
    diff = np.where(Y.mask, X - Y.values, 0.0)
    return float(np.linalg.norm(W.weights * diff))


def _check_inputs(Y: MaskedMatrix, W: WeightModel) -> None:
    if Y.n_observed < 1:
        raise ValueError("observation set is empty")
    if W.mask.shape != Y.mask.shape or not np.array_equal(W.mask, Y.mask):
        raise ValueError("weight model must be defined on the observation set of Y")
    if np.any(W.observed <= 0):
        raise ValueError("weights must be positive on the observation set")


def solve_penalized(
    Y: MaskedMatrix,
    W: WeightModel,
    lam: float,
    cfg: SolverConfig | None = None,
    x0: np.ndarray | None = None,
    hard_data: bool = False,
    track_objective: bool = False,
    abs_tol: float = 0.0,
) -> SolveReport:
    """Minimize ``lam ||X||_* + 1/2 ||W o P_Omega(X - Y)||_F^2``.

    Accelerated proximal gradient with step ``1/max W^2``. A step that would
    raise the objective is rejected: momentum restarts and a plain step is
    taken from the current iterate, halving the step if needed.

    Stops once the relative Frobenius change drops below ``inner_tol``; a
    positive ``abs_tol`` additionally requires the absolute change to be
    below it, which the outer search uses when ``delta`` is tiny.

    With ``hard_data`` the iteration runs with unit weights and the returned
    matrix has its observed entries replaced by the data, so the residual
    is exactly zero.
    """
    cfg = cfg or SolverConfig()
    if lam <= 0:
        raise ValueError("penalty must be positive")
    _check_inputs(Y, W)
    y = Y.values
    w2 = Y.mask.astype(float) if hard_data else W.weights**2
    base_step = 1.0 / float(w2[Y.mask].max())

    def smooth(X):
        d = X - y
        return 0.5 * float(np.sum(w2 * d * d))

    if x0 is None:
        X = np.zeros(Y.shape)
        F_X = smooth(X)
    else:
        X = np.array(x0, dtype=float)
        F_X = lam * float(np.linalg.svd(X, compute_uv=False).sum()) + smooth(X)

    Z = X
    t = 1.0
    history = [F_X] if track_objective else []
    converged = False
    it = 0
    for it in range(1, cfg.max_inner_iters + 1):
        cand, s = _svt(Z - base_step * w2 * (Z - y), lam * base_step)
        F_c = lam * float(s.sum()) + smooth(cand)
        restarted = False
        if F_c > F_X:
            restarted = True
            step = base_step
            for _ in range(30):
                cand, s = _svt(X - step * w2 * (X - y), lam * step)
                F_c = lam * float(s.sum()) + smooth(cand)
                if F_c <= F_X:
                    break
                step *= 0.5
            else:
                cand, F_c = X, F_X
        change = float(np.linalg.norm(cand - X))
        scale = max(float(np.linalg.norm(X)), 1e-12)
        X_prev, X, F_X = X, cand, F_c
        if track_objective:
            history.append(F_X)
        small = change / scale < cfg.inner_tol and (abs_tol <= 0 or change <= abs_tol)
        if change == 0.0 or small:
            converged = True
            break
        if cfg.acceleration and not restarted:
            t_next = 0.5 * (1.0 + math.sqrt(1.0 + 4.0 * t * t))
            Z = X + ((t - 1.0) / t_next) * (X - X_prev)
            t = t_next
        else:
            Z, t = X, 1.0

    if hard_data:
        X = np.where(Y.mask, y, X)
    nuc = float(np.linalg.svd(X, compute_uv=False).sum())
    return SolveReport(
        solution=X,
        final_residual=weighted_residual(X, Y, W),
        penalty_lambda=float(lam),
        inner_iterations_total=it,
        converged=converged,
        nuclear_norm=nuc,
        message="" if converged else "inner iteration cap reached",
        objective_history=history,
    )


def lambda_max(Y: MaskedMatrix, W: WeightModel) -> float:
    """Smallest penalty at which the zero matrix is optimal."""
    g = W.weights**2 * Y.values
    return float(np.linalg.norm(g, 2))


def _solve_interpolating(Y: MaskedMatrix, W: WeightModel, cfg: SolverConfig) -> SolveReport:
    # delta == 0: data is hard; continuation on lambda toward 0.
    lam0 = lambda_max(Y, W)
    if lam0 == 0.0:
        return SolveReport(np.zeros(Y.shape), 0.0, 0.0, 0, True, 0.0, message="zero data")
    X = None
    total = 0
    rep = None
    prev_nuc = None
    levels = min(cfg.max_bisect_iters, DELTA_ZERO_DECADES)
    for k in range(1, levels + 1):
        rep = solve_penalized(Y, W, lam0 / LAMBDA_DESCENT**k, cfg, x0=X, hard_data=True)
        total += rep.inner_iterations_total
        X = rep.solution
        if prev_nuc is not None and abs(rep.nuclear_norm - prev_nuc) <= cfg.inner_tol * max(prev_nuc, 1e-12):
            break
        prev_nuc = rep.nuclear_norm
    rep.inner_iterations_total = total
    rep.outer_iterations = k
    rep.message = "exact interpolation (delta = 0)" + ("" if rep.converged else "; " + rep.message)
    return rep


def solve_nuwec(Y: MaskedMatrix, W: WeightModel, cfg: SolverConfig | None = None) -> SolveReport:
    """Solve the weighted-constraint problem for ``cfg.delta``.

    If the zero matrix is feasible it is returned. Otherwise the penalty is
    lowered by decades from ``lambda_max`` until the residual drops below
    ``delta``, then bisected geometrically until
    ``|r(lambda) - delta| <= constraint_tol * delta``.
    """
    cfg = cfg or SolverConfig()
    if cfg.delta < 0:
        raise ValueError("delta must be nonnegative")
    _check_inputs(Y, W)
    delta = cfg.delta
    if delta == 0.0:
        return _solve_interpolating(Y, W, cfg)

    lam_hi = lambda_max(Y, W)
    r0 = weighted_residual(np.zeros(Y.shape), Y, W)
    if r0 <= delta:
        return SolveReport(np.zeros(Y.shape), r0, lam_hi, 0, True, 0.0, message="zero matrix feasible")

    tol = cfg.constraint_tol * max(delta, 1e-12)
    total = 0
    outer = 0
    X = np.zeros(Y.shape)
    lo_rep = None
    last = None
    lam = lam_hi
    while outer < cfg.max_bisect_iters:
        lam = lam / LAMBDA_DESCENT
        last = solve_penalized(Y, W, lam, cfg, x0=X, abs_tol=0.1 * tol)
        total += last.inner_iterations_total
        outer += 1
        X = last.solution
        if abs(last.final_residual - delta) <= tol:
            return _finish(last, total, outer, True)
        if last.final_residual < delta:
            lo_rep = last
            break
        lam_hi = lam

    if lo_rep is None:
        return _finish(last, total, outer, False, "failed to bracket delta")

    lam_lo = lo_rep.penalty_lambda
    while outer < cfg.max_bisect_iters:
        mid = math.sqrt(lam_lo * lam_hi)
        last = solve_penalized(Y, W, mid, cfg, x0=last.solution, abs_tol=0.1 * tol)
        total += last.inner_iterations_total
        outer += 1
        if abs(last.final_residual - delta) <= tol:
            return _finish(last, total, outer, True)
        if last.final_residual < delta:
            lam_lo, lo_rep = mid, last
        else:
            lam_hi = mid
    # out of outer iterations: fall back to the feasible side of the bracket
    return _finish(lo_rep, total, outer, False, "bisection iteration cap reached")


def _finish(rep: SolveReport, total: int, outer: int, matched: bool, msg: str = "") -> SolveReport:
    rep.inner_iterations_total = total
    rep.outer_iterations = outer
    rep.converged = bool(matched and rep.converged)
    if not rep.converged:
        rep.message = "; ".join(m for m in (msg, rep.message) if m)
    return rep


def solve_nuclear(Y: MaskedMatrix, cfg: SolverConfig | None = None) -> SolveReport:
    """Unweighted completion: the weighted solver with ``W = 1``."""
    return solve_nuwec(Y, uniform_weights(Y.mask), cfg)
