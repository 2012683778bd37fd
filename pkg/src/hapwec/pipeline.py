"""Haplotype reconstruction from fragment reads.

The reconstruction runs: read matrix -> error probabilities -> weights ->
weighted-constraint completion -> SVD -> rank-2 truncation -> row
clustering -> rounding to +/-1. A rank-2 alternating least squares
factorization is provided as a comparison baseline; it is a generic stand-in
for alternating-minimization haplotype methods, not a port of any of them.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field, replace

import numpy as np

from .bound import BoundInputs, default_delta, theorem1_bound, truncation_factor
from .core import MaskedMatrix, SvdFactors, svd, truncate_rank
from .solver import SolveReport, SolverConfig, solve_nuwec
from .weights import QualityGrid, make_weights

log = logging.getLogger(__name__)

WEIGHT_MODES = ("uniform", "literal-eq13", "delta-aware")
ALS_RIDGE = 1e-8
ALS_TOL = 1e-8


class DegenerateCoverageError(RuntimeError):
    """Only one haplotype cluster could be formed.

    ``centroid`` holds the single recovered (real-valued) haplotype.
    """

    def __init__(self, msg: str, centroid: np.ndarray):
        super().__init__(msg)
        self.centroid = centroid


class ReadSetError(ValueError):
    pass


@dataclass(frozen=True)
class HaplotypePair:
    h1: np.ndarray
    h2: np.ndarray

    def __post_init__(self):
        h1 = np.asarray(self.h1).astype(int)
        h2 = np.asarray(self.h2).astype(int)
        if h1.ndim != 1 or h1.shape != h2.shape:
            raise ValueError("haplotypes must be 1-D vectors of equal length")
        if not (np.all(np.abs(h1) == 1) and np.all(np.abs(h2) == 1)):
            raise ValueError("haplotype entries must be exactly +1 or -1")
        object.__setattr__(self, "h1", h1)
        object.__setattr__(self, "h2", h2)

    @property
    def length(self) -> int:
        return self.h1.size

    def as_set(self) -> set[tuple[int, ...]]:
        return {tuple(self.h1.tolist()), tuple(self.h2.tolist())}


@dataclass(frozen=True)
class Read:
    row_id: int
    # (column, observed value in {-1, +1}, Phred score)
    entries: tuple[tuple[int, int, float], ...]


@dataclass(frozen=True)
class ReadSet:
    reads: tuple[Read, ...]
    num_columns: int
    num_rows: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "reads", tuple(self.reads))
        if self.num_columns < 1:
            raise ReadSetError("num_columns must be positive")
        seen_rows = set()
        for read in self.reads:
            if not read.entries:
                raise ReadSetError(f"read {read.row_id} covers no columns")
            if read.row_id < 0 or read.row_id in seen_rows:
                raise ReadSetError(f"invalid or duplicate read id {read.row_id}")
            seen_rows.add(read.row_id)
            cols = [c for c, _, _ in read.entries]
            if len(set(cols)) != len(cols):
                raise ReadSetError(f"read {read.row_id} repeats a column")
            for c, v, q in read.entries:
                if not 0 <= c < self.num_columns:
                    raise ReadSetError(f"read {read.row_id}: column {c} out of range")
                if v not in (-1, 1):
                    raise ReadSetError(f"read {read.row_id}: value {v} is not +/-1")
                if q < 0:
                    raise ReadSetError(f"read {read.row_id}: negative quality {q}")
        if self.num_rows is not None and seen_rows and max(seen_rows) >= self.num_rows:
            raise ReadSetError("read id exceeds declared row count")

    @property
    def rows(self) -> int:
        if self.num_rows is not None:
            return self.num_rows
        return max(r.row_id for r in self.reads) + 1


def build_read_matrix(reads: ReadSet) -> tuple[MaskedMatrix, QualityGrid]:
    if not reads.reads:
        raise ReadSetError("empty read set")
    shape = (reads.rows, reads.num_columns)
    values = np.zeros(shape)
    scores = np.zeros(shape)
    mask = np.zeros(shape, dtype=bool)
    for read in reads.reads:
        for c, v, q in read.entries:
            values[read.row_id, c] = v
            scores[read.row_id, c] = q
            mask[read.row_id, c] = True
    return MaskedMatrix(values, mask), QualityGrid(scores, mask)


def reads_from_matrix(Y: MaskedMatrix, qualities: QualityGrid) -> ReadSet:
    """One read per row that has at least one observation."""
    reads = []
    for i in range(Y.rows):
        cols = np.flatnonzero(Y.mask[i])
        if cols.size == 0:
            continue
        entries = tuple((int(c), int(Y.values[i, c]), float(qualities.scores[i, c])) for c in cols)
        reads.append(Read(i, entries))
    return ReadSet(tuple(reads), Y.cols, Y.rows)


def round_pm1(v) -> np.ndarray:
    """Entrywise sign with exact zeros sent to +1."""
    v = np.asarray(v, dtype=float)
    if not np.all(np.isfinite(v)):
        raise ValueError("cannot round non-finite entries")
    return np.where(v >= 0, 1, -1)


def _farthest_pair(points: np.ndarray) -> tuple[int, int, float]:
    d = np.linalg.norm(points[:, None, :] - points[None, :, :], axis=2)
    k = int(np.argmax(d))  # first maximum in row-major order: lowest indices win ties
    i, j = divmod(k, d.shape[1])
    return min(i, j), max(i, j), float(d[i, j])


def extract_haplotypes(T: np.ndarray, F: SvdFactors, max_iter: int = 100):
    """Split the rows of a rank-<=2 matrix into two groups and return their centroids.

    Row ``i`` is represented by ``(s1 * x_i1, s2 * x_i2)``; 2-means starts from
    the two farthest points. Each centroid ``c`` is mapped back to the
    length-l vector ``c1 * y1 + c2 * y2``.
    """
    k = min(F.rank, 2)
    if k == 0:
        raise DegenerateCoverageError("estimate is the zero matrix", np.zeros(F.shape[1]))
    coef = np.zeros((F.shape[0], 2))
    coef[:, :k] = F.left_vectors[:, :k] * F.singular_values[:k]
    basis = np.zeros((2, F.shape[1]))
    basis[:k] = F.right_vectors[:, :k].T

    i, j, dist = _farthest_pair(coef)
    scale = max(float(np.linalg.norm(coef, axis=1).max()), 1e-300)
    if dist <= 1e-8 * scale:
        raise DegenerateCoverageError("all rows coincide; only one haplotype present", coef[i] @ basis)
    centers = coef[[i, j]].copy()
    labels = None
    for _ in range(max_iter):
        d = np.linalg.norm(coef[:, None, :] - centers[None, :, :], axis=2)
        new = (d[:, 1] < d[:, 0]).astype(int)
        if labels is not None and np.array_equal(new, labels):
            break
        labels = new
        for c in (0, 1):
            members = coef[labels == c]
            if members.size == 0:
                other = coef[labels == 1 - c].mean(axis=0)
                raise DegenerateCoverageError("one cluster is empty", other @ basis)
            centers[c] = members.mean(axis=0)
    return centers[0] @ basis, centers[1] @ basis


@dataclass
class Extraction:
    pair: HaplotypePair
    truncated: np.ndarray
    factors: SvdFactors
    warnings: list[str] = field(default_factory=list)


def haplotypes_from_estimate(M_hat: np.ndarray) -> Extraction:
    """SVD, rank-2 truncation, row clustering and rounding of a completed matrix."""
    F = svd(M_hat)
    warnings = []
    if F.rank == 0:
        T = np.zeros(M_hat.shape)
    else:
        T = truncate_rank(F, 2)
    try:
        v1, v2 = extract_haplotypes(T, F)
    except DegenerateCoverageError as err:
        warnings.append(f"uncallable second haplotype: {err}")
        v1 = v2 = err.centroid
    return Extraction(HaplotypePair(round_pm1(v1), round_pm1(v2)), T, F, warnings)


def run_hapwec_matrix(
    Y: MaskedMatrix,
    qualities: QualityGrid,
    cfg: SolverConfig | None = None,
    weight_mode: str = "delta-aware",
    delta: float | None = None,
    delta_scale: float = 1.0,
    alpha: float = 0.5,
) -> tuple[HaplotypePair, SolveReport, dict]:
    """Reconstruction starting from an already assembled read matrix."""
    if weight_mode not in WEIGHT_MODES:
        raise ValueError(f"unknown weight mode {weight_mode!r}")
    cfg = cfg or SolverConfig()
    W = make_weights(qualities, weight_mode)
    if delta is None:
        delta = default_delta(W, qualities, delta_scale)
    report = solve_nuwec(Y, W, replace(cfg, delta=delta))
    ext = haplotypes_from_estimate(report.solution)

    uncallable = np.flatnonzero(~Y.mask.any(axis=0)).tolist()
    warnings = list(ext.warnings)
    if uncallable:
        warnings.append(f"{len(uncallable)} column(s) have no coverage")
    if not report.converged:
        warnings.append(f"solver did not converge: {report.message}")
    for w in warnings:
        log.warning(w)
    diag = {
        "weight_mode": weight_mode,
        "a": W.a,
        "b": W.b,
        "weight_notice": W.notice,
        "delta": delta,
        "lambda": report.penalty_lambda,
        "residual": report.final_residual,
        "iterations": report.inner_iterations_total,
        "converged": report.converged,
        "rank": ext.factors.rank,
        "bound": theorem1_bound(BoundInputs.from_model(delta, W, alpha)),
        "truncation_factor": truncation_factor(ext.factors.rank),
        "uncallable_columns": uncallable,
        "warnings": warnings,
        "truncated": ext.truncated,
    }
    return ext.pair, report, diag


def run_hapwec(
    reads: ReadSet,
    cfg: SolverConfig | None = None,
    weight_mode: str = "delta-aware",
    delta: float | None = None,
    delta_scale: float = 1.0,
    alpha: float = 0.5,
) -> tuple[HaplotypePair, SolveReport, dict]:
    """Full reconstruction from reads.

    ``delta=None`` picks the radius from the expected weighted noise norm
    times ``delta_scale``. Non-convergence and degenerate clusters are
    reported in the diagnostics, never raised.
    """
    Y, Q = build_read_matrix(reads)
    return run_hapwec_matrix(Y, Q, cfg, weight_mode, delta, delta_scale, alpha)


@dataclass
class AlsFit:
    U: np.ndarray
    V: np.ndarray
    objective_history: list[float]
    sweeps: int
    ridge_rows: int

    @property
    def estimate(self) -> np.ndarray:
        return self.U @ self.V


def _ls_rows(values: np.ndarray, mask: np.ndarray, other: np.ndarray) -> tuple[np.ndarray, int]:
    # Solve min_u sum_j m_ij (y_ij - u . other_j)^2 for every row i at once.
    m = mask.astype(float)
    G = np.einsum("ij,kj,lj->ikl", m, other, other)
    rhs = values @ other.T
    tr = np.trace(G, axis1=1, axis2=2)
    det = np.linalg.det(G)
    bad = det <= 1e-12 * np.maximum(tr, 1e-300) ** 2
    if np.any(bad):
        G[bad] += ALS_RIDGE * np.eye(other.shape[0])
    return np.linalg.solve(G, rhs[..., None])[..., 0], int(bad.sum())


def als_rank2(Y: MaskedMatrix, iters: int = 100, seed: int = 0) -> AlsFit:
    """Rank-2 factorization ``U V`` fit to the observed entries by alternating LS."""
    if Y.n_observed < 2:
        raise ValueError("need at least two observations")
    rng = np.random.default_rng(seed)
    U = rng.standard_normal((Y.rows, 2))
    V = np.zeros((2, Y.cols))
    y, mask = Y.values, Y.mask

    def objective():
        r = np.where(mask, U @ V - y, 0.0)
        return 0.5 * float(np.sum(r * r))

    history = []
    ridge = 0
    sweeps = 0
    for sweeps in range(1, iters + 1):
        Vt, nb = _ls_rows(y.T, mask.T, U.T)
        V = Vt.T
        U, na = _ls_rows(y, mask, V)
        ridge += na + nb
        history.append(objective())
        if len(history) > 1:
            prev = history[-2]
            if abs(prev - history[-1]) <= ALS_TOL * max(prev, 1e-300):
                break
    if ridge:
        log.info("ALS used ridge fallback on %d row/column solves", ridge)
    return AlsFit(U, V, history, sweeps, ridge)


def als_rank2_baseline(Y: MaskedMatrix, iters: int = 100, seed: int = 0) -> tuple[HaplotypePair, np.ndarray]:
    """Rank-2 ALS completion followed by the same extraction and rounding as HapWeC."""
    X = als_rank2(Y, iters, seed).estimate
    return haplotypes_from_estimate(X).pair, X
