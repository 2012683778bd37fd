"""Metrics and Monte Carlo sweeps.

``nre`` is the mean of ``||M_hat - M||_F / ||M||_F`` over trials; ``rr`` is
the per-position haplotype agreement ``1 - sum ||h_hat - h||_1 / (4 n l)``.
Estimated haplotype pairs carry no intrinsic order, so each pair is scored
under whichever of the two assignments to the truth is better.
"""

from __future__ import annotations

import csv
import json
import logging
import math
import os
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, fields, replace
from pathlib import Path
from typing import Iterable, Sequence

import numpy as np

from . import __version__
from .bound import truncation_factor
from .pipeline import HaplotypePair, als_rank2, haplotypes_from_estimate, run_hapwec_matrix
from .simdata import SimConfig, simulate
from .solver import SolverConfig

log = logging.getLogger(__name__)

METHODS = ("nuclear", "nuwec", "hapwec", "als")
AXES = {"sampling": "sampling_rate", "noise": "noise_fraction"}
CSV_COLUMNS = (
    "axis_name",
    "axis_value",
    "method",
    "trial",
    "seed",
    "nre",
    "rr",
    "bound",
    "lambda",
    "iters",
    "residual",
    "converged",
    "a",
    "b",
    "runtime_ms",
)


def nre(estimates: Sequence[np.ndarray], truth: np.ndarray) -> float:
    truth = np.asarray(truth, dtype=float)
    norm = float(np.linalg.norm(truth))
    if norm == 0:
        raise ValueError("truth matrix is zero; NRE undefined")
    if len(estimates) == 0:
        raise ValueError("no estimates")
    total = 0.0
    for est in estimates:
        est = np.asarray(est, dtype=float)
        if est.shape != truth.shape:
            raise ValueError(f"estimate shape {est.shape} does not match truth {truth.shape}")
        total += float(np.linalg.norm(est - truth)) / norm
    return total / len(estimates)


def nre_db(value: float) -> float:
    return 20.0 * math.log10(value) if value > 0 else -math.inf


def _pm1(v, length: int) -> np.ndarray:
    v = np.asarray(v)
    if v.shape != (length,):
        raise ValueError(f"haplotype length {v.shape} does not match {length}")
    if not np.all(np.abs(v) == 1):
        raise ValueError("haplotype entries must be +/-1")
    return v.astype(int)


def pair_distance(est: HaplotypePair, truth: HaplotypePair, columns: np.ndarray | None = None) -> int:
    """Summed L1 distance under the better of the two label assignments."""
    l = truth.length
    e1, e2 = _pm1(est.h1, l), _pm1(est.h2, l)
    t1, t2 = _pm1(truth.h1, l), _pm1(truth.h2, l)
    sel = slice(None) if columns is None else columns
    same = np.abs(e1 - t1)[sel].sum() + np.abs(e2 - t2)[sel].sum()
    swap = np.abs(e1 - t2)[sel].sum() + np.abs(e2 - t1)[sel].sum()
    return int(min(same, swap))


def reconstruction_rate(
    estimates: Sequence[HaplotypePair],
    truth: HaplotypePair | Sequence[HaplotypePair],
    n: int | None = None,
    l: int | None = None,
    columns: np.ndarray | None = None,
) -> float:
    """Reconstruction rate over ``n`` trials.

    ``truth`` is either one pair shared by every trial or one pair per trial.
    ``columns`` optionally restricts scoring to callable positions.
    """
    truths = [truth] * len(estimates) if isinstance(truth, HaplotypePair) else list(truth)
    if len(truths) != len(estimates):
        raise ValueError("need one truth pair per estimate")
    n = len(estimates) if n is None else n
    if n < 1:
        raise ValueError("n must be positive")
    l = truths[0].length if l is None else l
    if columns is not None:
        columns = np.asarray(columns)
        l = int(columns.sum()) if columns.dtype == bool else len(columns)
    total = sum(pair_distance(e, t, columns) for e, t in zip(estimates, truths))
    return 1.0 - total / (4.0 * n * l)


@dataclass(frozen=True)
class SweepSpec:
    name: str = "custom"
    axis_name: str = "sampling"
    axis_values: tuple[float, ...] = (0.5, 0.7, 0.9)
    methods: tuple[str, ...] = ("nuclear", "nuwec")
    n: int = 20
    seed: int = 1
    sim: SimConfig = field(default_factory=SimConfig)
    solver: SolverConfig = field(default_factory=SolverConfig)
    delta: float | None = None
    delta_scale: float = 1.0
    weight_objective: str = "delta-aware"
    alpha: float = 0.5
    als_iters: int = 100

    def __post_init__(self):
        if self.axis_name not in AXES:
            raise ValueError(f"unknown sweep axis {self.axis_name!r}")
        if not self.axis_values:
            raise ValueError("empty sweep axis")
        bad = [m for m in self.methods if m not in METHODS]
        if bad or not self.methods:
            raise ValueError(f"unknown methods {bad}")
        if self.n < 1:
            raise ValueError("n must be positive")
        object.__setattr__(self, "axis_values", tuple(float(v) for v in self.axis_values))
        object.__setattr__(self, "methods", tuple(self.methods))


_READ_SCENARIO = SimConfig(N=86, l=100, mode="read-based", coverage=6, noise_mode="fixed-fraction")

SCENARIOS = {
    "fig2": dict(
        axis_name="sampling",
        axis_values=(0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9),
        methods=("nuclear", "nuwec"),
        sim=SimConfig(N=40, l=40, noise_fraction=0.1),
    ),
    "fig3": dict(
        axis_name="noise",
        axis_values=(0.05, 0.10, 0.15, 0.20),
        methods=("nuclear", "nuwec"),
        sim=_READ_SCENARIO,
    ),
    "fig4": dict(
        axis_name="noise",
        axis_values=(0.05, 0.10, 0.15, 0.20),
        methods=("nuclear", "nuwec", "hapwec", "als"),
        sim=_READ_SCENARIO,
    ),
    "custom": dict(),
}


def scenario(name: str, **overrides) -> SweepSpec:
    if name not in SCENARIOS:
        raise KeyError(f"unknown scenario {name!r}; choose from {sorted(SCENARIOS)}")
    params = dict(SCENARIOS[name])
    params.update(overrides)
    return SweepSpec(name=name, **params)


@dataclass
class TrialRecord:
    axis_name: str
    axis_value: float
    method: str
    trial: int
    seed: int
    nre: float = math.nan
    rr: float = math.nan
    bound: float = math.nan
    lam: float = math.nan
    iters: int = 0
    residual: float = math.nan
    converged: bool = False
    a: float = math.nan
    b: float = math.nan
    runtime_ms: float = math.nan
    failed: bool = False
    error: str = ""
    delta: float = math.nan
    error_fro: float = math.nan
    rank: int = -1
    truncation_lhs: float = math.nan
    truncation_rhs: float = math.nan

    @property
    def truncation_ok(self) -> bool:
        return self.truncation_lhs <= self.truncation_rhs * (1 + 1e-12) + 1e-12

    @property
    def bound_ok(self) -> bool:
        return self.error_fro <= self.bound


def _truncation_terms(M_hat: np.ndarray, T: np.ndarray, M: np.ndarray, rank: int) -> tuple[float, float]:
    lhs = float(np.linalg.norm(T - M) ** 2)
    rhs = truncation_factor(rank) * float(np.linalg.norm(M_hat - M) ** 2)
    return lhs, rhs


def _solve_cached(cache: dict, mode: str, Y, Q, spec: SweepSpec):
    if mode not in cache:
        t0 = time.perf_counter()
        pair, report, diag = run_hapwec_matrix(
            Y, Q, spec.solver, mode, delta=spec.delta, delta_scale=spec.delta_scale, alpha=spec.alpha
        )
        cache[mode] = (pair, report, diag, 1000.0 * (time.perf_counter() - t0))
    return cache[mode]


def run_trial(spec: SweepSpec, axis_value: float, trial: int) -> list[TrialRecord]:
    """All methods on one simulated data set (shared across methods)."""
    seed = spec.seed + trial
    sim = replace(spec.sim, seed=seed, **{AXES[spec.axis_name]: axis_value})
    M, truth, Y, Q, _ = simulate(sim)
    norm_M = float(np.linalg.norm(M))
    cache: dict = {}
    out = []
    for method in spec.methods:
        rec = TrialRecord(spec.axis_name, axis_value, method, trial, seed)
        try:
            if method == "als":
                t0 = time.perf_counter()
                fit = als_rank2(Y, spec.als_iters, seed)
                X = fit.estimate
                ext = haplotypes_from_estimate(X)
                rec.runtime_ms = 1000.0 * (time.perf_counter() - t0)
                rec.iters = fit.sweeps
                rec.converged = fit.sweeps < spec.als_iters
                rec.residual = float(np.linalg.norm(np.where(Y.mask, X - Y.values, 0.0)))
                estimate, M_hat, T, rank = X, X, ext.truncated, ext.factors.rank
                pair = ext.pair
            else:
                mode = "uniform" if method == "nuclear" else spec.weight_objective
                pair, report, diag, ms = _solve_cached(cache, mode, Y, Q, spec)
                M_hat, T, rank = report.solution, diag["truncated"], diag["rank"]
                estimate = T if method == "hapwec" else M_hat
                rec.runtime_ms = ms
                rec.bound = diag["bound"]
                rec.lam = report.penalty_lambda
                rec.iters = report.inner_iterations_total
                rec.residual = report.final_residual
                rec.converged = report.converged
                rec.a, rec.b = diag["a"], diag["b"]
                rec.delta = diag["delta"]
            rec.nre = float(np.linalg.norm(estimate - M)) / norm_M
            callable_cols = Y.mask.any(axis=0)
            rec.rr = reconstruction_rate([pair], truth, columns=None if callable_cols.all() else callable_cols)
            rec.error_fro = float(np.linalg.norm(M_hat - M))
            rec.rank = rank
            rec.truncation_lhs, rec.truncation_rhs = _truncation_terms(M_hat, T, M, rank)
        except Exception as err:  # a failed trial is recorded, the sweep goes on
            log.warning("trial %s/%s/%d failed: %s", axis_value, method, trial, err)
            rec.failed = True
            rec.error = f"{type(err).__name__}: {err}"
        out.append(rec)
    return out


def _run_unit(args):
    spec, value, trial = args
    return run_trial(spec, value, trial)


def default_jobs() -> int:
    return os.cpu_count() or 1


def run_sweep(spec: SweepSpec, jobs: int = 1, progress=None) -> list[TrialRecord]:
    """Every (axis value, trial) unit, all methods; ordered by (axis, method, trial)."""
    units = [(spec, v, t) for v in spec.axis_values for t in range(spec.n)]
    records: list[TrialRecord] = []
    if jobs > 1 and len(units) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            for recs in pool.map(_run_unit, units, chunksize=1):
                records.extend(recs)
                if progress:
                    progress(len(records))
    else:
        for unit in units:
            records.extend(_run_unit(unit))
            if progress:
                progress(len(records))
    axis_pos = {v: i for i, v in enumerate(spec.axis_values)}
    method_pos = {m: i for i, m in enumerate(spec.methods)}
    records.sort(key=lambda r: (axis_pos[r.axis_value], method_pos[r.method], r.trial))
    return records


@dataclass(frozen=True)
class Summary:
    axis_value: float
    method: str
    n: int
    failed: int
    converged: int
    mean_nre: float
    mean_rr: float

    @property
    def nre_db(self) -> float:
        return nre_db(self.mean_nre)


def summarize(records: Iterable[TrialRecord]) -> list[Summary]:
    groups: dict[tuple[float, str], list[TrialRecord]] = {}
    for r in records:
        groups.setdefault((r.axis_value, r.method), []).append(r)
    out = []
    for (value, method), recs in groups.items():
        ok = [r for r in recs if not r.failed]
        out.append(
            Summary(
                value,
                method,
                len(recs),
                len(recs) - len(ok),
                sum(r.converged for r in ok),
                float(np.mean([r.nre for r in ok])) if ok else math.nan,
                float(np.mean([r.rr for r in ok])) if ok else math.nan,
            )
        )
    return out


def _fmt(x) -> str:
    if isinstance(x, bool):
        return "1" if x else "0"
    if isinstance(x, (int, np.integer)):
        return str(int(x))
    if isinstance(x, str):
        return x
    return format(float(x), ".9g")


def record_row(r: TrialRecord, include_runtime: bool = False) -> list[str]:
    if r.failed:
        vals = [r.axis_name, r.axis_value, r.method, r.trial, r.seed] + [math.nan] * 6 + ["failed"]
        vals += [math.nan, math.nan, r.runtime_ms if include_runtime else math.nan]
    else:
        vals = [
            r.axis_name, r.axis_value, r.method, r.trial, r.seed, r.nre, r.rr, r.bound,
            r.lam, r.iters, r.residual, r.converged, r.a, r.b,
            r.runtime_ms if include_runtime else math.nan,
        ]
    return [_fmt(v) for v in vals]


def emit_csv(records: Sequence[TrialRecord], path, include_runtime: bool = False) -> None:
    """Write one row per record.

    ``runtime_ms`` is written as ``nan`` unless ``include_runtime`` is set,
    which keeps the file byte-reproducible.
    """
    if not records:
        raise ValueError("no records to write")
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(CSV_COLUMNS)
        for r in records:
            w.writerow(record_row(r, include_runtime))


def emit_timings(records: Sequence[TrialRecord], path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(("axis_value", "method", "trial", "runtime_ms"))
        for r in records:
            w.writerow((_fmt(r.axis_value), r.method, r.trial, _fmt(r.runtime_ms)))


def read_csv(path) -> list[dict]:
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        for row in csv.DictReader(fh):
            parsed = {}
            for k, v in row.items():
                if k in ("axis_name", "method"):
                    parsed[k] = v
                elif k in ("trial", "seed", "iters"):
                    parsed[k] = int(v) if v != "nan" else None
                elif k == "converged":
                    parsed[k] = v
                else:
                    parsed[k] = float(v)
            rows.append(parsed)
    return rows


def spec_to_manifest(spec: SweepSpec, extra: dict | None = None) -> dict:
    d = {"tool_version": __version__}
    for f in fields(spec):
        value = getattr(spec, f.name)
        if f.name in ("sim", "solver"):
            for k, v in asdict(value).items():
                d[f"{f.name}.{k}"] = v
        else:
            d[f.name] = value
    if extra:
        d.update(extra)
    return d


def write_manifest(data: dict, path) -> None:
    lines = [f"{k}={json.dumps(data[k], sort_keys=True)}" for k in sorted(data)]
    Path(path).write_text("\n".join(lines) + "\n", encoding="utf-8")


def read_manifest(path) -> dict:
    out = {}
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        if line:
            k, _, v = line.partition("=")
            out[k] = json.loads(v)
    return out


def spec_from_manifest(data: dict) -> SweepSpec:
    sim = {k[4:]: v for k, v in data.items() if k.startswith("sim.")}
    solver = {k[7:]: v for k, v in data.items() if k.startswith("solver.")}
    sim["quality_distribution"] = tuple(tuple(p) for p in sim.get("quality_distribution", ()))
    names = {f.name for f in fields(SweepSpec)} - {"sim", "solver"}
    top = {k: v for k, v in data.items() if k in names}
    for k in ("axis_values", "methods"):
        top[k] = tuple(top[k])
    return SweepSpec(sim=SimConfig(**sim), solver=SolverConfig(**solver), **top)
