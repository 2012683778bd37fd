import math
from dataclasses import replace

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hapwec.evaluation import (
    CSV_COLUMNS,
    SweepSpec,
    TrialRecord,
    emit_csv,
    nre,
    nre_db,
    read_csv,
    read_manifest,
    reconstruction_rate,
    run_sweep,
    scenario,
    spec_from_manifest,
    spec_to_manifest,
    summarize,
    write_manifest,
)
from hapwec.pipeline import HaplotypePair
from hapwec.simdata import SimConfig

H1 = np.array([1, -1, 1, 1])
H2 = np.array([-1, -1, 1, -1])


def test_nre_examples():
    M = np.array([[1.0, -1.0], [1.0, 1.0]])
    assert nre([M, M, M], M) == 0.0
    assert nre([np.zeros_like(M)], M) == 1.0
    assert nre([-M], M) == 2.0
    assert nre([M, -M], M) == 1.0


def test_nre_errors():
    with pytest.raises(ValueError):
        nre([np.ones((2, 2))], np.zeros((2, 2)))
    with pytest.raises(ValueError):
        nre([np.ones((2, 3))], np.ones((2, 2)))


def test_nre_row_permutation_invariant():
    rng = np.random.default_rng(0)
    M, E = rng.standard_normal((2, 6, 5))
    p = rng.permutation(6)
    assert nre([E[p]], M[p]) == pytest.approx(nre([E], M))


def test_nre_db():
    assert nre_db(1.0) == 0.0
    assert nre_db(0.1) == pytest.approx(-20.0)


def test_rr_exact():
    truth = HaplotypePair(H1, H2)
    assert reconstruction_rate([truth] * 3, truth, n=3, l=4) == 1.0


def test_rr_one_mismatch():
    truth = HaplotypePair(H1, H2)
    h2 = H2.copy()
    h2[0] *= -1
    assert reconstruction_rate([HaplotypePair(H1, h2)], truth, n=1, l=4) == 0.875


def test_rr_all_wrong():
    # with truth (h, h) the swapped assignment is just as wrong as the direct one
    truth = HaplotypePair(H1, H1)
    assert reconstruction_rate([HaplotypePair(-H1, -H1)], truth, n=1, l=4) == 0.0


def test_rr_uses_best_assignment():
    truth = HaplotypePair(H1, H2)
    assert reconstruction_rate([HaplotypePair(H2, H1)], truth) == 1.0


def test_rr_rejects_non_pm1():
    class Loose:
        h1, h2 = np.array([1, 0, 1, 1]), H2

    with pytest.raises(ValueError):
        reconstruction_rate([Loose()], HaplotypePair(H1, H2))


def test_rr_restricted_columns():
    truth = HaplotypePair(H1, H2)
    h1 = H1.copy()
    h1[3] *= -1
    cols = np.array([True, True, True, False])
    assert reconstruction_rate([HaplotypePair(h1, H2)], truth, columns=cols) == 1.0


@given(st.lists(st.lists(st.sampled_from([-1, 1]), min_size=24, max_size=24), min_size=1, max_size=5))
def test_rr_in_unit_interval(rows):
    truth = HaplotypePair(H1, H2)
    est = [HaplotypePair(np.array(r[:4]), np.array(r[4:8])) for r in rows]
    assert 0.0 <= reconstruction_rate(est, truth) <= 1.0


def record(**kw):
    base = dict(axis_name="sampling", axis_value=0.5, method="nuclear", trial=0, seed=1,
                nre=0.123456789123, rr=0.96875, bound=1234.5, lam=0.01, iters=42,
                residual=1.5, converged=True, a=0.0, b=1.0, runtime_ms=12.5)
    base.update(kw)
    return TrialRecord(**base)


def test_csv_single_record(tmp_path):
    p = tmp_path / "r.csv"
    emit_csv([record()], p)
    lines = p.read_text(encoding="utf-8").split("\n")
    assert lines[-1] == ""
    assert len(lines) == 3  # header, row, trailing newline
    assert lines[0] == ",".join(CSV_COLUMNS)
    assert lines[1].startswith("sampling,0.5,nuclear,0,1,0.123456789,0.96875,")
    assert lines[1].endswith(",nan")


def test_csv_parse_back(tmp_path):
    recs = [record(), record(method="nuwec", nre=2.0 / 3.0, converged=False, a=0.0123456789)]
    p = tmp_path / "r.csv"
    emit_csv(recs, p, include_runtime=True)
    rows = read_csv(p)
    assert len(rows) == 2
    for rec, row in zip(recs, rows):
        assert row["method"] == rec.method and row["iters"] == rec.iters
        for key, attr in (("nre", "nre"), ("rr", "rr"), ("lambda", "lam"), ("a", "a"), ("runtime_ms", "runtime_ms")):
            assert row[key] == pytest.approx(getattr(rec, attr), rel=1e-8)
    assert [r["converged"] for r in rows] == ["1", "0"]


def test_csv_failed_rows(tmp_path):
    p = tmp_path / "r.csv"
    emit_csv([record(failed=True, error="boom")], p)
    row = read_csv(p)[0]
    assert row["converged"] == "failed" and math.isnan(row["nre"])


def test_csv_empty_rejected(tmp_path):
    with pytest.raises(ValueError):
        emit_csv([], tmp_path / "r.csv")


def test_spec_validation():
    with pytest.raises(ValueError):
        SweepSpec(axis_name="coverage")
    with pytest.raises(ValueError):
        SweepSpec(methods=("svd",))
    with pytest.raises(KeyError):
        scenario("fig9")


def test_scenarios_match_experiments():
    s2, s4 = scenario("fig2"), scenario("fig4")
    assert (s2.sim.N, s2.sim.l, s2.sim.noise_fraction) == (40, 40, 0.1)
    assert s2.methods == ("nuclear", "nuwec") and s2.n == 20
    assert (s4.sim.N, s4.sim.l, s4.sim.mode, s4.sim.coverage) == (86, 100, "read-based", 6)
    assert s4.axis_values == (0.05, 0.1, 0.15, 0.2)
    assert s4.methods == ("nuclear", "nuwec", "hapwec", "als")


SMALL = SweepSpec(
    axis_name="sampling",
    axis_values=(0.6, 0.9),
    methods=("nuclear", "nuwec", "hapwec", "als"),
    n=2,
    seed=3,
    sim=SimConfig(N=16, l=12, noise_fraction=0.1),
)


def test_small_sweep_records():
    recs = run_sweep(SMALL)
    assert len(recs) == 2 * 4 * 2
    keys = [(r.axis_value, r.method, r.trial) for r in recs]
    assert keys == [(v, m, t) for v in SMALL.axis_values for m in SMALL.methods for t in range(2)]
    for r in recs:
        assert not r.failed, r.error
        assert r.nre >= 0 and 0 <= r.rr <= 1
        assert r.seed == SMALL.seed + r.trial
        assert r.truncation_ok
    # nuclear, nuwec and hapwec share one solve per weight mode
    by = {(r.axis_value, r.trial, r.method): r for r in recs}
    for v in SMALL.axis_values:
        for t in range(2):
            assert by[v, t, "nuwec"].lam == by[v, t, "hapwec"].lam
            assert by[v, t, "nuclear"].a == 0.0
    summ = summarize(recs)
    assert len(summ) == 8 and all(s.n == 2 and s.failed == 0 for s in summ)


def test_sweep_csv_deterministic_and_parallel_independent(tmp_path):
    spec = SweepSpec(axis_values=(0.5, 0.8), n=2, seed=7, sim=SimConfig(N=12, l=10, noise_fraction=0.1))
    emit_csv(run_sweep(spec, jobs=1), tmp_path / "a.csv")
    emit_csv(run_sweep(spec, jobs=1), tmp_path / "b.csv")
    emit_csv(run_sweep(spec, jobs=2), tmp_path / "c.csv")
    a = (tmp_path / "a.csv").read_bytes()
    assert a == (tmp_path / "b.csv").read_bytes() == (tmp_path / "c.csv").read_bytes()


def test_failed_trial_recorded_and_sweep_continues():
    spec = SweepSpec(axis_values=(0.5, 0.7), n=1, methods=("nuclear",), sim=SimConfig(N=4, l=4, noise_fraction=0.1))
    recs = run_sweep(replace(spec, delta=-1.0))
    assert len(recs) == 2
    assert all(r.failed and "delta" in r.error for r in recs)


def test_manifest_round_trip(tmp_path):
    spec = scenario("fig4", n=3, seed=11, delta_scale=1.5)
    write_manifest(spec_to_manifest(spec, {"command": "sweep"}), tmp_path / "m.txt")
    text = (tmp_path / "m.txt").read_text(encoding="utf-8")
    keys = [line.split("=", 1)[0] for line in text.splitlines()]
    assert keys == sorted(keys)
    assert spec_from_manifest(read_manifest(tmp_path / "m.txt")) == spec
