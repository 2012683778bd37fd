import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from hapwec.bound import BoundInputs, default_delta, expected_noise_sq, theorem1_bound, truncation_factor
from hapwec.weights import QualityGrid, WeightModel, fit_weights, uniform_weights


def test_bound_example():
    inp = BoundInputs(delta=1.0, p=1.0, N=2, weight_inverse_sq_sum=8.0, alpha=0.5)
    assert theorem1_bound(inp) == pytest.approx(2 * 5 * math.sqrt(8))
    assert theorem1_bound(inp) == pytest.approx(28.284, abs=1e-3)


def test_bound_zero_radius():
    assert theorem1_bound(BoundInputs(0.0, 0.3, 10, 50.0)) == 0.0


@pytest.mark.parametrize("kw", [{"p": 0.0}, {"p": 1.5}, {"alpha": 1.0}, {"alpha": 0.0}, {"delta": -1.0}])
def test_bound_inputs_validated(kw):
    args = dict(delta=1.0, p=0.5, N=4, weight_inverse_sq_sum=10.0) | kw
    with pytest.raises(ValueError):
        BoundInputs(**args)


def test_bound_from_model_uses_observed_entries():
    mask = np.zeros((2, 4), dtype=bool)
    mask[0] = True
    inp = BoundInputs.from_model(1.0, uniform_weights(mask))
    assert (inp.p, inp.N, inp.weight_inverse_sq_sum) == (0.5, 2, 4.0)


def test_bound_invariant_to_prenormalisation_scale():
    rng = np.random.default_rng(0)
    mask = rng.random((8, 9)) < 0.5
    Q = QualityGrid(rng.choice([10.0, 20.0, 30.0, 40.0], size=mask.shape), mask)
    raw = np.where(mask, 0.05 * np.log2(1 / np.where(mask, Q.probs, 1.0)) + 0.3, 0.0)
    bounds = []
    for factor in (1.0, 2.0, 17.0):
        scaled = factor * raw
        W = scaled / scaled[mask].max()
        bounds.append(theorem1_bound(BoundInputs.from_model(1.3, WeightModel(0.0, 0.0, W, mask))))
    assert bounds[1] == pytest.approx(bounds[0], rel=1e-12)
    assert bounds[2] == pytest.approx(bounds[0], rel=1e-12)


@given(
    st.floats(0.01, 10),
    st.floats(0.05, 1.0),
    st.integers(1, 200),
    st.floats(1.0, 1e4),
    st.floats(1.01, 3.0),
)
def test_bound_monotone(delta, p, N, s, grow):
    base = theorem1_bound(BoundInputs(delta, p, N, s))
    assert theorem1_bound(BoundInputs(delta * grow, p, N, s)) > base
    assert theorem1_bound(BoundInputs(delta, p, N, s * grow)) > base
    assert theorem1_bound(BoundInputs(delta, p / grow, N, s)) > base


@pytest.mark.parametrize("rank,k", [(3, 3.0), (0, 2.0), (8, 4.0)])
def test_truncation_factor(rank, k):
    assert truncation_factor(rank) == k


def test_truncation_factor_rejects_negative_rank():
    with pytest.raises(ValueError):
        truncation_factor(-1)


def test_default_delta_noiseless_grid():
    # Q large enough that 10**(-Q/10) underflows to 0
    mask = np.ones((2, 3), dtype=bool)
    Q = QualityGrid(np.full(mask.shape, 4000.0), mask)
    assert default_delta(uniform_weights(mask), Q) == 0.0


def test_default_delta_example():
    mask = np.ones((10, 10), dtype=bool)
    Q = QualityGrid(np.full(mask.shape, 10.0), mask)
    assert default_delta(uniform_weights(mask), Q, 1.0) == pytest.approx(math.sqrt(40.0))
    assert default_delta(uniform_weights(mask), Q, 1.0) == pytest.approx(6.325, abs=1e-3)
    assert default_delta(uniform_weights(mask), Q, 1.5) == pytest.approx(1.5 * math.sqrt(40.0))


def test_default_delta_requires_shared_mask():
    mask = np.ones((2, 2), dtype=bool)
    other = mask.copy()
    other[0, 0] = False
    with pytest.raises(ValueError):
        default_delta(uniform_weights(other), QualityGrid(np.full((2, 2), 10.0), mask))


def test_default_delta_matches_monte_carlo():
    rng = np.random.default_rng(11)
    mask = rng.random((12, 15)) < 0.6
    Q = QualityGrid(rng.choice([10.0, 20.0, 30.0, 40.0], size=mask.shape), mask)
    W = fit_weights(Q)
    w, p = W.observed, Q.observed_probs
    flips = rng.random((10_000, p.size)) < p
    draws = np.sum((2.0 * w) ** 2 * flips, axis=1)
    assert draws.mean() == pytest.approx(expected_noise_sq(W, Q), rel=0.02)
    assert default_delta(W, Q) ** 2 == pytest.approx(expected_noise_sq(W, Q))
