from __future__ import annotations

import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from nashmoser.graded_space import (
    DegenerateInput,
    GradedElement,
    check_interpolation,
    random_element,
    rough,
    scaled_to,
    seminorm,
    smooth,
    space_invariant_suite,
)

indices = st.sampled_from([0.0, 0.5, 1.0, 2.0, 4.0, 8.0])


def elements(N=16):
    return st.builds(
        lambda seed, decay: random_element(N, np.random.default_rng(seed), decay=decay, real=False),
        st.integers(0, 2**32 - 1), st.floats(0.0, 4.0),
    )


def test_seminorm_of_single_mode():
    x = GradedElement.mode(8, -3, 2.0)
    assert seminorm(x, 0) == 2.0
    assert seminorm(x, 2) == pytest.approx(2.0 * 16)


def test_seminorms_monotone_in_index(rng):
    x = random_element(32, rng)
    vals = [seminorm(x, n) for n in (0, 0.5, 1, 2, 4, 8)]
    assert vals == sorted(vals)


def test_negative_index_rejected():
    with pytest.raises(ValueError):
        seminorm(GradedElement.zeros(4), -1)


def test_smoothing_is_a_projection_and_splits(rng):
    x = random_element(20, rng, real=False)
    for theta in (1.0, 2.5, 7.0, 21.0, 100.0):
        s, r = smooth(x, theta), rough(x, theta)
        assert smooth(s, theta) == s
        assert s + r == x
        assert rough(s, theta).is_zero()


def test_theta_beyond_band_keeps_everything(rng):
    x = random_element(10, rng)
    assert smooth(x, 11.0) == x
    assert rough(x, 11.0).is_zero()


def test_theta_below_one_rejected():
    with pytest.raises(ValueError):
        smooth(GradedElement.zeros(3), 0.5)


@settings(max_examples=200, deadline=None)
@given(elements(), indices, indices, st.floats(1.0, 40.0))
def test_smoothing_inequality(x, k, n, theta):
    k, n = min(k, n), max(k, n)
    lhs = seminorm(smooth(x, theta), n)
    assert lhs <= theta ** (n - k) * seminorm(x, k) * (1 + 1e-12)


@settings(max_examples=200, deadline=None)
@given(elements(), indices, indices, st.floats(1.0, 40.0))
def test_rough_inequality(x, k, n, theta):
    k, n = min(k, n), max(k, n)
    lhs = seminorm(rough(x, theta), k)
    assert lhs <= theta ** (-(n - k)) * seminorm(x, n) * (1 + 1e-12)


@settings(max_examples=200, deadline=None)
@given(elements(), st.lists(indices, min_size=3, max_size=3))
def test_interpolation_ratio_at_most_one(x, ks):
    k, l, n = sorted(ks)
    assert check_interpolation(x, k, l, n) <= 1 + 1e-12


def test_interpolation_of_zero_is_degenerate():
    with pytest.raises(DegenerateInput):
        check_interpolation(GradedElement.zeros(4), 0, 1, 2)


def test_random_element_real_and_mean_zero(rng):
    x = random_element(12, rng, real=True, mean_zero=True, band=5)
    c = x.coeffs
    assert np.allclose(c, np.conj(c[::-1]))
    assert x[0] == 0
    assert all(x[k] == 0 for k in range(6, 13))


def test_scaled_to_and_zero(rng):
    x = scaled_to(random_element(12, rng), 3.0, 7.5)
    assert seminorm(x, 3.0) == pytest.approx(7.5, rel=1e-14)
    with pytest.raises(DegenerateInput):
        scaled_to(GradedElement.zeros(4), 1, 1.0)


def test_json_roundtrip(rng):
    x = random_element(6, rng, real=False)
    y = GradedElement.from_json(json.dumps(x.to_json()))
    assert y == x


def test_json_rejects_out_of_range_mode():
    with pytest.raises(ValueError):
        GradedElement.from_json({"truncation_order": 2, "modes": [[3, 1.0, 0.0]]})


def test_elements_are_immutable(rng):
    x = random_element(4, rng)
    with pytest.raises(ValueError):
        x.coeffs[0] = 1.0


def test_mismatched_truncation_rejected():
    with pytest.raises(ValueError):
        GradedElement.zeros(3) + GradedElement.zeros(4)


def test_suite_passes_at_default_scale():
    rep = space_invariant_suite(N=128, samples=1000, seed=0)
    assert rep["passed"], rep["first_failure"]


def test_suite_minimal_space():
    assert space_invariant_suite(N=1, samples=200, seed=3)["passed"]


def test_suite_negative_control_broken_weights():
    rep = space_invariant_suite(N=32, samples=200, seed=0, weight_power=2.0)
    assert not rep["passed"]
    assert rep["first_failure"]["check"] in ("smoothing", "rough", "interpolation", "splitting")
