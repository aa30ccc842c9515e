"""Exact water-filling queries, closed forms, and consistency checks."""

import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from ehsched import (
    WaterSystem,
    covariances_for_level,
    level_for_budget,
    solve_budget,
    sum_power_for_level,
    weighted_rate,
)

from conftest import draw_effective


# ---------------------------------------------------------------------------
# Scalar closed forms: a single unit mode gives W(P) = ln(1 + P)
# ---------------------------------------------------------------------------


def test_unit_mode_closed_forms(unit_eff):
    sys = WaterSystem(unit_eff)
    assert sys.level_max == pytest.approx(1.0)
    for p in (0.1, 1.0, 3.0, 17.5):
        level, m = sys.level_at_power(p)
        assert m == 1
        assert level == pytest.approx(1.0 / (1.0 + p))
        assert sys.rate_at_power(p) == pytest.approx(math.log1p(p))
        assert sys.curvature(p) == pytest.approx(-1.0 / (1.0 + p) ** 2)
        assert sys.marginal_rate(p) == pytest.approx(1.0 / (1.0 + p))
    assert sys.rate_at_power(0.0) == 0.0
    assert sys.level_at_power(0.0) == (1.0, 0)
    assert sys.curvature(0.0) == 0.0
    assert sys.power_at_level(0.5) == pytest.approx(1.0)
    assert sys.power_at_level(2.0) == 0.0
    with pytest.raises(ValueError):
        sys.power_at_level(0.0)


def test_two_mode_breakpoints(two_mode_eff):
    # Eigenvalues 4 and 1; the second mode switches on at level 1,
    # i.e. at sum power 1/1 - 1/4 = 0.75.
    sys = WaterSystem(two_mode_eff)
    assert sys.thr[:2] == [4.0, 1.0]
    assert sys.level_at_power(0.75)[1] == 1
    assert sys.rate_at_power(0.75) == pytest.approx(math.log(4.0))
    level, m = sys.level_at_power(6.75)
    assert (level, m) == (pytest.approx(0.25), 2)
    assert sys.rate_at_power(6.75) == pytest.approx(6.0 * math.log(2.0))
    assert sum_power_for_level(two_mode_eff, None, 0.25) == pytest.approx(6.75)


def test_weights_reorder_modes(pair_eff):
    # Doubling user 2's weight lifts its threshold above user 1's.
    sys = WaterSystem(pair_eff, weights=[1.0, 2.0])
    assert sys.thr[:2] == [2.0, 1.0]
    # Below the second breakpoint only user 2 transmits.
    sol = solve_budget(pair_eff, [1.0, 2.0], 0.25)
    assert np.allclose(sol.covs.Phi[0], 0.0)
    assert sol.covs.Phi[1][0, 0] == pytest.approx(0.25)


def test_weight_validation(pair_eff):
    with pytest.raises(ValueError, match="one positive weight"):
        WaterSystem(pair_eff, weights=[1.0])
    with pytest.raises(ValueError, match="positive"):
        WaterSystem(pair_eff, weights=[1.0, 0.0])
    with pytest.raises(ValueError, match="finite"):
        WaterSystem(pair_eff, weights=[1.0, math.inf])


# ---------------------------------------------------------------------------
# Covariances
# ---------------------------------------------------------------------------


def test_covariances_match_closed_form(two_mode_eff):
    covs = covariances_for_level(two_mode_eff, None, 0.25)
    np.testing.assert_allclose(covs.Phi[0], np.diag([3.0, 3.75]), atol=1e-12)
    assert weighted_rate(two_mode_eff, covs) == pytest.approx(6.0 * math.log(2.0))
    with pytest.raises(ValueError):
        covariances_for_level(two_mode_eff, None, 0.0)


def test_solve_budget_zero_and_positive(unit_eff):
    zero = solve_budget(unit_eff, None, 0.0)
    assert zero.power == 0.0 and zero.rate == 0.0
    assert np.allclose(zero.covs.Phi[0], 0.0)
    sol = solve_budget(unit_eff, None, 1.0)
    assert sol.level == pytest.approx(0.5)
    assert sol.covs.Phi[0][0, 0] == pytest.approx(1.0)
    assert sol.rate == pytest.approx(math.log(2.0))


def test_level_for_budget_inverts_power(two_mode_eff):
    lvl = level_for_budget(two_mode_eff, None, 6.75)
    assert lvl == pytest.approx(0.25, rel=1e-7)
    assert level_for_budget(two_mode_eff, None, 0.0) == pytest.approx(4.0)
    with pytest.raises(ValueError):
        level_for_budget(two_mode_eff, None, -1.0)


# ---------------------------------------------------------------------------
# Properties on random channels
# ---------------------------------------------------------------------------


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=60, deadline=None)
def test_scan_routes_agree(seed):
    """The exact breakpoint scan, its vectorized twin, and the bisection
    route must return the same level; realized covariances must carry the
    budget as their trace and reproduce the queried rate."""
    rng = np.random.Generator(np.random.Philox(key=seed))
    eff = draw_effective(rng)
    sys = WaterSystem(eff)
    powers = np.concatenate(([0.0], rng.uniform(0.01, 12.0, size=6)))
    lvl_vec, m_vec = sys.level_at_power_vec(powers)
    rate_vec = sys.rate_at_power_vec(powers)
    curv_vec = sys.curvature_vec(powers)
    for p, lv, mv, rv, cv in zip(powers, lvl_vec, m_vec, rate_vec, curv_vec):
        level, m = sys.level_at_power(float(p))
        assert lv == pytest.approx(level, rel=1e-12)
        assert mv == m
        assert rv == pytest.approx(sys.rate_at_power(float(p)), abs=1e-12)
        assert cv == pytest.approx(sys.curvature(float(p)), abs=1e-12)
        if p > 0.0:
            assert level_for_budget(eff, None, float(p)) == pytest.approx(
                level, rel=1e-6
            )
            assert sys.power_at_level(level) == pytest.approx(float(p), rel=1e-9)
            sol = solve_budget(eff, None, float(p))
            trace = sum(float(np.trace(Phi).real) for Phi in sol.covs.Phi)
            assert trace == pytest.approx(float(p), rel=1e-8, abs=1e-10)
            assert weighted_rate(eff, sol.covs) == pytest.approx(sol.rate, rel=1e-9)


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=40, deadline=None)
def test_rate_concave_increasing(seed):
    rng = np.random.Generator(np.random.Philox(key=seed))
    eff = draw_effective(rng)
    sys = WaterSystem(eff)
    p = np.sort(rng.uniform(0.0, 10.0, size=8))
    rates = [sys.rate_at_power(float(x)) for x in p]
    assert all(b >= a - 1e-12 for a, b in zip(rates, rates[1:]))
    slopes = [
        (rb - ra) / (pb - pa)
        for (pa, ra), (pb, rb) in zip(zip(p, rates), zip(p[1:], rates[1:]))
        if pb - pa > 1e-9
    ]
    assert all(s2 <= s1 + 1e-9 for s1, s2 in zip(slopes, slopes[1:]))


@given(seed=st.integers(0, 2**32 - 1))
@settings(max_examples=30, deadline=None)
def test_marginal_rate_is_the_derivative(seed):
    rng = np.random.Generator(np.random.Philox(key=seed))
    eff = draw_effective(rng)
    sys = WaterSystem(eff)
    p = float(rng.uniform(0.2, 8.0))
    h = 1e-6
    fd = (sys.rate_at_power(p + h) - sys.rate_at_power(p - h)) / (2.0 * h)
    assert sys.marginal_rate(p) == pytest.approx(fd, rel=1e-4)
