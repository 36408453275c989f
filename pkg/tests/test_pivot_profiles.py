import math
import warnings

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pivotpend import (
    ANY_PERIOD,
    ConstantAcceleration,
    HarmonicSum,
    HarmonicTerm,
    PivotSample,
    Polynomial,
    Zero,
    eval_pivot,
    period_of,
    profile_from_dict,
    sup_jerk,
)
from pivotpend.pivot_profiles import IncommensurateWarning

from conftest import ALL_PROFILES


def test_eval_examples():
    assert eval_pivot(Zero(), 3.7) == PivotSample(0.0, 0.0, 0.0, 0.0)
    s = eval_pivot(HarmonicSum.single(1.0, 2.0), 0.0)
    assert (s.f, s.df, s.d2f, s.d3f) == (0.0, 2.0, -0.0, -8.0)
    s = eval_pivot(ConstantAcceleration(9.8), 2.0)
    assert (s.f, s.df, s.d2f, s.d3f) == pytest.approx((19.6, 19.6, 9.8, 0.0))


def test_period_examples():
    assert period_of(Zero()) is ANY_PERIOD
    assert period_of(HarmonicSum.single(0.3, 2 * math.pi)) == pytest.approx(1.0, rel=1e-15)
    assert period_of(Polynomial((0.0, 0.0, 1.5))) is None
    assert period_of(ConstantAcceleration(1.0)) is None
    assert period_of(ConstantAcceleration(0.0)) is ANY_PERIOD
    assert period_of(Polynomial((4.0,))) is ANY_PERIOD


def test_period_commensurate_sum():
    # 2 and 3 rad/s share the period 2 pi
    h = HarmonicSum(((0.1, 2.0, 0.0), (0.2, 3.0, 0.5)))
    assert period_of(h) == pytest.approx(2 * math.pi)
    h = HarmonicSum(((0.1, 4 * math.pi, 0.0), (0.2, 6 * math.pi, 0.0)))
    assert period_of(h) == pytest.approx(1.0)


def test_period_of_nearly_commensurate_float_ratio():
    h = HarmonicSum(((0.1, 2.0, 0.0), (0.1, 3.0 * (1 + 1e-13), 0.0)))
    assert period_of(h) == pytest.approx(2 * math.pi)


def test_period_incommensurate_warns():
    h = HarmonicSum(((0.1, 1.0, 0.0), (0.1, math.sqrt(2.0), 0.0)))
    with pytest.warns(IncommensurateWarning):
        assert period_of(h) is None


def test_sup_jerk_examples():
    assert sup_jerk(Zero(), 3.0) == 0.0
    for T in (math.pi, 4.0, 17.0):
        assert sup_jerk(HarmonicSum.single(1.0, 2.0), T) == pytest.approx(8.0, rel=1e-12)
    assert sup_jerk(Polynomial((0.0, 0.0, 0.0, 2.0)), 5.0) == pytest.approx(12.0, rel=1e-12)
    with pytest.raises(ValueError):
        sup_jerk(Zero(), 0.0)


def test_sup_jerk_short_window_is_tight_upper_bound():
    # jerk = -8 cos(2t); on [0, 1] the sup is at t=0, equal to 8
    h = HarmonicSum.single(1.0, 2.0, 0.3)
    b = sup_jerk(h, 1.0)
    exact = max(abs(8 * math.cos(2 * t + 0.3)) for t in [k / 200000 for k in range(200001)])
    assert exact <= b <= exact * (1 + 1e-6)


def test_sup_jerk_polynomial_interior_maximum():
    p = Polynomial((0.0, 0.0, 0.0, 1.0, -0.5, 0.06))
    b = sup_jerk(p, 4.0)
    grid = max(abs(p.d3f(4.0 * k / 100000)) for k in range(100001))
    assert b == pytest.approx(grid, rel=1e-6)
    assert b >= grid


@pytest.mark.parametrize("profile", ALL_PROFILES, ids=repr)
@settings(max_examples=60, deadline=None)
@given(t=st.floats(-20.0, 20.0))
def test_derivatives_match_finite_differences(profile, t):
    h = 1e-4 * max(1.0, abs(t))
    f = lambda x: profile.sample(x).f
    s = profile.sample(t)
    fd2 = (f(t + h) - 2 * f(t) + f(t - h)) / (h * h)
    assert abs(s.d2f - fd2) <= 1e-5 * (1 + abs(s.d2f))
    k = 1e-5
    fd3 = (profile.d2f(t + k) - profile.d2f(t - k)) / (2 * k)
    assert abs(s.d3f - fd3) <= 1e-5 * (1 + abs(s.d3f))
    fd1 = (f(t + k) - f(t - k)) / (2 * k)
    assert abs(s.df - fd1) <= 1e-5 * (1 + abs(s.df))
    assert profile.d2f(t) == s.d2f and profile.d3f(t) == s.d3f


@pytest.mark.parametrize("profile", ALL_PROFILES, ids=repr)
def test_sup_jerk_bounds_samples(profile):
    import random

    rng = random.Random(11)
    T = 3.3
    b = sup_jerk(profile, T)
    for _ in range(1000):
        t = rng.uniform(0.0, T)
        assert abs(profile.d3f(t)) <= b


@settings(max_examples=40, deadline=None)
@given(
    amps=st.lists(st.floats(-1.0, 1.0), min_size=1, max_size=3),
    base=st.floats(0.5, 7.0),
    t=st.floats(0.0, 5.0),
)
def test_period_shifts_leave_profile_invariant(amps, base, t):
    terms = tuple(HarmonicTerm(a, base * (k + 1), 0.3 * k) for k, a in enumerate(amps))
    h = HarmonicSum(terms)
    T = period_of(h)
    if T is ANY_PERIOD:
        return
    s0, s1 = h.sample(t), h.sample(t + T)
    for a, b in zip(vars(s0).values(), vars(s1).values()):
        assert abs(a - b) <= 1e-12 * (1 + abs(a)) * (1 + base**3 * len(amps) * 10)


def test_roundtrip_dict():
    for prof in ALL_PROFILES:
        assert profile_from_dict(prof.to_dict()) == prof
    with pytest.raises(ValueError):
        profile_from_dict({"kind": "sampled"})


def test_negation():
    h = HarmonicSum.single(0.3, 2.0, 0.1)
    assert (-h).d2f(0.7) == -h.d2f(0.7)
    assert (-Polynomial((1.0, 2.0))).coefficients == (-1.0, -2.0)
