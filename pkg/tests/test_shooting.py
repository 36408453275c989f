import math

import numpy as np
import pytest

from pivotpend import (
    BoundaryClass,
    BracketViolation,
    ConstantAcceleration,
    Exited,
    HarmonicSum,
    IntegratorConfig,
    PendulumParams,
    PendulumState,
    Side,
    Survived,
    Zero,
    classify_boundary,
    escape_map,
    find_nonfalling,
    integrate,
    rhs,
)
from pivotpend.dynamics import HALF_PI
from pivotpend.shooting import escape_profile, eventual_side

from conftest import ALL_PROFILES

TE, EN, TG = BoundaryClass.TRANSVERSE_EXIT, BoundaryClass.ENTRY, BoundaryClass.TANGENT_EXIT

# (side, p) -> class, for the three signs of p on each line plus small magnitudes
CANONICAL = [
    (Side.RIGHT, 1.0, TE),
    (Side.RIGHT, -1.0, EN),
    (Side.RIGHT, 0.0, TG),
    (Side.RIGHT, 1e-3, TE),
    (Side.RIGHT, -1e-3, EN),
    (Side.LEFT, -1.0, TE),
    (Side.LEFT, 1.0, EN),
    (Side.LEFT, 0.0, TG),
    (Side.LEFT, -1e-3, TE),
]


@pytest.mark.parametrize("side,p,expected", CANONICAL)
@pytest.mark.parametrize("pivot", ALL_PROFILES, ids=repr)
def test_classification_table(side, p, expected, pivot):
    for g, l in ((9.8, 1.0), (1.0, 3.0)):
        params = PendulumParams(g=g, l=l)
        for t in (0.0, 0.41, 3.0):
            assert classify_boundary(params, pivot, t, side, p) is expected


def test_tangency_acceleration_sign(params):
    for pivot in ALL_PROFILES:
        for side in Side:
            _, acc = rhs(params, pivot, PendulumState(0.3, side.phi, 0.0))
            assert acc == pytest.approx(side.sign * params.g / params.l)


def test_grazing_counts_as_exit(params, zero):
    assert classify_boundary(params, zero, 0.0, Side.RIGHT, -1e-10, grazing_tol=1e-9) is TG
    assert classify_boundary(params, zero, 0.0, Side.LEFT, 1e-10, grazing_tol=1e-9) is TG
    assert TG.is_exit and TE.is_exit and not EN.is_exit


def test_escape_examples(params, zero):
    assert isinstance(escape_map(params, zero, 0.0, 0.0, 50.0), Survived)
    right = escape_map(params, zero, 0.3)
    left = escape_map(params, zero, -0.3)
    assert isinstance(right, Exited) and right.side is Side.RIGHT and right.boundary_class is TE
    assert right.state.p == pytest.approx(math.sqrt(2 * 9.8 * math.cos(0.3)), rel=1e-5)
    assert left.side is Side.LEFT
    assert left.t_star == pytest.approx(right.t_star, rel=1e-9)
    assert left.state.p == pytest.approx(-right.state.p, rel=1e-9)


def test_escape_first_crossing(params, shaken):
    res = escape_map(params, shaken, 0.2, 0.0, 20.0)
    traj = integrate(params, shaken, PendulumState(0.0, 0.2, 0.0), res.t_star - 1e-9).trajectory
    for t in np.linspace(0.0, res.t_star - 1e-9, 400):
        assert abs(traj.at(t).phi) < HALF_PI


def test_escape_preconditions(params, zero):
    with pytest.raises(ValueError):
        escape_map(params, zero, 1.6)
    with pytest.raises(ValueError):
        escape_map(params, zero, 0.1, horizon=0.0)


def test_eventual_side_of_survivor(params):
    piv = ConstantAcceleration(9.8)
    res = escape_map(params, piv, math.pi / 4 + 1e-12, 0.0, 1.0)
    assert isinstance(res, Survived)
    assert eventual_side(params, piv, res, 10.0) is Side.RIGHT


def _check_certificate(cert, tol):
    assert -HALF_PI < cert.phi_lo <= cert.witness_phi <= cert.phi_hi < HALF_PI
    assert cert.width <= tol or cert.witness_survived
    assert cert.bisection_steps <= math.ceil(math.log2(math.pi / tol)) + 2


def test_nonfalling_zero(params, zero):
    cert = find_nonfalling(params, zero, horizon=10.0, tol_phi=1e-9)
    _check_certificate(cert, 1e-9)
    assert cert.phi_lo <= 0.0 <= cert.phi_hi
    assert cert.witness_survived


def test_nonfalling_constant_acceleration(params):
    cert = find_nonfalling(params, ConstantAcceleration(9.8), tol_phi=1e-10)
    _check_certificate(cert, 1e-10)
    assert cert.phi_lo - 1e-8 <= math.pi / 4 <= cert.phi_hi + 1e-8


def test_nonfalling_harmonic_reintegration(params, shaken):
    cert = find_nonfalling(params, shaken, horizon=5.0)
    _check_certificate(cert, 1e-10)
    tight = IntegratorConfig(rtol=1e-12, atol=1e-14)
    res = integrate(params, shaken, PendulumState(0.0, cert.witness_phi, 0.0), 5.0, tight, watch_exit=True)
    if cert.witness_survived:
        assert res.crossing is None
    else:
        assert res.crossing.t == pytest.approx(cert.witness_escape_time, rel=1e-6)


def test_bracket_invariant_from_profile(params, shaken):
    cert = find_nonfalling(params, shaken, horizon=5.0)
    ext = max(5.0, 40 / params.rate)
    # every probe left of phi_lo leans left, every probe right of phi_hi leans right
    for rec in cert.escape_profile:
        phi = rec["phi0"]
        side = eventual_side(params, shaken, escape_map(params, shaken, phi, 0.0, 5.0), ext)
        if phi <= cert.phi_lo:
            assert side is Side.LEFT
        elif phi >= cert.phi_hi:
            assert side is Side.RIGHT
    assert cert.to_dict()["escape_profile"] == cert.escape_profile


def test_nonfalling_certificate_json(params, zero):
    d = find_nonfalling(params, zero).to_dict()
    for key in ("phi_lo", "phi_hi", "witness_phi", "horizon", "witness_survived", "bisection_steps", "escape_profile"):
        assert key in d
    assert all(set(r) == {"phi0", "side", "t_star"} for r in d["escape_profile"])


def test_bracket_violation(params, zero):
    # a large initial velocity sends both ends the same way
    with pytest.raises(BracketViolation):
        find_nonfalling(params, zero, p0=20.0)
    with pytest.raises(ValueError):
        find_nonfalling(params, zero, tol_phi=0.0)


def _sides(params, pivot, n):
    phis = np.linspace(-HALF_PI + 1e-6, HALF_PI - 1e-6, n)
    return [r.side for r in escape_profile(params, pivot, phis, horizon=5.0)]


def _single_flip(sides):
    seen_right = False
    for s in sides:
        if s is None:
            continue
        if s is Side.RIGHT:
            seen_right = True
        elif seen_right:
            return False
    return True


def test_escape_side_split_coarse(params):
    for pivot in (Zero(), ConstantAcceleration(9.8), HarmonicSum.single(0.05, 2 * math.pi)):
        assert _single_flip(_sides(params, pivot, 500))


@pytest.mark.slow
def test_escape_side_split_dense(params, shaken):
    sides = _sides(params, shaken, 10_000)
    assert _single_flip(sides)
    assert sides[0] is Side.LEFT and sides[-1] is Side.RIGHT
