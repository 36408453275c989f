import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from pivotpend import (
    ConstantAcceleration,
    HarmonicSum,
    IntegrationFailure,
    IntegratorConfig,
    PendulumParams,
    PendulumState,
    Polynomial,
    Zero,
    integrate,
    rhs,
    time_T_map,
    variational_rhs,
)
from pivotpend.dynamics import HALF_PI, energy, flow_map, jacobian_matrix

from conftest import ALL_PROFILES

RATE = math.sqrt(9.8)


def test_rhs_examples(params, zero):
    assert rhs(params, zero, PendulumState(0.0, 0.0, 0.0)) == (0.0, 0.0)
    for pivot in ALL_PROFILES:
        for t in (0.0, 0.37, 2.0):
            _, dp = rhs(params, pivot, PendulumState(t, HALF_PI, 0.3))
            assert dp == pytest.approx(params.g / params.l, rel=1e-12, abs=1e-12 * abs(pivot.d2f(t)))
            _, dp = rhs(params, pivot, PendulumState(t, -HALF_PI, 0.3))
            assert dp == pytest.approx(-params.g / params.l, rel=1e-12, abs=1e-12 * abs(pivot.d2f(t)))


def test_rhs_formula():
    p = PendulumParams(g=3.0, l=2.0)
    piv = ConstantAcceleration(1.5)
    dphi, dp = rhs(p, piv, PendulumState(0.0, 0.4, -0.7))
    assert dphi == -0.7
    assert dp == pytest.approx((3.0 * math.sin(0.4) - 1.5 * math.cos(0.4)) / 2.0)


def test_variational_examples(params, zero):
    A = jacobian_matrix(params, zero, 0.0, 0.0)
    np.testing.assert_array_equal(A, [[0.0, 1.0], [9.8, 0.0]])
    piv = HarmonicSum.single(0.05, 2 * math.pi, 0.7)
    A = jacobian_matrix(params, piv, 0.4, HALF_PI)
    assert A[1, 0] == pytest.approx(piv.d2f(0.4) / params.l)
    for phi in (-1.0, 0.3, 2.0):
        assert np.trace(jacobian_matrix(params, piv, 0.2, phi)) == 0.0
    (dphi, dp), dJ = variational_rhs(params, piv, PendulumState(0.2, 0.3, 0.1), np.eye(2))
    np.testing.assert_allclose(dJ, jacobian_matrix(params, piv, 0.2, 0.3))


def test_params_validation():
    with pytest.raises(ValueError):
        PendulumParams(g=0.0)
    with pytest.raises(ValueError):
        PendulumParams(l=-1.0)
    with pytest.raises(ValueError):
        IntegratorConfig(rtol=0.0)


def test_equilibrium_stays_put(params, zero):
    res = integrate(params, zero, PendulumState(0.0, 0.0, 0.0), 10.0, watch_exit=True)
    assert res.crossing is None
    assert res.final == PendulumState(10.0, 0.0, 0.0)


def test_exit_speed_energy_oracle(params, zero):
    res = integrate(params, zero, PendulumState(0.0, 0.1, 0.0), 50.0, watch_exit=True)
    assert res.crossing is not None
    expected = math.sqrt(2 * 9.8 * math.cos(0.1))
    assert expected == pytest.approx(4.41612, abs=1e-5)
    assert res.crossing.p == pytest.approx(expected, rel=1e-7)
    assert abs(res.crossing.phi - HALF_PI) < 1e-9


def _turning_times(traj):
    """Times where p changes sign, refined by bisection on the dense output."""
    out = []
    for i in range(len(traj.times) - 1):
        a, b = traj.times[i], traj.times[i + 1]
        pa, pb = traj.states[i][1], traj.states[i + 1][1]
        if pa == 0.0 or pa * pb >= 0:
            continue
        for _ in range(60):
            m = 0.5 * (a + b)
            if traj.at(m).p * pa > 0:
                a = m
            else:
                b = m
        out.append(0.5 * (a + b))
    return out


def test_hanging_oscillation_frequency(params, zero):
    # linearization about phi = pi: phi'' = -(g/l)(phi - pi)
    res = integrate(params, zero, PendulumState(0.0, math.pi - 1e-3, 0.0), 20.0)
    turns = _turning_times(res.trajectory)
    half_periods = np.diff(turns)
    omega = math.pi / np.mean(half_periods)
    assert omega == pytest.approx(RATE, rel=1e-4)


def test_mass_does_not_enter(zero):
    piv = HarmonicSum.single(0.05, 2 * math.pi)
    s0 = PendulumState(0.0, 0.2, -0.1)
    a = integrate(PendulumParams(m=1.0), piv, s0, 5.0).trajectory
    b = integrate(PendulumParams(m=17.3), piv, s0, 5.0).trajectory
    assert a.times == b.times
    assert a.states == b.states


@pytest.mark.parametrize("pivot", [Zero(), Polynomial((0.2, -1.3))], ids=repr)
def test_energy_conserved_without_pivot_acceleration(params, pivot):
    rng = random.Random(5)
    for _ in range(5):
        s0 = PendulumState(0.0, rng.uniform(-HALF_PI, HALF_PI), rng.uniform(-2, 2))
        traj = integrate(params, pivot, s0, 20.0).trajectory
        h0 = energy(params, s0.phi, s0.p)
        drift = max(abs(energy(params, y[0], y[1]) - h0) for y in traj.states)
        assert drift <= 1e-7 * (1 + abs(h0))


def test_mirror_symmetry(params):
    piv = HarmonicSum(((0.05, 2 * math.pi, 0.3), (0.02, 4 * math.pi, -0.1)))
    s0 = PendulumState(0.0, 0.4, -0.3)
    a = integrate(params, piv, s0, 6.0).trajectory
    b = integrate(params, -piv, PendulumState(0.0, -0.4, 0.3), 6.0).trajectory
    for t in np.linspace(0, 6, 61):
        sa, sb = a.at(t), b.at(t)
        assert abs(sa.phi + sb.phi) <= 1e-9
        assert abs(sa.p + sb.p) <= 1e-9


def test_event_sign_change_contract(params, shaken):
    cfg = IntegratorConfig()
    for phi0 in (-0.4, 0.05, 0.3, 1.2):
        res = integrate(params, shaken, PendulumState(0.0, phi0, 0.0), 30.0, cfg, watch_exit=True)
        hit = res.crossing
        assert hit is not None
        seg = res.trajectory.segments[-1]
        before = abs(seg(hit.t - cfg.event_tol)[0]) - HALF_PI
        after = abs(seg(hit.t + cfg.event_tol)[0]) - HALF_PI
        assert before < 0.0 < after or (before < 0.0 and after >= 0.0)
        # everything before the hit stays inside the strip
        assert all(abs(y[0]) < HALF_PI for y in res.trajectory.states[:-1])


def test_start_on_boundary(params, zero):
    out = integrate(params, zero, PendulumState(0.0, HALF_PI, 0.0), 1.0, watch_exit=True)
    assert out.crossing == PendulumState(0.0, HALF_PI, 0.0)
    # entering velocity: the run continues and later exits left or right
    back = integrate(params, zero, PendulumState(0.0, HALF_PI, -1.0), 10.0, watch_exit=True)
    assert back.crossing is not None and back.crossing.t > 0.0
    with pytest.raises(ValueError):
        integrate(params, zero, PendulumState(0.0, 2.0, 0.0), 1.0, watch_exit=True)
    with pytest.raises(ValueError):
        integrate(params, zero, PendulumState(1.0, 0.0, 0.0), 1.0)


def test_step_budget_raises(params):
    # a tiny step budget forces the failure path, which reports the last good state
    with pytest.raises(IntegrationFailure) as info:
        integrate(params, Zero(), PendulumState(0.0, 0.5, 0.0), 10.0, IntegratorConfig(max_steps=3))
    t, y = info.value.last_state
    assert 0.0 < t < 10.0 and len(y) == 2


def test_dense_output_interpolation(params, shaken):
    traj = integrate(params, shaken, PendulumState(0.0, 0.01, 0.0), 2.0).trajectory
    fine = integrate(params, shaken, PendulumState(0.0, 0.01, 0.0), 2.0, IntegratorConfig(rtol=1e-12, atol=1e-14)).trajectory
    for t in np.linspace(0.0, 2.0, 37):
        assert traj.at(t).phi == pytest.approx(fine.at(t).phi, rel=1e-7, abs=1e-10)
    assert all(b > a for a, b in zip(traj.times, traj.times[1:]))
    with pytest.raises(ValueError):
        traj.at(2.5)


def test_time_T_map_zero_pivot(params, zero):
    x1, D = time_T_map(params, zero, (0.0, 0.0), 0.0, 2.3)
    np.testing.assert_array_equal(x1, [0.0, 0.0])
    T = 1.0
    _, D = time_T_map(params, zero, (0.0, 0.0), 0.0, T)
    mu = sorted(np.linalg.eigvals(D).real)
    assert mu[1] == pytest.approx(math.exp(RATE * T), rel=1e-6)
    assert mu[0] == pytest.approx(math.exp(-RATE * T), rel=1e-6)
    closed = np.array([[math.cosh(RATE), math.sinh(RATE) / RATE], [RATE * math.sinh(RATE), math.cosh(RATE)]])
    np.testing.assert_allclose(D, closed, rtol=1e-8)


def _fd_jacobian(params, pivot, x0, T, h=1e-6):
    cols = []
    for j in range(2):
        e = np.zeros(2)
        e[j] = h
        plus = time_T_map(params, pivot, x0 + e, 0.0, T)[0]
        minus = time_T_map(params, pivot, x0 - e, 0.0, T)[0]
        cols.append((plus - minus) / (2 * h))
    return np.column_stack(cols)


@settings(max_examples=30, deadline=None)
@given(
    k=st.integers(0, len(ALL_PROFILES) - 1),
    phi0=st.floats(-1.5, 1.5),
    p0=st.floats(-1.0, 1.0),
    T=st.floats(0.1, 1.5),
)
def test_tangent_matrix_properties(k, phi0, p0, T):
    params = PendulumParams()
    pivot = ALL_PROFILES[k]
    x0 = np.array([phi0, p0])
    x1, D = time_T_map(params, pivot, x0, 0.0, T)
    assert abs(np.linalg.det(D) - 1.0) <= 1e-8
    fd = _fd_jacobian(params, pivot, x0, T)
    for j in range(2):
        assert np.linalg.norm(fd[:, j] - D[:, j]) <= 1e-4 * np.linalg.norm(D[:, j])
    np.testing.assert_allclose(flow_map(params, pivot, x0, 0.0, T), x1, rtol=1e-7, atol=1e-9)


def test_csv_export(params, zero):
    traj = integrate(params, zero, PendulumState(0.0, 0.0, 0.0), 1.0).trajectory
    text = traj.to_csv(sample_times=[0.25, 0.5])
    lines = text.splitlines()
    assert lines[0] == "t,phi,p"
    assert "0.25,0.0,0.0" in lines and "0.5,0.0,0.0" in lines
    times = [float(l.split(",")[0]) for l in lines[1:]]
    assert times == sorted(times)
    row = integrate(params, HarmonicSum.single(0.05, 3.0), PendulumState(0, 0.1, 0), 1.0).trajectory.to_csv().splitlines()[-1]
    for field in row.split(","):
        assert float(repr(float(field))) == float(field)
