"""Equations of motion, their linearization and a watched integrator.

The angle ``phi`` is measured from the upward vertical and kept unwrapped;
``phi = +-pi/2`` are the two horizontal (fallen) positions.

    phi' = p
    p'   = (g/l) sin(phi) - (f''(t)/l) cos(phi)
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field, replace
from typing import Iterable, Optional, TextIO

import numpy as np

from pivotpend import _dopri
from pivotpend.pivot_profiles import PivotProfile

__all__ = [
    "HALF_PI",
    "IntegrationResult",
    "IntegratorConfig",
    "PendulumParams",
    "PendulumState",
    "Trajectory",
    "energy",
    "integrate",
    "jacobian_matrix",
    "rhs",
    "time_T_map",
    "variational_rhs",
]

HALF_PI = 0.5 * math.pi


@dataclass(frozen=True)
class PendulumParams:
    """Gravity ``g`` [m/s^2], rod length ``l`` [m], bob mass ``m`` [kg].

    The mass cancels from the equations of motion and never enters them.
    """

    g: float = 9.8
    l: float = 1.0
    m: float = 1.0

    def __post_init__(self):
        for name in ("g", "l", "m"):
            v = getattr(self, name)
            if not (math.isfinite(v) and v > 0):
                raise ValueError(f"{name} must be positive and finite, got {v}")

    @property
    def rate(self) -> float:
        """Linear instability rate ``sqrt(g/l)`` of the upright position."""
        return math.sqrt(self.g / self.l)


@dataclass(frozen=True)
class PendulumState:
    t: float
    phi: float
    p: float


@dataclass(frozen=True)
class IntegratorConfig:
    rtol: float = 1e-10
    atol: float = 1e-12
    h_init: Optional[float] = None
    max_step: float = math.inf
    event_tol: float = 1e-10
    max_steps: int = 1_000_000

    def __post_init__(self):
        if not (self.rtol > 0 and self.atol > 0):
            raise ValueError("rtol and atol must be positive")
        if not self.event_tol > 0:
            raise ValueError("event_tol must be positive")
        if not self.max_step > 0:
            raise ValueError("max_step must be positive")

    def with_(self, **changes) -> "IntegratorConfig":
        return replace(self, **changes)


def rhs(params: PendulumParams, pivot: PivotProfile, s: PendulumState) -> tuple[float, float]:
    """Phase-space velocity ``(phi', p')`` at state ``s``."""
    acc = pivot.d2f(s.t)
    return s.p, (params.g * math.sin(s.phi) - acc * math.cos(s.phi)) / params.l


def jacobian_matrix(params: PendulumParams, pivot: PivotProfile, t: float, phi: float) -> np.ndarray:
    """Linearization ``[[0, 1], [(g cos phi + f'' sin phi)/l, 0]]``."""
    a21 = (params.g * math.cos(phi) + pivot.d2f(t) * math.sin(phi)) / params.l
    return np.array([[0.0, 1.0], [a21, 0.0]])


def variational_rhs(params: PendulumParams, pivot: PivotProfile, s: PendulumState, J):
    """Joint derivative of the state and of the tangent matrix ``J' = A J``."""
    J = np.asarray(J, dtype=float)
    A = jacobian_matrix(params, pivot, s.t, s.phi)
    return rhs(params, pivot, s), A @ J


def energy(params: PendulumParams, phi: float, p: float) -> float:
    """``p^2/2 + (g/l) cos phi``; conserved when the pivot does not accelerate."""
    return 0.5 * p * p + params.g / params.l * math.cos(phi)


def _field(params: PendulumParams, pivot: PivotProfile):
    gl = params.g / params.l
    il = 1.0 / params.l
    d2f = pivot.d2f
    sin, cos = math.sin, math.cos

    def f(t, y):
        phi = y[0]
        return [y[1], gl * sin(phi) - d2f(t) * il * cos(phi)]

    return f


def _variational_field(params: PendulumParams, pivot: PivotProfile):
    gl = params.g / params.l
    il = 1.0 / params.l
    d2f = pivot.d2f
    sin, cos = math.sin, math.cos

    # y = [phi, p, J11, J21, J12, J22]: tangent matrix stored by columns
    def f(t, y):
        acc = d2f(t) * il
        s, c = sin(y[0]), cos(y[0])
        a21 = gl * c + acc * s
        return [y[1], gl * s - acc * c, y[3], a21 * y[2], y[5], a21 * y[4]]

    return f


@dataclass
class Trajectory:
    """Accepted steps with their continuous extensions.

    ``states[i]`` is the full integrated vector at ``times[i]``; the first
    two components are ``(phi, p)``.
    """

    times: list[float]
    states: list[list[float]]
    segments: list = field(repr=False)

    def __len__(self) -> int:
        return len(self.times)

    @property
    def t0(self) -> float:
        return self.times[0]

    @property
    def t_end(self) -> float:
        return self.times[-1]

    @property
    def final(self) -> PendulumState:
        y = self.states[-1]
        return PendulumState(self.times[-1], y[0], y[1])

    def vector_at(self, t: float) -> list[float]:
        if not (self.times[0] <= t <= self.times[-1]):
            raise ValueError(f"t={t} outside [{self.times[0]}, {self.times[-1]}]")
        if len(self.times) == 1:
            return list(self.states[0])
        if t == self.times[-1]:
            return list(self.states[-1])
        return self.segments[_dopri.locate(self.times, t)](t)

    def at(self, t: float) -> PendulumState:
        y = self.vector_at(t)
        return PendulumState(t, y[0], y[1])

    def phase_arrays(self) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        ys = np.asarray(self.states)
        return np.asarray(self.times), ys[:, 0], ys[:, 1]

    def dense_samples(self, per_step: int = 8) -> Iterable[PendulumState]:
        """Step endpoints plus ``per_step - 1`` interior points per step."""
        y = self.states[0]
        yield PendulumState(self.times[0], y[0], y[1])
        for seg, t1, y1 in zip(self.segments, self.times[1:], self.states[1:]):
            t_start = seg.t0
            for k in range(1, per_step):
                t = t_start + (t1 - t_start) * k / per_step
                y = seg(t)
                yield PendulumState(t, y[0], y[1])
            yield PendulumState(t1, y1[0], y1[1])

    def write_csv(self, fh: TextIO, sample_times: Iterable[float] = ()) -> None:
        """Write ``t,phi,p`` rows: every accepted step plus ``sample_times``.

        Floats use the shortest round-trip representation.
        """
        rows = {t: (y[0], y[1]) for t, y in zip(self.times, self.states)}
        for t in sample_times:
            t = float(t)
            if t not in rows:
                y = self.vector_at(t)
                rows[t] = (y[0], y[1])
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["t", "phi", "p"])
        for t in sorted(rows):
            phi, p = rows[t]
            writer.writerow([repr(float(t)), repr(float(phi)), repr(float(p))])

    def to_csv(self, sample_times: Iterable[float] = ()) -> str:
        buf = io.StringIO()
        self.write_csv(buf, sample_times)
        return buf.getvalue()


@dataclass
class IntegrationResult:
    trajectory: Trajectory
    crossing: Optional[PendulumState] = None

    @property
    def final(self) -> PendulumState:
        return self.trajectory.final


def _exit_event(t, y):
    return abs(y[0]) - HALF_PI


def integrate(
    params: PendulumParams,
    pivot: PivotProfile,
    s0: PendulumState,
    t_end: float,
    cfg: Optional[IntegratorConfig] = None,
    watch_exit: bool = False,
) -> IntegrationResult:
    """Integrate from ``s0`` to ``t_end``.

    With ``watch_exit`` the run stops at the first time ``|phi| = pi/2`` is
    reached (localized to ``cfg.event_tol``) and the crossing state is
    returned. A start on the boundary counts as an immediate crossing unless
    the velocity points into the strip.

    Raises
    ------
    IntegrationFailure
        On step-size underflow; ``last_state`` carries the last good point.
    """
    cfg = cfg or IntegratorConfig()
    if not t_end > s0.t:
        raise ValueError(f"t_end={t_end} must exceed start time {s0.t}")
    event = None
    if watch_exit:
        if abs(s0.phi) > HALF_PI:
            raise ValueError("exit watching requires a start inside the strip |phi| <= pi/2")
        if abs(s0.phi) == HALF_PI and s0.p * s0.phi >= 0.0:
            # outward velocity, or zero velocity with outward acceleration +-g/l
            traj = Trajectory([s0.t], [[s0.phi, s0.p]], [])
            return IntegrationResult(traj, s0)
        event = _exit_event
    times, states, segments, hit = _dopri.solve(
        _field(params, pivot),
        s0.t,
        (s0.phi, s0.p),
        t_end,
        cfg.rtol,
        cfg.atol,
        h_init=cfg.h_init,
        max_step=cfg.max_step,
        max_steps=cfg.max_steps,
        event=event,
        event_tol=cfg.event_tol,
    )
    traj = Trajectory(times, states, segments)
    crossing = None
    if hit is not None:
        crossing = PendulumState(hit[0], hit[1][0], hit[1][1])
    return IntegrationResult(traj, crossing)


def integrate_variational(
    params: PendulumParams,
    pivot: PivotProfile,
    x0,
    t0: float,
    T: float,
    cfg: Optional[IntegratorConfig] = None,
) -> Trajectory:
    """Joint integration of the state and the tangent matrix over ``[t0, t0+T]``."""
    cfg = cfg or IntegratorConfig()
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    y0 = (float(x0[0]), float(x0[1]), 1.0, 0.0, 0.0, 1.0)
    times, states, segments, _ = _dopri.solve(
        _variational_field(params, pivot),
        t0,
        y0,
        t0 + T,
        cfg.rtol,
        cfg.atol,
        h_init=cfg.h_init,
        max_step=cfg.max_step,
        max_steps=cfg.max_steps,
    )
    return Trajectory(times, states, segments)


def time_T_map(
    params: PendulumParams,
    pivot: PivotProfile,
    x0,
    t0: float,
    T: float,
    cfg: Optional[IntegratorConfig] = None,
) -> tuple[np.ndarray, np.ndarray]:
    """Advance ``x0 = (phi0, p0)`` from ``t0`` by ``T``.

    Returns the image point and the tangent matrix ``d(phi, p)(t0+T) / d(phi0, p0)``
    obtained from the variational equations.
    """
    y = integrate_variational(params, pivot, x0, t0, T, cfg).states[-1]
    return np.array(y[:2]), np.array([[y[2], y[4]], [y[3], y[5]]])


def flow_map(
    params: PendulumParams,
    pivot: PivotProfile,
    x0,
    t0: float,
    T: float,
    cfg: Optional[IntegratorConfig] = None,
) -> np.ndarray:
    """Image of ``x0`` under the time-``T`` map, without tangent information."""
    s0 = PendulumState(t0, float(x0[0]), float(x0[1]))
    fin = integrate(params, pivot, s0, t0 + T, cfg).final
    return np.array([fin.phi, fin.p])
