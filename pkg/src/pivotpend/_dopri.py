"""Dormand-Prince 5(4) stepper with the order-4 continuous extension.

Scalar lists are used instead of numpy arrays: the systems here have two or
six components, where per-operation numpy overhead dominates.
"""

from __future__ import annotations

import math
from bisect import bisect_right
from typing import Callable, Optional, Sequence

from pivotpend.errors import IntegrationFailure

Vector = list

C2, C3, C4, C5 = 1 / 5, 3 / 10, 4 / 5, 8 / 9
A21 = 1 / 5
A31, A32 = 3 / 40, 9 / 40
A41, A42, A43 = 44 / 45, -56 / 15, 32 / 9
A51, A52, A53, A54 = 19372 / 6561, -25360 / 2187, 64448 / 6561, -212 / 729
A61, A62, A63, A64, A65 = 9017 / 3168, -355 / 33, 46732 / 5247, 49 / 176, -5103 / 18656
B1, B3, B4, B5, B6 = 35 / 384, 500 / 1113, 125 / 192, -2187 / 6784, 11 / 84
E1, E3, E4, E5, E6, E7 = 71 / 57600, -71 / 16695, 71 / 1920, -17253 / 339200, 22 / 525, -1 / 40
D1 = -12715105075 / 11282082432
D3 = 87487479700 / 32700410799
D4 = -10690763975 / 1880347072
D5 = 701980252875 / 199316789632
D6 = -1453857185 / 822651844
D7 = 69997945 / 29380423

SAFETY = 0.9
FAC_MIN = 0.2
FAC_MAX = 10.0
UNDERFLOW = 1e-14


class DenseSegment:
    """Continuous extension over one accepted step ``[t0, t0 + h]``."""

    __slots__ = ("t0", "h", "r1", "r2", "r3", "r4", "r5")

    def __init__(self, t0, h, r1, r2, r3, r4, r5):
        self.t0, self.h = t0, h
        self.r1, self.r2, self.r3, self.r4, self.r5 = r1, r2, r3, r4, r5

    def __call__(self, t: float) -> Vector:
        th = (t - self.t0) / self.h
        th1 = 1.0 - th
        return [
            a + th * (b + th1 * (c + th * (d + th1 * e)))
            for a, b, c, d, e in zip(self.r1, self.r2, self.r3, self.r4, self.r5)
        ]


def _rms(vals: Sequence[float]) -> float:
    return math.sqrt(sum(v * v for v in vals) / len(vals))


def _initial_step(fun, t0, y0, f0, rtol, atol, span):
    sc = [atol + rtol * abs(v) for v in y0]
    d0 = _rms([v / s for v, s in zip(y0, sc)])
    d1 = _rms([v / s for v, s in zip(f0, sc)])
    h0 = 1e-6 if d0 < 1e-5 or d1 < 1e-5 else 0.01 * d0 / d1
    h0 = min(h0, span)
    y1 = [v + h0 * dv for v, dv in zip(y0, f0)]
    f1 = fun(t0 + h0, y1)
    d2 = _rms([(a - b) / s for a, b, s in zip(f1, f0, sc)]) / h0
    if max(d1, d2) <= 1e-15:
        h1 = max(1e-6, h0 * 1e-3)
    else:
        h1 = (0.01 / max(d1, d2)) ** 0.2
    return min(100.0 * h0, h1, span)


def solve(
    fun: Callable[[float, Vector], Vector],
    t0: float,
    y0: Sequence[float],
    t_end: float,
    rtol: float,
    atol: float,
    h_init: Optional[float] = None,
    max_step: float = math.inf,
    max_steps: int = 1_000_000,
    event: Optional[Callable[[float, Vector], float]] = None,
    event_tol: float = 1e-10,
):
    """Integrate ``y' = fun(t, y)`` from ``t0`` to ``t_end``.

    ``event`` is watched for a transition from negative to non-negative
    between step endpoints; the crossing is then localized by bisection on
    the dense output to ``event_tol``.

    Returns ``(times, states, segments, hit)`` where ``hit`` is ``None`` or
    the ``(t, y)`` pair of the first event.
    """
    span = t_end - t0
    y = [float(v) for v in y0]
    t = float(t0)
    times, states, segments = [t], [y], []
    k1 = fun(t, y)
    h = h_init if h_init else _initial_step(fun, t, y, k1, rtol, atol, span)
    h = min(h, max_step)
    g_old = event(t, y) if event is not None else None
    n = len(y)
    rng = range(n)
    last_rejected = False
    steps = 0

    while t < t_end:
        if steps >= max_steps:
            raise IntegrationFailure(f"step budget exhausted at t={t!r}", (t, y))
        final = t + h >= t_end
        if final:
            h = t_end - t
        y2 = [y[i] + h * A21 * k1[i] for i in rng]
        k2 = fun(t + C2 * h, y2)
        y3 = [y[i] + h * (A31 * k1[i] + A32 * k2[i]) for i in rng]
        k3 = fun(t + C3 * h, y3)
        y4 = [y[i] + h * (A41 * k1[i] + A42 * k2[i] + A43 * k3[i]) for i in rng]
        k4 = fun(t + C4 * h, y4)
        y5 = [y[i] + h * (A51 * k1[i] + A52 * k2[i] + A53 * k3[i] + A54 * k4[i]) for i in rng]
        k5 = fun(t + C5 * h, y5)
        y6 = [
            y[i] + h * (A61 * k1[i] + A62 * k2[i] + A63 * k3[i] + A64 * k4[i] + A65 * k5[i])
            for i in rng
        ]
        t_new = t_end if final else t + h
        k6 = fun(t_new, y6)
        y_new = [
            y[i] + h * (B1 * k1[i] + B3 * k3[i] + B4 * k4[i] + B5 * k5[i] + B6 * k6[i])
            for i in rng
        ]
        k7 = fun(t_new, y_new)
        err = 0.0
        for i in rng:
            sc = atol + rtol * max(abs(y[i]), abs(y_new[i]))
            e = h * (E1 * k1[i] + E3 * k3[i] + E4 * k4[i] + E5 * k5[i] + E6 * k6[i] + E7 * k7[i])
            err += (e / sc) ** 2
        err = math.sqrt(err / n)

        if err > 1.0:
            h *= max(FAC_MIN, SAFETY * err ** -0.2)
            last_rejected = True
            if h < UNDERFLOW * span:
                raise IntegrationFailure(f"step size underflow at t={t!r}", (t, y))
            continue

        steps += 1
        r2 = [y_new[i] - y[i] for i in rng]
        r3 = [h * k1[i] - r2[i] for i in rng]
        r4 = [r2[i] - h * k7[i] - r3[i] for i in rng]
        r5 = [
            h * (D1 * k1[i] + D3 * k3[i] + D4 * k4[i] + D5 * k5[i] + D6 * k6[i] + D7 * k7[i])
            for i in rng
        ]
        seg = DenseSegment(t, h, y, r2, r3, r4, r5)

        if event is not None:
            g_new = event(t_new, y_new)
            if g_old < 0.0 <= g_new:
                lo, hi = t, t_new
                while hi - lo > event_tol:
                    mid = 0.5 * (lo + hi)
                    if mid <= lo or mid >= hi:
                        break
                    if event(mid, seg(mid)) < 0.0:
                        lo = mid
                    else:
                        hi = mid
                y_hit = seg(hi) if hi < t_new else y_new
                times.append(hi)
                states.append(y_hit)
                segments.append(seg)
                return times, states, segments, (hi, y_hit)
            g_old = g_new

        times.append(t_new)
        states.append(y_new)
        segments.append(seg)
        t, y, k1 = t_new, y_new, k7

        fac = FAC_MAX if err == 0.0 else SAFETY * err ** -0.2
        fac = min(fac, 1.0 if last_rejected else FAC_MAX)
        h = min(h * max(fac, FAC_MIN), max_step)
        last_rejected = False

    return times, states, segments, None


def locate(times: Sequence[float], t: float) -> int:
    """Index of the dense segment covering ``t``."""
    i = bisect_right(times, t) - 1
    return min(max(i, 0), len(times) - 2)
