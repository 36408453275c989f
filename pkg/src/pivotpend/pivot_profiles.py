"""Prescribed horizontal motion of the pivot point.

Every profile is an analytic family with closed-form derivatives up to the
third order. The dynamics only consume the acceleration ``d2f``; the block
construction for periodic orbits also needs the jerk ``d3f``.
"""

from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field
from fractions import Fraction
from functools import reduce
from typing import Any, Mapping, Sequence

import numpy as np

__all__ = [
    "ANY_PERIOD",
    "ConstantAcceleration",
    "HarmonicSum",
    "HarmonicTerm",
    "IncommensurateWarning",
    "PivotProfile",
    "PivotSample",
    "Polynomial",
    "Zero",
    "eval_pivot",
    "period_of",
    "profile_from_dict",
    "sup_jerk",
]

# rational reconstruction of frequency ratios
RATIO_TOL = 1e-9
MAX_DENOMINATOR = 10**6

# grid parameters for the numerical jerk bound
_MIN_GRID = 4096
_MAX_GRID = 1 << 22
_GRID_SLACK = 1e-7


class _Period(enum.Enum):
    ANY = "any"

    def __repr__(self) -> str:
        return "ANY_PERIOD"


#: Returned by :func:`period_of` for motions that are T-periodic for every T.
ANY_PERIOD = _Period.ANY


class IncommensurateWarning(UserWarning):
    """Harmonic frequencies have no common period within tolerance."""


@dataclass(frozen=True)
class PivotSample:
    f: float
    df: float
    d2f: float
    d3f: float


class PivotProfile:
    """Base class. Subclasses are frozen dataclasses."""

    kind: str = ""

    def sample(self, t: float) -> PivotSample:
        raise NotImplementedError

    def d2f(self, t: float) -> float:
        return self.sample(t).d2f

    def d3f(self, t: float) -> float:
        return self.sample(t).d3f

    def period(self):
        raise NotImplementedError

    def sup_jerk(self, T: float) -> float:
        raise NotImplementedError

    def to_dict(self) -> dict[str, Any]:
        raise NotImplementedError

    def __neg__(self) -> "PivotProfile":
        raise NotImplementedError


@dataclass(frozen=True)
class Zero(PivotProfile):
    kind = "zero"

    def sample(self, t: float) -> PivotSample:
        return PivotSample(0.0, 0.0, 0.0, 0.0)

    def d2f(self, t: float) -> float:
        return 0.0

    def d3f(self, t: float) -> float:
        return 0.0

    def period(self):
        return ANY_PERIOD

    def sup_jerk(self, T: float) -> float:
        return 0.0

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind}

    def __neg__(self) -> "Zero":
        return self


def _horner(coeffs: Sequence[float], t: float) -> float:
    acc = 0.0
    for c in reversed(coeffs):
        acc = acc * t + c
    return acc


def _derivative(coeffs: Sequence[float]) -> tuple[float, ...]:
    return tuple(k * c for k, c in enumerate(coeffs) if k > 0)


@dataclass(frozen=True)
class Polynomial(PivotProfile):
    """``f(t) = c0 + c1 t + ... + cn t^n``."""

    coefficients: tuple[float, ...]
    _derivs: tuple = field(init=False, repr=False, compare=False)

    kind = "polynomial"

    def __post_init__(self):
        c0 = tuple(float(c) for c in self.coefficients) or (0.0,)
        object.__setattr__(self, "coefficients", c0)
        c1 = _derivative(c0)
        c2 = _derivative(c1)
        c3 = _derivative(c2)
        object.__setattr__(self, "_derivs", (c0, c1, c2, c3))

    @property
    def degree(self) -> int:
        nz = [k for k, c in enumerate(self.coefficients) if c != 0.0]
        return nz[-1] if nz else 0

    def sample(self, t: float) -> PivotSample:
        c0, c1, c2, c3 = self._derivs
        return PivotSample(_horner(c0, t), _horner(c1, t), _horner(c2, t), _horner(c3, t))

    def d2f(self, t: float) -> float:
        return _horner(self._derivs[2], t)

    def d3f(self, t: float) -> float:
        return _horner(self._derivs[3], t)

    def period(self):
        return ANY_PERIOD if self.degree == 0 else None

    def sup_jerk(self, T: float) -> float:
        jerk = self._derivs[3]
        if not any(jerk):
            return 0.0
        candidates = [0.0, float(T)]
        dj = np.polynomial.Polynomial(_derivative(jerk) or (0.0,))
        if dj.degree() >= 1:
            for r in dj.roots():
                if abs(r.imag) <= 1e-9 * (1.0 + abs(r.real)) and 0.0 < r.real < T:
                    x = r.real
                    # one Newton polish on the real root
                    d2 = dj.deriv()(x)
                    if d2 != 0.0:
                        x -= dj(x) / d2
                    candidates.append(min(max(x, 0.0), float(T)))
        return max(abs(_horner(jerk, x)) for x in candidates)

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "coefficients": list(self.coefficients)}

    def __neg__(self) -> "Polynomial":
        return Polynomial(tuple(-c for c in self.coefficients))


@dataclass(frozen=True)
class HarmonicTerm:
    """``amplitude * sin(omega * t + phase)``."""

    amplitude: float
    omega: float
    phase: float = 0.0

    def to_dict(self) -> dict[str, float]:
        return {"amplitude": self.amplitude, "omega": self.omega, "phase": self.phase}


def _commensurate_ratio(ratio: float):
    """First continued-fraction convergent ``p/q`` with ``|q ratio - p| <= RATIO_TOL``.

    The mismatch is measured in cycles accumulated over ``q`` periods of the
    reference term, which is what a claimed common period has to respect.
    Returns ``None`` when no convergent with ``q <= MAX_DENOMINATOR`` qualifies.
    """
    exact = Fraction(ratio)
    h0, h1, k0, k1 = 0, 1, 1, 0
    x = exact
    while True:
        a = x.numerator // x.denominator
        h0, h1 = h1, a * h1 + h0
        k0, k1 = k1, a * k1 + k0
        if k1 > MAX_DENOMINATOR:
            return None
        if abs(k1 * ratio - h1) <= RATIO_TOL:
            return Fraction(h1, k1)
        rest = x - a
        if rest == 0:
            return Fraction(h1, k1)
        x = 1 / rest


def _as_term(t) -> HarmonicTerm:
    if isinstance(t, HarmonicTerm):
        return t
    if isinstance(t, Mapping):
        return HarmonicTerm(**t)
    return HarmonicTerm(*t)


@dataclass(frozen=True)
class HarmonicSum(PivotProfile):
    terms: tuple[HarmonicTerm, ...]

    kind = "harmonic_sum"

    def __post_init__(self):
        terms = tuple(_as_term(t) for t in self.terms)
        object.__setattr__(self, "terms", terms)

    @classmethod
    def single(cls, amplitude: float, omega: float, phase: float = 0.0) -> "HarmonicSum":
        return cls((HarmonicTerm(amplitude, omega, phase),))

    def sample(self, t: float) -> PivotSample:
        f = df = d2f = d3f = 0.0
        for term in self.terms:
            a, w = term.amplitude, term.omega
            arg = w * t + term.phase
            s, c = math.sin(arg), math.cos(arg)
            f += a * s
            df += a * w * c
            d2f -= a * w * w * s
            d3f -= a * w * w * w * c
        return PivotSample(f, df, d2f, d3f)

    def d2f(self, t: float) -> float:
        acc = 0.0
        for term in self.terms:
            w = term.omega
            acc -= term.amplitude * w * w * math.sin(w * t + term.phase)
        return acc

    def d3f(self, t: float) -> float:
        acc = 0.0
        for term in self.terms:
            w = term.omega
            acc -= term.amplitude * w * w * w * math.cos(w * t + term.phase)
        return acc

    def _active(self) -> list[HarmonicTerm]:
        return [t for t in self.terms if t.amplitude != 0.0 and t.omega != 0.0]

    def period(self):
        active = self._active()
        if not active:
            return ANY_PERIOD
        w_ref = abs(active[0].omega)
        fracs = []
        for term in active:
            frac = _commensurate_ratio(abs(term.omega) / w_ref)
            if frac is None:
                warnings.warn(
                    f"frequencies {w_ref} and {abs(term.omega)} are incommensurate",
                    IncommensurateWarning,
                    stacklevel=3,
                )
                return None
            fracs.append(frac)
        lcm_den = reduce(math.lcm, (f.denominator for f in fracs), 1)
        multiples = [f.numerator * (lcm_den // f.denominator) for f in fracs]
        g = reduce(math.gcd, multiples)
        return 2.0 * math.pi * lcm_den / (w_ref * g)

    def _jerk_array(self, t: np.ndarray) -> np.ndarray:
        acc = np.zeros_like(t)
        for term in self.terms:
            w = term.omega
            acc -= term.amplitude * w**3 * np.cos(w * t + term.phase)
        return acc

    def sup_jerk(self, T: float) -> float:
        active = self._active()
        if not active:
            return 0.0
        if len(active) == 1 and T >= math.pi / abs(active[0].omega):
            term = active[0]
            return abs(term.amplitude) * abs(term.omega) ** 3
        # grid maximum plus the second-order gap bound near an interior maximum
        curv = sum(abs(t.amplitude) * abs(t.omega) ** 5 for t in active)
        coarse = np.linspace(0.0, T, _MIN_GRID)
        peak = float(np.max(np.abs(self._jerk_array(coarse))))
        n = _MIN_GRID
        if peak > 0.0:
            h_needed = math.sqrt(8.0 * _GRID_SLACK * peak / curv)
            n = min(_MAX_GRID, max(_MIN_GRID, math.ceil(T / h_needed) + 1))
        grid = np.linspace(0.0, T, n)
        h = T / (n - 1)
        return float(np.max(np.abs(self._jerk_array(grid)))) + curv * h * h / 8.0

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "terms": [t.to_dict() for t in self.terms]}

    def __neg__(self) -> "HarmonicSum":
        return HarmonicSum(
            tuple(HarmonicTerm(-t.amplitude, t.omega, t.phase) for t in self.terms)
        )


@dataclass(frozen=True)
class ConstantAcceleration(PivotProfile):
    """``f(t) = a t^2 / 2``."""

    a: float

    kind = "constant_acceleration"

    def sample(self, t: float) -> PivotSample:
        a = self.a
        return PivotSample(0.5 * a * t * t, a * t, a, 0.0)

    def d2f(self, t: float) -> float:
        return self.a

    def d3f(self, t: float) -> float:
        return 0.0

    def period(self):
        return ANY_PERIOD if self.a == 0.0 else None

    def sup_jerk(self, T: float) -> float:
        return 0.0

    def to_dict(self) -> dict[str, Any]:
        return {"kind": self.kind, "a": self.a}

    def __neg__(self) -> "ConstantAcceleration":
        return ConstantAcceleration(-self.a)


def eval_pivot(profile: PivotProfile, t: float) -> PivotSample:
    """Exact ``(f, f', f'', f''')`` at time ``t``."""
    return profile.sample(float(t))


def period_of(profile: PivotProfile):
    """Fundamental period of the pivot motion.

    Returns
    -------
    float, ANY_PERIOD or None
        ``ANY_PERIOD`` when the motion is periodic for every ``T`` (no
        oscillating part), ``None`` when aperiodic. Incommensurate harmonic
        frequencies additionally emit :class:`IncommensurateWarning`.
    """
    return profile.period()


def sup_jerk(profile: PivotProfile, T: float) -> float:
    """Upper bound on ``sup |f'''(t)|`` over ``[0, T]``."""
    if not T > 0:
        raise ValueError(f"interval length must be positive, got {T}")
    return profile.sup_jerk(float(T))


def profile_from_dict(decl: Mapping[str, Any]) -> PivotProfile:
    kind = decl.get("kind")
    if kind == "zero":
        return Zero()
    if kind == "polynomial":
        return Polynomial(tuple(decl.get("coefficients", ())))
    if kind == "harmonic_sum":
        return HarmonicSum(tuple(HarmonicTerm(**t) for t in decl.get("terms", ())))
    if kind == "constant_acceleration":
        return ConstantAcceleration(float(decl["a"]))
    raise ValueError(f"unknown pivot kind {kind!r}")
