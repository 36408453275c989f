"""Escape map from the strip ``|phi| <= pi/2`` and bisection shooting.

Starting from rest (``p0 = 0``), initial angles near ``-pi/2`` fall to the
left and those near ``+pi/2`` fall to the right. Because every exit through
the lines ``phi = +-pi/2`` is either transverse or a tangency pushed outward
by ``phi'' = +-g/l``, the escape side depends continuously on ``phi0`` and a
bisection on it traps an initial angle that does not fall.
"""

from __future__ import annotations

import enum
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Optional, Sequence, Union

from pivotpend.dynamics import (
    HALF_PI,
    IntegratorConfig,
    PendulumParams,
    PendulumState,
    integrate,
    rhs,
)
from pivotpend.errors import BracketViolation
from pivotpend.pivot_profiles import PivotProfile

__all__ = [
    "BoundaryClass",
    "Exited",
    "GRAZING_TOL",
    "Side",
    "Survived",
    "SurvivalCertificate",
    "classify_boundary",
    "escape_map",
    "escape_profile",
    "eventual_side",
    "find_nonfalling",
]

GRAZING_TOL = 1e-9
BRACKET_MARGIN = 1e-6


class Side(str, enum.Enum):
    LEFT = "Left"
    RIGHT = "Right"

    @property
    def sign(self) -> int:
        return 1 if self is Side.RIGHT else -1

    @property
    def phi(self) -> float:
        return self.sign * HALF_PI


class BoundaryClass(str, enum.Enum):
    TRANSVERSE_EXIT = "TransverseExit"
    ENTRY = "Entry"
    TANGENT_EXIT = "TangentExit"

    @property
    def is_exit(self) -> bool:
        return self is not BoundaryClass.ENTRY


def classify_boundary(
    params: PendulumParams,
    pivot: PivotProfile,
    t: float,
    side: Side,
    p: float,
    grazing_tol: float = 0.0,
) -> BoundaryClass:
    """Behaviour of the flow at the boundary point ``(t, side.phi, p)``.

    On the right line the sign of ``p`` decides directly; for ``|p| <=
    grazing_tol`` the acceleration ``phi'' = p'`` decides, and it equals
    ``+-g/l`` there whatever the pivot does. The left line is mirrored.
    """
    side = Side(side)
    outward = side.sign * p
    if abs(p) <= grazing_tol:
        _, acc = rhs(params, pivot, PendulumState(t, side.phi, 0.0))
        if side.sign * acc > 0.0:
            return BoundaryClass.TANGENT_EXIT
        return BoundaryClass.ENTRY
    return BoundaryClass.TRANSVERSE_EXIT if outward > 0.0 else BoundaryClass.ENTRY


@dataclass(frozen=True)
class Exited:
    t_star: float
    state: PendulumState
    side: Side
    boundary_class: BoundaryClass

    survived = False


@dataclass(frozen=True)
class Survived:
    horizon: float
    final_state: PendulumState

    survived = True
    side = None


EscapeResult = Union[Exited, Survived]


def escape_map(
    params: PendulumParams,
    pivot: PivotProfile,
    phi0: float,
    p0: float = 0.0,
    horizon: Optional[float] = None,
    cfg: Optional[IntegratorConfig] = None,
    t0: float = 0.0,
) -> EscapeResult:
    """First boundary point reached from ``(t0, phi0, p0)`` within the horizon.

    ``horizon`` is a duration measured from ``t0`` and defaults to
    ``10 sqrt(l/g)``.
    """
    if not abs(phi0) <= HALF_PI:
        raise ValueError(f"phi0={phi0} outside [-pi/2, pi/2]")
    if horizon is None:
        horizon = 10.0 / params.rate
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    res = integrate(params, pivot, PendulumState(t0, phi0, p0), t0 + horizon, cfg, watch_exit=True)
    hit = res.crossing
    if hit is None:
        return Survived(horizon, res.final)
    side = Side.RIGHT if hit.phi > 0 else Side.LEFT
    cls = classify_boundary(params, pivot, hit.t, side, hit.p, GRAZING_TOL)
    return Exited(hit.t, hit, side, cls)


def eventual_side(
    params: PendulumParams,
    pivot: PivotProfile,
    result: EscapeResult,
    extension: float,
    cfg: Optional[IntegratorConfig] = None,
) -> Side:
    """Escape side, continuing a survivor past its horizon if necessary.

    A survivor is integrated for up to ``extension`` more seconds. If it is
    still inside, the side is read off the sign of its offset from the
    instantaneous equilibrium angle; an exact tie counts as ``RIGHT``.
    """
    if isinstance(result, Exited):
        return result.side
    s = result.final_state
    ext = escape_map(params, pivot, s.phi, s.p, extension, cfg, t0=s.t)
    if isinstance(ext, Exited):
        return ext.side
    fin = ext.final_state
    offset = fin.phi - math.atan2(pivot.d2f(fin.t), params.g)
    return Side.LEFT if offset < 0.0 else Side.RIGHT


@dataclass
class SurvivalCertificate:
    """Outcome of the bisection on the initial angle.

    ``phi_lo`` falls left and ``phi_hi`` falls right (after continuing
    survivors past the horizon). ``witness_phi`` either survives the full
    horizon (``witness_survived``) or is the final midpoint, in which case
    its escape time is ``witness_escape_time``.
    """

    phi_lo: float
    phi_hi: float
    witness_phi: float
    horizon: float
    bisection_steps: int
    witness_survived: bool
    witness_escape_time: Optional[float] = None
    p0: float = 0.0
    escape_profile: list = field(default_factory=list, repr=False)

    @property
    def width(self) -> float:
        return self.phi_hi - self.phi_lo

    def to_dict(self) -> dict:
        return {
            "phi_lo": self.phi_lo,
            "phi_hi": self.phi_hi,
            "witness_phi": self.witness_phi,
            "horizon": self.horizon,
            "witness_survived": self.witness_survived,
            "witness_escape_time": self.witness_escape_time,
            "bisection_steps": self.bisection_steps,
            "p0": self.p0,
            "escape_profile": self.escape_profile,
        }


def _probe_record(phi0: float, res: EscapeResult) -> dict:
    if isinstance(res, Exited):
        return {"phi0": phi0, "side": res.side.value, "t_star": res.t_star}
    return {"phi0": phi0, "side": "Survived", "t_star": None}


def find_nonfalling(
    params: PendulumParams,
    pivot: PivotProfile,
    horizon: Optional[float] = None,
    tol_phi: float = 1e-10,
    cfg: Optional[IntegratorConfig] = None,
    p0: float = 0.0,
    extension: Optional[float] = None,
) -> SurvivalCertificate:
    """Bisect on ``phi0`` (at fixed ``p0``) for a solution that does not fall.

    The bracket starts at ``[-pi/2 + 1e-6, pi/2 - 1e-6]``. Each step halves
    it, keeping a left-falling lower end and a right-falling upper end, until
    the width is at most ``tol_phi``. Probes that survive the horizon are
    continued for ``extension`` seconds (default ``max(horizon, 40
    sqrt(l/g))``) to decide which way they lean.

    Only ``p0 = 0`` has the topological guarantee; other values are allowed
    but the bracket check may then legitimately fail.

    Raises
    ------
    BracketViolation
        Both initial ends fall to the same side.
    """
    if horizon is None:
        horizon = 10.0 / params.rate
    if not horizon > 0:
        raise ValueError(f"horizon must be positive, got {horizon}")
    if not tol_phi > 0:
        raise ValueError(f"tol_phi must be positive, got {tol_phi}")
    if extension is None:
        extension = max(horizon, 40.0 / params.rate)

    probes: dict[float, EscapeResult] = {}

    def probe(phi: float) -> Side:
        res = escape_map(params, pivot, phi, p0, horizon, cfg)
        probes[phi] = res
        return eventual_side(params, pivot, res, extension, cfg)

    lo, hi = -HALF_PI + BRACKET_MARGIN, HALF_PI - BRACKET_MARGIN
    side_lo, side_hi = probe(lo), probe(hi)
    if side_lo is side_hi or side_lo is not Side.LEFT:
        raise BracketViolation(
            f"bracket ends fall {side_lo.value}/{side_hi.value}; expected Left/Right"
        )

    steps = 0
    while hi - lo > tol_phi:
        mid = 0.5 * (lo + hi)
        if not lo < mid < hi:
            break
        if probe(mid) is Side.LEFT:
            lo = mid
        else:
            hi = mid
        steps += 1

    mid = 0.5 * (lo + hi)
    res_mid = probes.get(mid) or escape_map(params, pivot, mid, p0, horizon, cfg)
    probes[mid] = res_mid
    witness, survived, t_esc = mid, res_mid.survived, None
    if not survived:
        for cand in (lo, hi):
            if probes[cand].survived:
                witness, survived = cand, True
                break
        else:
            t_esc = res_mid.t_star

    profile = [_probe_record(phi, probes[phi]) for phi in sorted(probes)]
    return SurvivalCertificate(
        phi_lo=lo,
        phi_hi=hi,
        witness_phi=witness,
        horizon=horizon,
        bisection_steps=steps,
        witness_survived=survived,
        witness_escape_time=t_esc,
        p0=p0,
        escape_profile=profile,
    )


def _escape_job(args):
    params, pivot, phi0, p0, horizon, cfg = args
    return escape_map(params, pivot, phi0, p0, horizon, cfg)


def escape_profile(
    params: PendulumParams,
    pivot: PivotProfile,
    phis: Sequence[float],
    p0: float = 0.0,
    horizon: Optional[float] = None,
    cfg: Optional[IntegratorConfig] = None,
    workers: int = 1,
) -> list[EscapeResult]:
    """Escape results over a grid of initial angles, in input order."""
    jobs = [(params, pivot, float(phi), p0, horizon, cfg) for phi in phis]
    if workers <= 1 or len(jobs) < 2:
        return [_escape_job(j) for j in jobs]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(_escape_job, jobs, chunksize=max(1, len(jobs) // (4 * workers))))
