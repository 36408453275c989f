"""Periodic orbits that never fall, for a periodically moving pivot.

The block is the product ``W = [0, T] x [-pi/2, pi/2] x [-p', p']``. Its
essential exit set consists of two disjoint arcs in every time section,

* ``phi = pi/2, 0 <= p <= p'`` joined to ``p = p', phi*(t) <= phi <= pi/2``
* ``phi = -pi/2, -p' <= p <= 0`` joined to ``p = -p', -pi/2 <= phi <= phi*(t)``

where ``phi*(t) = atan(f''(t)/g)`` is the angle at which ``p' = 0``. The
section is a disk and the exit set has Euler characteristic 2, so the
fixed-point index of the period map on the admissible set is ``1 - 2 = -1``
and a fixed point must exist. Here that fixed point is computed by Newton's
method and the index is checked independently as a winding number.
"""

from __future__ import annotations

import math
from concurrent.futures import Executor, ProcessPoolExecutor
from contextlib import nullcontext
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from pivotpend.dynamics import (
    HALF_PI,
    IntegratorConfig,
    PendulumParams,
    Trajectory,
    flow_map,
    integrate_variational,
    time_T_map,
)
from pivotpend.errors import (
    AperiodicPivot,
    ConvergedOutsideU,
    FixedPointOnBoundary,
    NoConvergence,
    NonConvergentRefinement,
    ValidationError,
)
from pivotpend.pivot_profiles import ANY_PERIOD, PivotProfile, period_of, sup_jerk

__all__ = [
    "IndexConfig",
    "IndexResult",
    "NewtonConfig",
    "PeriodicOrbit",
    "PeriodicSegment",
    "SegmentReport",
    "build_segment",
    "equilibrium_angle",
    "euler_characteristic_index",
    "find_periodic_orbit",
    "fixed_point_index",
    "index_from_exit_mask",
    "p_second_derivative",
    "validate_segment",
]

PERIOD_RTOL = 1e-9
CONTAINMENT_TOL = 1e-9
TANGENCY_SKIP = 1e-9


def equilibrium_angle(pivot: PivotProfile, t: float, g: float) -> float:
    """Root of ``g sin(phi) - f''(t) cos(phi) = 0`` in ``(-pi/2, pi/2)``."""
    if not g > 0:
        raise ValueError(f"g must be positive, got {g}")
    return math.atan(pivot.d2f(t) / g)


def p_second_derivative(params: PendulumParams, pivot: PivotProfile, t: float, phi: float, p: float) -> float:
    """``p''`` along the flow at a point where ``p' = 0``.

    Differentiating ``p' = (g sin phi - f'' cos phi)/l`` gives
    ``-(f'''/l) cos phi + ((g cos phi + f'' sin phi)/l) p``.
    """
    acc, jerk = pivot.d2f(t), pivot.d3f(t)
    s, c = math.sin(phi), math.cos(phi)
    return (-jerk * c + (params.g * c + acc * s) * p) / params.l


@dataclass(frozen=True)
class PeriodicSegment:
    T: float
    p_prime: float
    params: PendulumParams
    pivot: PivotProfile

    def phi_star(self, t: float) -> float:
        return equilibrium_angle(self.pivot, t, self.params.g)

    def contains(self, phi: float, p: float, inset: float = 0.0) -> bool:
        """Membership in the open rectangle shrunk by ``inset``."""
        return abs(phi) < HALF_PI - inset and abs(p) < self.p_prime - inset

    @property
    def rectangle(self) -> tuple[float, float, float, float]:
        return (-HALF_PI, HALF_PI, -self.p_prime, self.p_prime)


def build_segment(
    params: PendulumParams,
    pivot: PivotProfile,
    T: float,
    safety: float = 1.1,
    p_floor: Optional[float] = None,
) -> PeriodicSegment:
    """Block over one period with ``p' = max(safety * sup|f'''| / g, p_floor)``.

    ``p_floor`` defaults to ``sqrt(g/l)``; it matters only when the jerk bound
    is small, since any positive ``p'`` makes a valid block for a jerk-free
    pivot.

    Raises
    ------
    AperiodicPivot
        The pivot's period does not divide ``T``.
    """
    if not T > 0:
        raise ValueError(f"T must be positive, got {T}")
    if not safety > 1.0:
        raise ValueError(f"safety factor must exceed 1 (strict bound), got {safety}")
    if p_floor is None:
        p_floor = params.rate
    period = period_of(pivot)
    if period is None:
        raise AperiodicPivot(f"{pivot!r} is not periodic")
    if period is not ANY_PERIOD:
        ratio = T / period
        k = round(ratio)
        if k < 1 or abs(ratio - k) > PERIOD_RTOL * ratio:
            raise AperiodicPivot(f"pivot period {period} does not divide T={T}")
    bound = safety * sup_jerk(pivot, T) / params.g
    return PeriodicSegment(float(T), max(bound, float(p_floor)), params, pivot)


@dataclass
class SegmentReport:
    """Sign margins of the flow on the faces of a block.

    Exit and entry margins are rates of crossing per unit distance from the
    tangency locus of the face: ``phi'/|p|`` on the faces ``phi = +-pi/2``
    and ``l p' / (g (phi - phi*))`` on the faces ``p = +-p'``. Tangency
    margins are ``+p''`` at ``(phi*, p')``, ``-p''`` at ``(phi*, -p')`` and
    the outward ``phi''`` at ``(+-pi/2, 0)``. Positive means the required
    sign holds.
    """

    grid_n: int
    min_exit_margin: float
    min_entry_margin: float
    tangency_margins: dict
    face_margins: dict = field(default_factory=dict)

    @property
    def valid(self) -> bool:
        vals = [self.min_exit_margin, self.min_entry_margin, *self.tangency_margins.values()]
        return all(v > 0.0 for v in vals)

    def to_dict(self) -> dict:
        return {
            "grid_n": self.grid_n,
            "min_exit_margin": self.min_exit_margin,
            "min_entry_margin": self.min_entry_margin,
            "tangency_margins": dict(self.tangency_margins),
            "face_margins": dict(self.face_margins),
            "valid": self.valid,
        }


def _masked_min(values: np.ndarray, mask: np.ndarray) -> float:
    return float(values[mask].min()) if mask.any() else math.inf


def validate_segment(segment: PeriodicSegment, grid_n: int = 512) -> SegmentReport:
    """Sample the four faces of the block on a ``grid_n x grid_n`` grid."""
    if grid_n < 64:
        raise ValueError(f"grid_n must be at least 64, got {grid_n}")
    prm, piv, pp = segment.params, segment.pivot, segment.p_prime
    g, l = prm.g, prm.l
    ts = np.linspace(0.0, segment.T, grid_n)
    acc = np.array([piv.d2f(t) for t in ts])
    jerk = np.array([piv.d3f(t) for t in ts])
    star = np.arctan(acc / g)

    # side faces phi = +-pi/2: phi' = p independent of t
    ps = np.linspace(-pp, pp, grid_n)
    nz = np.abs(ps) > 0.0
    face = {}
    for name, sign in (("right", 1.0), ("left", -1.0)):
        outward = sign * ps  # rate phi' = p projected on the outward normal
        ratio = np.where(nz, outward / np.where(nz, np.abs(ps), 1.0), 0.0)
        exit_part = nz & (sign * ps > 0)
        entry_part = nz & (sign * ps < 0)
        face[f"{name}_exit"] = _masked_min(ratio, exit_part)
        face[f"{name}_entry"] = _masked_min(-ratio, entry_part)

    # top/bottom faces p = +-p': p' = (g sin phi - f'' cos phi)/l
    phis = np.linspace(-HALF_PI, HALF_PI, grid_n)
    dp = (g * np.sin(phis)[None, :] - acc[:, None] * np.cos(phis)[None, :]) / l
    off = phis[None, :] - star[:, None]
    away = np.abs(off) > TANGENCY_SKIP
    scaled = np.where(away, l * dp / (g * np.where(away, off, 1.0)), 0.0)
    for name, sign in (("top", 1.0), ("bottom", -1.0)):
        # exit portion lies on the side of phi* where sign * p' > 0
        exit_part = away & (sign * off > 0)
        entry_part = away & (sign * off < 0)
        face[f"{name}_exit"] = _masked_min(scaled, exit_part)
        face[f"{name}_entry"] = _masked_min(scaled, entry_part)

    cs, sn = np.cos(star), np.sin(star)
    pdd_top = (-jerk * cs + (g * cs + acc * sn) * pp) / l
    pdd_bot = (-jerk * cs - (g * cs + acc * sn) * pp) / l
    corner_r = (g * np.sin(HALF_PI) - acc * np.cos(HALF_PI)) / l
    corner_l = -(g * np.sin(-HALF_PI) - acc * np.cos(-HALF_PI)) / l
    tangency = {
        "upper": float(pdd_top.min()),
        "lower": float((-pdd_bot).min()),
        "corners": float(min(corner_r.min(), corner_l.min())),
    }
    exits = [v for k, v in face.items() if k.endswith("_exit")]
    entries = [v for k, v in face.items() if k.endswith("_entry")]
    return SegmentReport(grid_n, min(exits), min(entries), tangency, face)


def index_from_exit_mask(mask: Sequence[bool]) -> int:
    """``chi(disk) - chi(exit set)`` for an exit set given along the boundary.

    ``mask`` flags exit points of a cyclic sampling of the section boundary.
    Each maximal run is an arc (``chi = 1``); the whole circle has ``chi = 0``.
    """
    mask = [bool(m) for m in mask]
    chi_disk = 4 - 4 + 1  # vertices - edges + faces of the rectangle
    if not mask or not any(mask):
        return chi_disk
    if all(mask):
        return chi_disk - 0
    arcs = sum(1 for i, m in enumerate(mask) if m and not mask[i - 1])
    return chi_disk - arcs


def _is_exit_point(segment: PeriodicSegment, t: float, phi: float, p: float, faces) -> bool:
    prm, piv = segment.params, segment.pivot
    acc = piv.d2f(t)
    dphi = p
    dp = (prm.g * math.sin(phi) - acc * math.cos(phi)) / prm.l
    scale = 1e-12 * (prm.g / prm.l) * (1.0 + segment.p_prime)
    for face in faces:
        if face in ("right", "left"):
            sign = 1.0 if face == "right" else -1.0
            rate, second = sign * dphi, sign * dp
        else:
            sign = 1.0 if face == "top" else -1.0
            rate = sign * dp
            second = sign * p_second_derivative(prm, piv, t, phi, p)
        if rate > scale or (abs(rate) <= scale and second > 0.0):
            return True
    return False


def _section_boundary(segment: PeriodicSegment, t: float, n: int):
    """Counterclockwise samples ``(phi, p, faces)`` of the section boundary."""
    pp = segment.p_prime
    star = segment.phi_star(t)
    edge = [k / n for k in range(n)]
    pts = []
    # bottom edge, left to right, with phi* inserted
    phis = sorted(set([-HALF_PI + s * math.pi for s in edge] + [star]))
    for phi in phis:
        faces = ("bottom", "left") if phi == -HALF_PI else ("bottom",)
        pts.append((phi, -pp, faces))
    ps = sorted(set([-pp + s * 2 * pp for s in edge] + [0.0]))
    for p in ps:
        faces = ("right", "bottom") if p == -pp else ("right",)
        pts.append((HALF_PI, p, faces))
    phis = sorted(set([HALF_PI - s * math.pi for s in edge] + [star]), reverse=True)
    for phi in phis:
        faces = ("top", "right") if phi == HALF_PI else ("top",)
        pts.append((phi, pp, faces))
    ps = sorted(set([pp - s * 2 * pp for s in edge] + [0.0]), reverse=True)
    for p in ps:
        faces = ("left", "top") if p == pp else ("left",)
        pts.append((-HALF_PI, p, faces))
    return pts


def euler_characteristic_index(segment: PeriodicSegment, t: float = 0.0, n: int = 256) -> int:
    """Lefschetz-number difference for the identity monodromy of the block.

    The exit set of the section at time ``t`` is located by evaluating the
    flow on ``4 n`` boundary points (tangency points included) and its arcs
    are counted.
    """
    pts = _section_boundary(segment, t, n)
    mask = [_is_exit_point(segment, t, phi, p, faces) for phi, p, faces in pts]
    return index_from_exit_mask(mask)


@dataclass(frozen=True)
class NewtonConfig:
    tol: float = 1e-11
    max_iter: int = 40
    max_halvings: int = 40
    dedupe_tol: float = 1e-8


@dataclass
class PeriodicOrbit:
    x0: tuple[float, float]
    T: float
    residual: float
    multipliers: tuple[complex, complex]
    monodromy: np.ndarray
    max_abs_phi: float
    max_abs_p: float
    contained: bool
    in_segment: bool
    newton_iterations: int
    seed: tuple[float, float]
    trajectory: Optional[Trajectory] = field(default=None, repr=False)

    @property
    def multiplier_product(self) -> complex:
        return self.multipliers[0] * self.multipliers[1]

    def to_dict(self) -> dict:
        return {
            "x0": list(self.x0),
            "T": self.T,
            "residual": self.residual,
            "multipliers": [[m.real, m.imag] for m in self.multipliers],
            "multiplier_product": [self.multiplier_product.real, self.multiplier_product.imag],
            "monodromy": self.monodromy.tolist(),
            "max_abs_phi": self.max_abs_phi,
            "max_abs_p": self.max_abs_p,
            "contained": self.contained,
            "in_segment": self.in_segment,
            "newton_iterations": self.newton_iterations,
            "seed": list(self.seed),
        }


def _newton(args):
    """Damped Newton on ``P(x) - x`` from one seed; ``None`` on failure."""
    params, pivot, T, t0, seed, segment, ncfg, cfg = args
    x = np.array(seed, dtype=float)
    px, dp = time_T_map(params, pivot, x, t0, T, cfg)
    F = px - x
    r = float(np.max(np.abs(F)))
    eye = np.eye(2)
    for it in range(ncfg.max_iter + 1):
        if r <= ncfg.tol:
            return tuple(x), r, it, dp
        if it == ncfg.max_iter:
            return None
        try:
            step = np.linalg.solve(dp - eye, -F)
        except np.linalg.LinAlgError:
            return None
        lam = 1.0
        for _ in range(ncfg.max_halvings + 1):
            x_new = x + lam * step
            if segment.contains(x_new[0], x_new[1]):
                px_new, dp_new = time_T_map(params, pivot, x_new, t0, T, cfg)
                F_new = px_new - x_new
                r_new = float(np.max(np.abs(F_new)))
                if r_new < r:
                    x, F, r, dp = x_new, F_new, r_new, dp_new
                    break
            lam *= 0.5
        else:
            return None
    return None


def _seed_grid(segment: PeriodicSegment, grid: tuple[int, int]):
    n_phi, n_p = grid
    phis = [-HALF_PI + math.pi * (i + 1) / (n_phi + 1) for i in range(n_phi)]
    ps = [-segment.p_prime + 2 * segment.p_prime * (j + 1) / (n_p + 1) for j in range(n_p)]
    return [(phi, p) for phi in phis for p in ps]


def _orbit_from(params, pivot, T, t0, segment, x, r, iters, dp, seed, cfg) -> PeriodicOrbit:
    traj = integrate_variational(params, pivot, x, t0, T, cfg)
    phis, ps = [], []
    for s in traj.dense_samples(8):
        phis.append(abs(s.phi))
        ps.append(abs(s.p))
    max_phi, max_p = max(phis), max(ps)
    in_u = max_phi < HALF_PI - CONTAINMENT_TOL and max_p < segment.p_prime - CONTAINMENT_TOL
    mult = np.linalg.eigvals(dp)
    mult = sorted((complex(m) for m in mult), key=lambda m: (-abs(m), m.imag))
    return PeriodicOrbit(
        x0=(float(x[0]), float(x[1])),
        T=T,
        residual=r,
        multipliers=(mult[0], mult[1]),
        monodromy=np.array(dp),
        max_abs_phi=max_phi,
        max_abs_p=max_p,
        contained=max_phi < HALF_PI,
        in_segment=in_u,
        newton_iterations=iters,
        seed=tuple(seed),
        trajectory=traj,
    )


def _pool(workers: int):
    return ProcessPoolExecutor(max_workers=workers) if workers > 1 else nullcontext(None)


def _map(pool: Optional[Executor], fn, jobs):
    if pool is None:
        return [fn(j) for j in jobs]
    return list(pool.map(fn, jobs))


def find_periodic_orbit(
    params: PendulumParams,
    pivot: PivotProfile,
    T: float,
    segment: PeriodicSegment,
    newton_cfg: Optional[NewtonConfig] = None,
    grid: tuple[int, int] = (5, 5),
    cfg: Optional[IntegratorConfig] = None,
    t0: float = 0.0,
    workers: int = 1,
) -> PeriodicOrbit:
    """Multi-start Newton for a fixed point of the time-``T`` map in the block.

    All seeds are run; among converged points whose orbit stays in the open
    rectangle the smallest residual wins, ties going to smaller ``|phi0|``
    and then smaller ``|p0|``.

    Raises
    ------
    NoConvergence
        No seed reached the tolerance.
    ConvergedOutsideU
        Fixed points were found but every orbit touches the block boundary.
    """
    ncfg = newton_cfg or NewtonConfig()
    if abs(T - segment.T) > PERIOD_RTOL * max(T, segment.T):
        raise ValueError(f"T={T} differs from the segment period {segment.T}")
    seeds = _seed_grid(segment, grid)
    jobs = [(params, pivot, T, t0, s, segment, ncfg, cfg) for s in seeds]
    with _pool(workers) as pool:
        results = _map(pool, _newton, jobs)

    converged = [(*res, seed) for seed, res in zip(seeds, results) if res is not None]
    if not converged:
        raise NoConvergence(f"none of {len(seeds)} Newton seeds converged to tol={ncfg.tol}")
    # sorting first makes the deduplication independent of completion order
    converged.sort(key=lambda c: (c[1], abs(c[0][0]), abs(c[0][1]), c[4]))
    found = []
    for cand in converged:
        x = cand[0]
        if all(max(abs(x[0] - f[0][0]), abs(x[1] - f[0][1])) > ncfg.dedupe_tol for f in found):
            found.append(cand)

    orbits = [_orbit_from(params, pivot, T, t0, segment, x, r, it, dp, seed, cfg) for x, r, it, dp, seed in found]
    key = lambda o: (o.residual, abs(o.x0[0]), abs(o.x0[1]))
    inside = sorted((o for o in orbits if o.in_segment), key=key)
    if inside:
        return inside[0]
    best = min(orbits, key=key)
    raise ConvergedOutsideU(f"fixed point {best.x0} leaves the admissible set", orbit=best)


@dataclass(frozen=True)
class IndexConfig:
    min_disp: float = 1e-8
    max_samples: int = 1 << 20
    initial_per_edge: int = 16


@dataclass
class IndexResult:
    winding: int
    boundary_samples: int
    min_displacement: float
    total_angle: float

    def to_dict(self) -> dict:
        return {
            "winding": self.winding,
            "boundary_samples": self.boundary_samples,
            "min_displacement": self.min_displacement,
            "total_angle": self.total_angle,
        }


def _contour_point(region, s: float) -> tuple[float, float]:
    a, b, c, d = region
    k = min(int(s), 3)
    u = s - k
    if k == 0:
        return a + u * (b - a), c
    if k == 1:
        return b, c + u * (d - c)
    if k == 2:
        return b - u * (b - a), d
    return a, d - u * (d - c)


def _displacement_job(args):
    params, pivot, T, t0, x, cfg = args
    px = flow_map(params, pivot, x, t0, T, cfg)
    return (x[0] - px[0], x[1] - px[1])


def _wrap(a: float) -> float:
    return (a + math.pi) % (2.0 * math.pi) - math.pi


def fixed_point_index(
    params: PendulumParams,
    pivot: PivotProfile,
    T: float,
    region: Sequence[float],
    cfg: Optional[IndexConfig] = None,
    integ_cfg: Optional[IntegratorConfig] = None,
    t0: float = 0.0,
    workers: int = 1,
) -> IndexResult:
    """Fixed-point index of the time-``T`` map on a rectangle.

    Computed as the winding number of ``x - P(x)`` along the rectangle
    ``region = (phi_lo, phi_hi, p_lo, p_hi)`` traversed counterclockwise; the
    contour is refined until consecutive displacement directions differ by
    less than ``pi/2``.

    Raises
    ------
    FixedPointOnBoundary
        ``|x - P(x)|`` drops below ``cfg.min_disp`` on the contour.
    NonConvergentRefinement
        More than ``cfg.max_samples`` contour points would be needed.
    """
    cfg = cfg or IndexConfig()
    region = tuple(float(v) for v in region)
    a, b, c, d = region
    if not (a < b and c < d):
        raise ValueError(f"degenerate region {region}")
    n0 = cfg.initial_per_edge
    svals = [4.0 * k / (4 * n0) for k in range(4 * n0)]
    disp: dict[float, tuple[float, float]] = {}

    with _pool(workers) as pool:

        def evaluate(ss):
            jobs = [(params, pivot, T, t0, _contour_point(region, s), integ_cfg) for s in ss]
            for s, v in zip(ss, _map(pool, _displacement_job, jobs)):
                mag = math.hypot(*v)
                if mag <= cfg.min_disp:
                    x = _contour_point(region, s)
                    raise FixedPointOnBoundary(f"|x - P(x)| = {mag:.3g} at {x}")
                disp[s] = v

        evaluate(svals)
        while True:
            order = sorted(disp)
            angles = [math.atan2(disp[s][1], disp[s][0]) for s in order]
            new = []
            for i, s in enumerate(order):
                j = (i + 1) % len(order)
                if abs(_wrap(angles[j] - angles[i])) >= 0.5 * math.pi:
                    s_next = order[j] if j else 4.0
                    mid = 0.5 * (s + s_next)
                    if not s < mid < s_next:
                        raise NonConvergentRefinement(f"contour parameter underflow near s={s}")
                    new.append(mid)
            if not new:
                break
            if len(disp) + len(new) > cfg.max_samples:
                raise NonConvergentRefinement(f"more than {cfg.max_samples} contour samples needed")
            evaluate(new)

    total = sum(_wrap(angles[(i + 1) % len(angles)] - angles[i]) for i in range(len(angles)))
    turns = total / (2.0 * math.pi)
    winding = round(turns)
    if abs(turns - winding) > 0.01:
        raise NonConvergentRefinement(f"winding {turns} is not close to an integer")
    mags = [math.hypot(*v) for v in disp.values()]
    return IndexResult(int(winding), len(disp), min(mags), total)
