"""Exact flow along level-set cycles by time-of-travel quadrature.

A point moves on its cycle so that the elapsed time equals
``tau(s) = int_0^s ds' / |b(gamma(s'))|``; one loop takes the period
``T = tau(length)``. Advancing is an inversion of the monotone table ``tau``.
"""

from __future__ import annotations

import csv
from collections import OrderedDict
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import BudgetTooSmall, CuspDetected, DegenerateLevel, NoCycles
from .field import HamiltonianField
from .levelset import (
    DEGENERACY_FRACTION,
    Cycle,
    certify_admissible,
    cycle_through,
    extract_cycles,
    inverse_lipschitz,
    chord_foot,
    lift_to_level,
    newton_along,
    project_to_level,
)


# ---------------------------------------------------------------------------
# travel tables

@dataclass(frozen=True, eq=False)
class TravelTable:
    """Cumulative travel time ``tau[k]`` at the cycle vertices ``s[k]`` (``tau[0] = 0``)."""

    cycle: Cycle
    tau: np.ndarray

    @property
    def period(self) -> float:
        return float(self.tau[-1])

    def tau_at(self, s) -> np.ndarray:
        return np.interp(np.mod(s, self.cycle.length), self.cycle.s, self.tau)

    def s_at(self, tau) -> np.ndarray:
        return np.interp(np.mod(tau, self.period), self.tau, self.cycle.s)


def travel_table(cycle: Cycle, speeds: np.ndarray | None = None) -> TravelTable:
    """Trapezoid cumulative integral of ``1/|b|`` over the cycle's arc-length grid."""
    v = cycle.speeds if speeds is None else np.broadcast_to(np.asarray(speeds, dtype=float), (cycle.n_vertices,))
    if v is None:
        raise ValueError("cycle carries no speed samples; pass speeds explicitly")
    if np.any(v <= 0):
        raise DegenerateLevel("travel time needs strictly positive speed along the cycle")
    inv = 1.0 / v
    inv_c = np.append(inv, inv[0])
    ds = np.diff(cycle.s)
    tau = np.concatenate([[0.0], np.cumsum(0.5 * ds * (inv_c[:-1] + inv_c[1:]))])
    tau.setflags(write=False)
    return TravelTable(cycle=cycle, tau=tau)


_TABLES: "OrderedDict[int, tuple]" = OrderedDict()


def _table_for(cycle: Cycle) -> TravelTable:
    hit = _TABLES.get(id(cycle))
    if hit is not None and hit[0] is cycle:
        return hit[1]
    tab = travel_table(cycle)
    _TABLES[id(cycle)] = (cycle, tab)
    if len(_TABLES) > 8192:
        _TABLES.popitem(last=False)
    return tab


def travel_time(table: TravelTable, s0: float, s1: float) -> float:
    """Time to travel forward from ``s0`` to ``s1``; lies in ``[0, T)``."""
    d = float(table.tau_at(s1) - table.tau_at(s0))
    return d % table.period


def period(table: TravelTable, rtol: float = 1e-8, max_nodes: int = 2 ** 16) -> float:
    """Period with Richardson-checked refinement.

    When the cycle knows its field, it is resampled at ``m, 2m, ...`` nodes and
    the trapezoid periods are extrapolated (second order) until two successive
    extrapolations agree to ``rtol`` or ``max_nodes`` is reached. Otherwise the
    table's own period is returned.
    """
    cyc = table.cycle
    if cyc.field is None:
        return table.period
    m = 1 << int(np.ceil(np.log2(max(cyc.n_vertices, 1024))))
    m = min(m, max_nodes // 2)
    prev_T = travel_table(cyc.refine(m)).period
    prev_R = None
    while m < max_nodes:
        m *= 2
        T = travel_table(cyc.refine(m)).period
        R = (4.0 * T - prev_T) / 3.0
        if prev_R is not None and abs(R - prev_R) <= rtol * abs(R):
            return R
        if abs(T - prev_T) <= rtol * abs(T):
            return R
        prev_T, prev_R = T, R
    return prev_R if prev_R is not None else prev_T


def advance_on_cycle(table: TravelTable, s: float, t: float) -> float:
    """Arc parameter reached from ``s`` after time ``t`` (any sign; taken mod the period)."""
    return float(table.s_at(table.tau_at(s) + t))


# ---------------------------------------------------------------------------
# point flow

def degeneracy_floor(fld: HamiltonianField) -> float:
    return DEGENERACY_FRACTION * fld.sup_speed()


def flow(fld: HamiltonianField, x, t: float, resolution: int = 512) -> np.ndarray:
    """``X(t, x)``: move ``x`` along its cycle for time ``t`` (negative ``t`` runs backwards).

    Points whose speed is below the degeneracy floor are stationary.
    """
    x = np.asarray(x, dtype=float)
    floor = degeneracy_floor(fld)
    if float(fld.speed(x)) < floor:
        return x.copy()
    h = float(fld.hamiltonian(x))
    cyc = cycle_through(fld, x, resolution, floor=floor)
    tab = _table_for(cyc)
    s, _ = cyc.project(x)
    return lift_to_level(fld, cyc, tab.s_at(tab.tau_at(s) + t), h)


@dataclass
class _Anchor:
    table: TravelTable | None
    tau0: float
    level: float


class PointFlow:
    """Exact flow of a fixed point set; cycle lookups are done once per point."""

    def __init__(self, fld: HamiltonianField, points, resolution: int = 512):
        self.field = fld
        self.points = np.array(points, dtype=float).reshape(-1, 2)
        self.resolution = resolution
        self.floor = degeneracy_floor(fld)
        self.anchors: list[_Anchor] = []
        self.errors: dict[int, Exception] = {}
        speeds = fld.speed(self.points)
        for i, x in enumerate(self.points):
            h = float(fld.hamiltonian(x))
            if speeds[i] < self.floor:
                self.anchors.append(_Anchor(None, 0.0, h))
                continue
            try:
                cyc = cycle_through(fld, x, resolution, floor=self.floor)
            except (DegenerateLevel, NoCycles) as exc:
                self.errors[i] = exc
                self.anchors.append(_Anchor(None, 0.0, h))
                continue
            tab = _table_for(cyc)
            s, _ = cyc.project(x)
            self.anchors.append(_Anchor(tab, float(tab.tau_at(s)), h))

    def cycle_of(self, i: int) -> Cycle | None:
        a = self.anchors[i]
        return None if a.table is None else a.table.cycle

    def at(self, t: float) -> np.ndarray:
        out = self.points.copy()
        moving = [i for i, a in enumerate(self.anchors) if a.table is not None]
        if not moving:
            return out
        feet = np.empty((len(moving), 2))
        normals = np.empty((len(moving), 2))
        levels = np.empty(len(moving))
        for k, i in enumerate(moving):
            a = self.anchors[i]
            feet[k], normals[k] = chord_foot(a.table.cycle, a.table.s_at(a.tau0 + t))
            levels[k] = a.level
        out[moving] = newton_along(self.field, feet, normals, levels)
        return out


def flow_points(fld: HamiltonianField, points, times: Sequence[float], resolution: int = 512) -> np.ndarray:
    """Exact flow of many points at many times; shape ``(len(times), N, 2)``."""
    pf = PointFlow(fld, points, resolution)
    return np.stack([pf.at(float(t)) for t in times])


# ---------------------------------------------------------------------------
# batch flow through a ladder of levels

class Foliation:
    """Approximate flow for large point sets through a ladder of extracted levels.

    Ladder levels are quantiles of H over the query points. Each query point is
    attached to the ladder cycle holding its nearest vertex and its phase is
    read from that cycle. Its own rotation frequency ``1/T`` is interpolated in
    H through the attached cycle and its continuations on the neighbouring
    ladder levels (quadratic when both exist). Positions are read back from the
    attached cycle at the advanced phase and projected onto the point's level.
    """

    def __init__(self, fld: HamiltonianField, points, n_levels: int = 1024, resolution: int = 512):
        self.field = fld
        self.points = np.array(points, dtype=float).reshape(-1, 2)
        self.floor = degeneracy_floor(fld)
        self.levels_of_points = fld.hamiltonian(self.points)
        self.moving = fld.speed(self.points) >= self.floor
        hq = self.levels_of_points[self.moving]
        self._idx = np.nonzero(self.moving)[0]
        if hq.size == 0:
            return
        qs = np.unique(np.quantile(hq, np.linspace(0.0, 1.0, n_levels)))

        cycles: list[Cycle] = []
        level_index: list[int] = []
        kept_levels: list[float] = []
        for h in qs:
            try:
                cs = extract_cycles(fld, float(h), resolution, floor=self.floor)
            except (NoCycles, DegenerateLevel):
                continue
            kept_levels.append(float(h))
            for c in cs:
                cycles.append(c)
                level_index.append(len(kept_levels) - 1)
        if not cycles:
            raise NoCycles("no ladder level could be extracted")
        self.ladder = np.array(kept_levels)
        self.cycles = cycles
        self.cycle_level = np.array(level_index)
        tables = [_table_for(c) for c in cycles]
        self.periods = np.array([t.period for t in tables])
        self.cycle_h = self.ladder[self.cycle_level]

        # concatenated closed polylines; cycle j occupies rows off[j] .. off[j+1]-1
        sizes = np.array([c.n_vertices + 1 for c in cycles])
        off = np.concatenate([[0], np.cumsum(sizes)])
        self._off = off
        self._xy = np.concatenate([c.closed_points for c in cycles])
        self._s = np.concatenate([c.s for c in cycles])
        self._tau = np.concatenate([t.tau for t in tables])
        key = np.concatenate([j + t.tau / t.period for j, t in enumerate(tables)])
        key[off[1:] - 1] = np.arange(len(cycles)) + 1.0 - 1e-15
        self._key = key
        open_rows = np.concatenate([np.arange(off[j], off[j + 1] - 1) for j in range(len(cycles))])
        self._open_rows = open_rows
        self._tree = cKDTree(self._xy[open_rows])
        self._owner = np.concatenate([np.full(c.n_vertices, j) for j, c in enumerate(cycles)])

        # continuation of each cycle on the previous and next ladder levels
        per_level: dict[int, list[int]] = {}
        for j, li in enumerate(level_index):
            per_level.setdefault(li, []).append(j)
        self._nb = np.full((len(cycles), 2), -1)
        for j, li in enumerate(level_index):
            anchor = cycles[j].points[0]
            for side, nb in enumerate((li - 1, li + 1)):
                cand = per_level.get(nb)
                if cand:
                    self._nb[j, side] = min(
                        cand, key=lambda q: float(np.min(np.hypot(*(cycles[q].points - anchor).T))))
        self._attach()

    def _frequency(self, j: np.ndarray, h: np.ndarray) -> np.ndarray:
        om = 1.0 / self.periods
        lo, hi = self._nb[j, 0], self._nb[j, 1]
        h0 = self.cycle_h[j]
        w0 = om[j]
        out = np.full(j.shape, np.nan)
        both = (lo >= 0) & (hi >= 0)
        if both.any():
            xa, xb, xc = self.cycle_h[lo[both]], h0[both], self.cycle_h[hi[both]]
            ya, yb, yc = om[lo[both]], w0[both], om[hi[both]]
            x = h[both]
            out[both] = (ya * (x - xb) * (x - xc) / ((xa - xb) * (xa - xc))
                         + yb * (x - xa) * (x - xc) / ((xb - xa) * (xb - xc))
                         + yc * (x - xa) * (x - xb) / ((xc - xa) * (xc - xb)))
        one = ~both & ((lo >= 0) | (hi >= 0))
        if one.any():
            o = np.where(lo[one] >= 0, lo[one], hi[one])
            w = (h[one] - h0[one]) / (self.cycle_h[o] - h0[one])
            out[one] = (1 - w) * w0[one] + w * om[o]
        none = np.isnan(out)
        out[none] = w0[none]
        return np.maximum(out, 0.0)

    def _attach(self):
        P = self.points[self._idx]
        _, v = self._tree.query(P)
        row = self._open_rows[v]
        j = self._owner[v]
        # nearest point on the two edges adjacent to the nearest vertex
        first = self._off[j]
        last = self._off[j + 1] - 1
        prev = np.where(row == first, last - 1, row - 1)
        best_row = row.copy()
        best_u = np.zeros(P.shape[0])
        best_d = np.full(P.shape[0], np.inf)
        for a_row in (prev, row):
            a = self._xy[a_row]
            d = self._xy[a_row + 1] - a
            L2 = np.einsum("ij,ij->i", d, d)
            u = np.clip(np.einsum("ij,ij->i", P - a, d) / np.where(L2 > 0, L2, 1.0), 0.0, 1.0)
            dist = np.hypot(*(a + u[:, None] * d - P).T)
            better = dist < best_d
            best_d = np.where(better, dist, best_d)
            best_u = np.where(better, u, best_u)
            best_row = np.where(better, a_row, best_row)
        # arc length is linear in u on an edge, and tau is interpolated linearly in s
        tau = self._tau[best_row] + best_u * (self._tau[best_row + 1] - self._tau[best_row])
        self._cyc = j
        self._phase = np.mod(tau / self.periods[j], 1.0)
        self._omega = self._frequency(j, self.levels_of_points[self._idx])

    def at(self, t: float) -> np.ndarray:
        out = self.points.copy()
        if self._idx.size == 0:
            return out
        ph = np.mod(self._phase + t * self._omega, 1.0)
        key = self._cyc + ph
        pos = np.searchsorted(self._key, key, side="right") - 1
        pos = np.clip(pos, 0, self._key.size - 2)
        k0, k1 = self._key[pos], self._key[pos + 1]
        w = np.where(k1 > k0, (key - k0) / np.where(k1 > k0, k1 - k0, 1.0), 0.0)
        xy = self._xy[pos] + w[:, None] * (self._xy[pos + 1] - self._xy[pos])
        out[self._idx] = project_to_level(self.field, xy, self.levels_of_points[self._idx])
        return out


# ---------------------------------------------------------------------------
# same-cycle gap

@dataclass(frozen=True)
class GapReport:
    times: np.ndarray
    gaps: np.ndarray
    initial_gap: float
    max_gap: float
    bound: float
    sup_speed: float
    c_S: float
    L: float
    passed: bool


def same_cycle_gap_report(table: TravelTable, s1: float, s2: float, times, sup_speed: float | None = None,
                          slack: float = 0.05) -> GapReport:
    """Evolve two points of one cycle and compare their gap with ``(|b|_inf^2 / c_S) L |gap_0|``."""
    if s1 == s2:
        raise ValueError("s1 and s2 must differ")
    cyc = table.cycle
    if sup_speed is None:
        if cyc.field is None:
            raise ValueError("sup_speed is required when the cycle has no field")
        sup_speed = cyc.field.sup_speed()
    if cyc.speeds is not None:
        c_S = float(np.min(cyc.speeds))
    else:
        # harmonic-mean speed of each edge, read back from the travel table
        c_S = float(np.min(np.diff(cyc.s) / np.diff(table.tau)))
    L = inverse_lipschitz(cyc)
    times = np.asarray(times, dtype=float)
    p1 = cyc.point_at(table.s_at(table.tau_at(s1) + times))
    p2 = cyc.point_at(table.s_at(table.tau_at(s2) + times))
    gaps = np.hypot(*(p1 - p2).T)
    g0 = float(np.hypot(*(cyc.point_at(s1) - cyc.point_at(s2))))
    bound = sup_speed ** 2 / c_S * L * g0
    mg = float(gaps.max(initial=0.0))
    return GapReport(times=times, gaps=gaps, initial_gap=g0, max_gap=mg, bound=bound,
                     sup_speed=float(sup_speed), c_S=c_S, L=L, passed=mg <= bound * (1 + slack))


# ---------------------------------------------------------------------------
# Lusin-Lipschitz profile

@dataclass(frozen=True)
class SampleSpec:
    """Random pairs: ``n_points`` base points uniform in the disk of radius ``radius``
    (default: the support radius) and partners at distance ``pair_offset``."""

    n_points: int = 1000
    pair_offset: float = 1e-3
    seed: int = 0
    radius: float | None = None


@dataclass
class LipschitzProfile:
    epsilon: float
    times: np.ndarray
    c_est: np.ndarray
    pairs_retained: int
    n_pairs: int
    discarded_low_speed: int
    discarded_inadmissible: int
    discarded_area: float
    fit_intercept: float
    fit_slope: float
    r2: float
    max_rel_residual: float
    retained_description: str = ""

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "C_est", "pairs_retained"])
            for t, c in zip(self.times, self.c_est):
                w.writerow([repr(float(t)), repr(float(c)), self.pairs_retained])


def affine_fit(t: np.ndarray, c: np.ndarray) -> tuple[float, float, float, float]:
    """Least-squares ``c ~ a + b t``; returns ``(a, b, R^2, max |residual| / fit)``."""
    t = np.asarray(t, dtype=float)
    c = np.asarray(c, dtype=float)
    A = np.stack([np.ones_like(t), t], axis=1)
    (a, b), *_ = np.linalg.lstsq(A, c, rcond=None)
    fit = a + b * t
    ss_res = float(np.sum((c - fit) ** 2))
    ss_tot = float(np.sum((c - c.mean()) ** 2))
    r2 = 1.0 - ss_res / ss_tot if ss_tot > 0 else 1.0
    with np.errstate(divide="ignore", invalid="ignore"):
        rel = np.abs(c - fit) / np.abs(fit)
    return float(a), float(b), r2, float(np.max(rel)) if rel.size else 0.0


def draw_pairs(spec: SampleSpec, radius: float) -> tuple[np.ndarray, np.ndarray]:
    rng = np.random.default_rng(spec.seed)
    R = float(spec.radius if spec.radius is not None else radius)
    r = R * np.sqrt(rng.random(spec.n_points))
    th = 2 * np.pi * rng.random(spec.n_points)
    x = np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)
    phi = 2 * np.pi * rng.random(spec.n_points)
    y = x + spec.pair_offset * np.stack([np.cos(phi), np.sin(phi)], axis=-1)
    return x, y


def lusin_lipschitz_profile(fld: HamiltonianField | None, eps: float, sample_spec: SampleSpec, times,
                            thresholds=None, resolution: int = 512,
                            flow_fn: Callable[[np.ndarray, float], np.ndarray] | None = None) -> LipschitzProfile:
    """Largest pair stretch ``|X(t,x) - X(t,y)| / |x - y|`` off an exceptional set of area ``eps``.

    The budget allows discarding ``floor(eps / area_per_sample)`` pairs. Pairs
    whose cycles cannot be built or fail ``thresholds = (c_S, M, L)`` are
    discarded first; the rest of the budget goes to the slowest pairs (smallest
    ``min(|b(x)|, |b(y)|)``). :class:`BudgetTooSmall` is raised when the
    inadmissible pairs alone exceed the budget. ``flow_fn(points, t)`` replaces
    the cycle flow (used to inject closed-form maps in tests).
    """
    if eps <= 0:
        raise ValueError("eps must be positive")
    times = np.asarray(times, dtype=float)
    R = fld.radius if fld is not None else (sample_spec.radius or 1.0)
    x, y = draw_pairs(sample_spec, R)
    n = x.shape[0]
    area_per = np.pi * float(sample_spec.radius or R) ** 2 / n
    budget = int(np.floor(eps / area_per + 1e-12))

    if flow_fn is not None:
        bad = np.zeros(n, dtype=bool)
        speed = np.ones(n) if fld is None else np.minimum(fld.speed(x), fld.speed(y))
        evolve = lambda t: (flow_fn(x, t), flow_fn(y, t))  # noqa: E731
    else:
        pts = np.concatenate([x, y])
        pf = PointFlow(fld, pts, resolution)
        sp = fld.speed(pts)
        speed = np.minimum(sp[:n], sp[n:])
        bad = np.zeros(n, dtype=bool)
        for i in pf.errors:
            bad[i % n] = True
        if thresholds is not None:
            checked: dict[int, bool] = {}
            for i in range(2 * n):
                c = pf.cycle_of(i)
                if c is None:
                    continue
                ok = checked.get(id(c))
                if ok is None:
                    try:
                        ok = certify_admissible(c, fld, thresholds).passed
                    except CuspDetected:
                        ok = False
                    checked[id(c)] = ok
                if not ok:
                    bad[i % n] = True
        # pairs straddling two different cycles of one level set are not nested
        for i in range(n):
            a, b = pf.cycle_of(i), pf.cycle_of(i + n)
            if (a is None) != (b is None):
                bad[i] = True

        def evolve(t):
            p = pf.at(t)
            return p[:n], p[n:]

    n_bad = int(bad.sum())
    if n_bad > budget:
        raise BudgetTooSmall(f"{n_bad} inadmissible pairs exceed the budget of {budget} (eps={eps})")
    drop = bad.copy()
    order = np.argsort(speed, kind="stable")
    room = budget - n_bad
    for i in order:
        if room <= 0:
            break
        if not drop[i]:
            drop[i] = True
            room -= 1
    keep = ~drop
    d0 = np.hypot(*(x - y).T)
    c_est = np.empty(times.size)
    for k, t in enumerate(times):
        xt, yt = evolve(float(t))
        c_est[k] = float(np.max(np.hypot(*(xt - yt).T)[keep] / d0[keep]))
    a, b, r2, rel = affine_fit(times, c_est) if times.size >= 2 else (float(c_est[0]), 0.0, 1.0, 0.0)
    desc = (f"dropped {n_bad} inadmissible and {int(drop.sum()) - n_bad} slowest pairs "
            f"(min retained speed {float(speed[keep].min()) if keep.any() else float('nan'):.4g})")
    return LipschitzProfile(epsilon=float(eps), times=times, c_est=c_est, pairs_retained=int(keep.sum()),
                            n_pairs=n, discarded_low_speed=int(drop.sum()) - n_bad,
                            discarded_inadmissible=n_bad, discarded_area=float(drop.sum()) * area_per,
                            fit_intercept=a, fit_slope=b, r2=r2, max_rel_residual=rel,
                            retained_description=desc)
