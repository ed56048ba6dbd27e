"""Level-set cycles of H and the planar curve geometry built on them.

Cycles are extracted by marching squares on a node lattice, projected onto the
exact level by Newton steps along grad H, resampled to (nearly) uniform arc
length and oriented along the velocity b. The module also provides the turn,
inverse-Lipschitz and degree measurements, the admissibility certificate, the
turn-budgeted affine interpolant and the normal-ribbon overlap set.
"""

from __future__ import annotations

import csv
from collections import OrderedDict
from dataclasses import dataclass, field as dc_field

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import CuspDetected, DegenerateLevel, NoCycles, OnBoundary, TurnBudgetImpossible, ZeroArea
from .field import HamiltonianField
from .geometry import (
    SegmentGrid,
    as_points,
    closed_polyline_is_simple,
    cross2,
    perp,
    points_in_polygon,
    project_to_segments,
    segments_intersect,
    signed_area,
)
from .intervals import IntervalSet

DEGENERACY_FRACTION = 1e-3
TURN_BUDGET = 1.0 / np.sqrt(5.0)


# ---------------------------------------------------------------------------
# the cycle type

@dataclass(frozen=True, eq=False)
class Cycle:
    """Closed simple polyline with arc-length parameters.

    ``points`` holds K distinct vertices; the closing edge back to ``points[0]``
    is implicit and ``s`` has K + 1 entries with ``s[K] == length``.
    """

    level: float
    points: np.ndarray
    s: np.ndarray
    speeds: np.ndarray | None = None
    field: HamiltonianField | None = dc_field(default=None, repr=False)
    spacing: float | None = None
    smooth: bool = False

    @classmethod
    def from_points(cls, points, level: float = float("nan"), fld: HamiltonianField | None = None,
                    spacing: float | None = None, smooth: bool = False) -> "Cycle":
        """Build from a vertex loop. ``smooth=True`` treats the vertices as samples of a
        smooth curve and corrects each chord to the arc of the osculating circle."""
        p = np.array(as_points(points), dtype=float)
        if p.shape[0] > 1 and np.allclose(p[0], p[-1]):
            p = p[:-1]
        if p.shape[0] < 3:
            raise ValueError("a cycle needs at least three distinct vertices")
        seg = np.hypot(*(np.roll(p, -1, axis=0) - p).T)
        if smooth:
            kappa = _vertex_curvature(p)
            k_edge = 0.5 * (kappa + np.roll(kappa, -1))
            seg = seg * (1.0 + (k_edge * seg) ** 2 / 24.0)
        s = np.concatenate([[0.0], np.cumsum(seg)])
        speeds = None if fld is None else fld.speed(p)
        p.setflags(write=False)
        s.setflags(write=False)
        return cls(level=float(level), points=p, s=s, speeds=speeds, field=fld, spacing=spacing, smooth=smooth)

    # basic geometry -------------------------------------------------------
    @property
    def length(self) -> float:
        return float(self.s[-1])

    @property
    def n_vertices(self) -> int:
        return int(self.points.shape[0])

    @property
    def closed_points(self) -> np.ndarray:
        """Vertex list with the first vertex repeated at the end."""
        return np.vstack([self.points, self.points[:1]])

    @property
    def edges(self) -> np.ndarray:
        return np.roll(self.points, -1, axis=0) - self.points

    @property
    def chord_tangents(self) -> np.ndarray:
        e = self.edges
        return e / np.hypot(*e.T)[:, None]

    @property
    def tangents(self) -> np.ndarray:
        """Unit tangents at the vertices (centered chord directions)."""
        d = np.roll(self.points, -1, axis=0) - np.roll(self.points, 1, axis=0)
        return d / np.hypot(*d.T)[:, None]

    def reversed(self) -> "Cycle":
        p = np.vstack([self.points[:1], self.points[:0:-1]])
        return Cycle.from_points(p, self.level, self.field, self.spacing, smooth=self.smooth)

    def point_at(self, s) -> np.ndarray:
        """Linear interpolation along the polyline at arc parameters ``s`` (taken mod length)."""
        s = np.mod(np.asarray(s, dtype=float), self.length)
        k = np.clip(np.searchsorted(self.s, s, side="right") - 1, 0, self.n_vertices - 1)
        frac = (s - self.s[k]) / (self.s[k + 1] - self.s[k])
        a = self.points[k]
        b = self.points[(k + 1) % self.n_vertices]
        return a + frac[..., None] * (b - a)

    def project(self, x) -> tuple[float, float]:
        """Nearest polyline point to ``x``: returns ``(s, distance)``; ties go to the smaller s."""
        x = np.asarray(x, dtype=float)
        a = self.points
        b = np.roll(a, -1, axis=0)
        dist, u = project_to_segments(x, a, b)
        k = int(np.argmin(dist))
        seg = self.s[k + 1] - self.s[k]
        return float(min(self.s[k] + u[k] * seg, np.nextafter(self.length, 0))), float(dist[k])

    def refine(self, m: int) -> "Cycle":
        """Resample at ``m`` points via a periodic spline, re-projected onto the level."""
        if self.field is None:
            raise ValueError("refinement needs the source field")
        cp = self.closed_points
        spline = CubicSpline(self.s, cp, bc_type="periodic")
        grid = np.linspace(0.0, self.length, int(m), endpoint=False)
        pts = project_to_level(self.field, spline(grid), self.level)
        return Cycle.from_points(pts, self.level, self.field, self.length / m, smooth=True)


def _vertex_curvature(p: np.ndarray) -> np.ndarray:
    """Curvature of the circle through each vertex and its two neighbours."""
    a = np.roll(p, 1, axis=0) - p
    b = np.roll(p, -1, axis=0) - p
    c = b - a
    den = np.hypot(*a.T) * np.hypot(*b.T) * np.hypot(*c.T)
    with np.errstate(divide="ignore", invalid="ignore"):
        k = np.where(den > 0, 2.0 * np.abs(cross2(a, b)) / den, 0.0)
    return k


# ---------------------------------------------------------------------------
# extraction

def project_to_level(fld: HamiltonianField, pts: np.ndarray, h: float, iters: int = 6,
                     tol: float = 1e-14) -> np.ndarray:
    """Newton steps ``x <- x - (H(x) - h) grad H / |grad H|^2`` until the residual is below ``tol``."""
    x = np.array(pts, dtype=float)
    for _ in range(iters):
        r = fld.hamiltonian(x) - h
        if np.max(np.abs(r), initial=0.0) <= tol:
            break
        g = fld.gradient(x)
        g2 = np.einsum("...i,...i->...", g, g)
        step = np.where(g2 > 0, r / np.where(g2 > 0, g2, 1.0), 0.0)
        x = x - step[..., None] * g
    return x


def chord_foot(cycle: "Cycle", s) -> tuple[np.ndarray, np.ndarray]:
    """Polyline points at parameters ``s`` and the unit normals of the chords carrying them."""
    s = np.mod(np.asarray(s, dtype=float), cycle.length)
    k = np.clip(np.searchsorted(cycle.s, s, side="right") - 1, 0, cycle.n_vertices - 1)
    return cycle.point_at(s), perp(cycle.chord_tangents[k])


def newton_along(fld: HamiltonianField, x, n, h, iters: int = 8, tol: float = 1e-14) -> np.ndarray:
    """Move ``x`` along the directions ``n`` onto ``{H = h}``.

    Falls back to the gradient direction where ``n`` is nearly tangent to the level set.
    """
    x = np.array(x, dtype=float)
    n = np.asarray(n, dtype=float)
    h = np.broadcast_to(np.asarray(h, dtype=float), x.shape[:-1])
    for _ in range(iters):
        r = fld.hamiltonian(x) - h
        if np.max(np.abs(r), initial=0.0) <= tol:
            break
        g = fld.gradient(x)
        gn = np.einsum("...i,...i->...", g, n)
        g2 = np.einsum("...i,...i->...", g, g)
        along = gn * gn > 0.25 * g2
        step_n = np.where(along, r / np.where(along, gn, 1.0), 0.0)
        step_g = np.where(~along & (g2 > 0), r / np.where(g2 > 0, g2, 1.0), 0.0)
        x = x - step_n[..., None] * n - step_g[..., None] * g
    return x


def lift_to_level(fld: HamiltonianField, cycle: "Cycle", s, h) -> np.ndarray:
    """Points of ``{H = h}`` above ``cycle.point_at(s)``, reached along the chord normal.

    Lifting the foot returned by :meth:`Cycle.project` gives back the projected point.
    """
    x, n = chord_foot(cycle, s)
    return newton_along(fld, x, n, h)


def _marching_squares(values: np.ndarray, xs: np.ndarray, ys: np.ndarray, h: float,
                      center_fn) -> list[np.ndarray]:
    """Closed contour polylines of ``values == h``; open chains (touching the frame) are dropped."""
    ny, nx = values.shape
    D = values - h
    above = D > 0
    # edge ids: horizontal edges (i, j)-(i, j+1) first, then vertical (i, j)-(i+1, j)
    n_h = ny * (nx - 1)
    hcross = above[:, :-1] != above[:, 1:]
    vcross = above[:-1, :] != above[1:, :]
    if not hcross.any() and not vcross.any():
        return []
    # crossing points
    pos = np.full((n_h + (ny - 1) * nx, 2), np.nan)
    hi, hj = np.nonzero(hcross)
    t = D[hi, hj] / (D[hi, hj] - D[hi, hj + 1])
    pos[hi * (nx - 1) + hj] = np.stack([xs[hj] + t * (xs[hj + 1] - xs[hj]), ys[hi]], axis=-1)
    vi, vj = np.nonzero(vcross)
    t = D[vi, vj] / (D[vi, vj] - D[vi + 1, vj])
    pos[n_h + vi * nx + vj] = np.stack([xs[vj], ys[vi] + t * (ys[vi + 1] - ys[vi])], axis=-1)

    # per cell: bottom, right, top, left edges
    ci, cj = np.nonzero(hcross[:-1, :] | hcross[1:, :] | vcross[:, :-1] | vcross[:, 1:])
    eid = np.stack([
        ci * (nx - 1) + cj,                # bottom
        n_h + ci * nx + cj + 1,            # right
        (ci + 1) * (nx - 1) + cj,          # top
        n_h + ci * nx + cj,                # left
    ], axis=1)
    crossed = np.stack([hcross[ci, cj], vcross[ci, cj + 1], hcross[ci + 1, cj], vcross[ci, cj]], axis=1)
    count = crossed.sum(axis=1)

    seg_a, seg_b = [], []
    two = count == 2
    if two.any():
        order = np.argsort(~crossed[two], axis=1, kind="stable")[:, :2]
        e2 = np.take_along_axis(eid[two], order, axis=1)
        seg_a.append(e2[:, 0])
        seg_b.append(e2[:, 1])
    four = np.nonzero(count == 4)[0]
    if four.size:
        si, sj = ci[four], cj[four]
        center_above = center_fn(si, sj) > h
        # corners bl, br, tr, tl; each corner whose sign differs from the center is cut off
        corner_above = np.stack([above[si, sj], above[si, sj + 1], above[si + 1, sj + 1], above[si + 1, sj]], axis=1)
        adjacent = [(0, 3), (0, 1), (1, 2), (2, 3)]
        E = eid[four]
        for c, (ea, eb) in enumerate(adjacent):
            cut = corner_above[:, c] != center_above
            seg_a.append(E[cut, ea])
            seg_b.append(E[cut, eb])
    seg_a = np.concatenate(seg_a)
    seg_b = np.concatenate(seg_b)
    n_seg = seg_a.size

    # incidence: each edge touches one or two segments
    ends = np.concatenate([seg_a, seg_b])
    seg_of = np.concatenate([np.arange(n_seg), np.arange(n_seg)])
    order = np.argsort(ends, kind="stable")
    ends_sorted = ends[order]
    segs_sorted = seg_of[order]
    uniq, idx = np.unique(ends_sorted, return_index=True)
    cnt = np.diff(np.append(idx, ends_sorted.size))
    inc0 = dict(zip(uniq.tolist(), segs_sorted[idx].tolist()))
    two_idx = idx[cnt == 2]
    inc1 = dict(zip(uniq[cnt == 2].tolist(), segs_sorted[two_idx + 1].tolist()))

    sa = seg_a.tolist()
    sb = seg_b.tolist()
    used = np.zeros(n_seg, dtype=bool)
    curves = []
    for start in range(n_seg):
        if used[start]:
            continue
        used[start] = True
        chain = [sa[start]]
        seg = start
        edge = sb[start]
        closed = False
        while True:
            chain.append(edge)
            other = inc1.get(edge)
            if other is None:
                break
            nxt = other if inc0[edge] == seg else inc0[edge]
            if nxt == start:
                closed = True
                break
            if used[nxt]:
                break
            used[nxt] = True
            seg = nxt
            edge = sb[seg] if sa[seg] == edge else sa[seg]
        if closed and len(chain) >= 4:
            curves.append(pos[np.array(chain[:-1])])
    return curves


def _orient_and_anchor(p: np.ndarray, fld: HamiltonianField) -> np.ndarray:
    """Orient the loop along b and start it at its lexicographically smallest vertex."""
    t = np.roll(p, -1, axis=0) - np.roll(p, 1, axis=0)
    if np.sum(np.einsum("ij,ij->i", fld.velocity(p), t)) < 0:
        p = p[::-1]
    k = np.lexsort((p[:, 1], p[:, 0]))[0]
    return np.roll(p, -k, axis=0)


def _resample_uniform(p: np.ndarray, spacing: float) -> np.ndarray:
    seg = np.hypot(*(np.roll(p, -1, axis=0) - p).T)
    s = np.concatenate([[0.0], np.cumsum(seg)])
    L = s[-1]
    m = max(int(np.ceil(L / spacing)), 8)
    grid = np.linspace(0.0, L, m, endpoint=False)
    cp = np.vstack([p, p[:1]])
    return np.stack([np.interp(grid, s, cp[:, 0]), np.interp(grid, s, cp[:, 1])], axis=-1)


_EXTRACT_CACHE: "OrderedDict[tuple, list]" = OrderedDict()
_EXTRACT_CACHE_SIZE = 4096


def extract_cycles(fld: HamiltonianField, h: float, resolution: int = 512, window=None,
                   floor: float | None = None) -> list[Cycle]:
    """All closed components of ``{H = h}``, longest first.

    ``window = (cx, cy, half_width)`` restricts the sampling lattice to a square
    around ``(cx, cy)``; this is how tiny cycles near extrema are resolved.
    Raises :class:`NoCycles` when nothing is found and :class:`DegenerateLevel`
    when some vertex has speed below ``floor`` (default ``1e-3 * sup_speed``).
    """
    if resolution < 64:
        raise ValueError("resolution must be at least 64")
    h = float(h)
    key = (id(fld), h, int(resolution), None if window is None else tuple(float(w) for w in window))
    hit = _EXTRACT_CACHE.get(key)
    if hit is not None and hit[0] is fld:
        _EXTRACT_CACHE.move_to_end(key)
        return list(hit[1])

    if window is None:
        coords, values = fld.node_values(resolution)
        xs = ys = coords
    else:
        cx, cy, w = window
        xs = np.linspace(cx - w, cx + w, resolution)
        ys = np.linspace(cy - w, cy + w, resolution)
        X, Y = np.meshgrid(xs, ys)
        values = fld.hamiltonian(np.stack([X, Y], axis=-1))
    hg = float(xs[1] - xs[0])

    def center_fn(i, j):
        c = np.stack([0.5 * (xs[j] + xs[j + 1]), 0.5 * (ys[i] + ys[i + 1])], axis=-1)
        return fld.hamiltonian(c)

    raw = _marching_squares(values, xs, ys, h, center_fn)
    if not raw:
        raise NoCycles(f"level {h:g} has no closed component at resolution {resolution}")
    if floor is None:
        floor = DEGENERACY_FRACTION * fld.sup_speed()
    cycles = []
    for poly in raw:
        p = project_to_level(fld, poly, h)
        sp = fld.speed(p)
        if np.min(sp) < floor:
            raise DegenerateLevel(f"level {h:g}: speed {np.min(sp):.3g} below floor {floor:.3g}")
        L = float(np.sum(np.hypot(*(np.roll(p, -1, axis=0) - p).T)))
        spacing = min(hg / 2.0, L / 256.0)
        p = project_to_level(fld, _resample_uniform(p, spacing), h)
        p = _orient_and_anchor(p, fld)
        cyc = Cycle.from_points(p, h, fld, spacing, smooth=True)
        if np.min(cyc.speeds) < floor:
            raise DegenerateLevel(f"level {h:g}: speed {np.min(cyc.speeds):.3g} below floor {floor:.3g}")
        cycles.append(cyc)
    cycles.sort(key=lambda c: (-round(c.length, 12), c.points[0, 0], c.points[0, 1]))

    _EXTRACT_CACHE[key] = (fld, tuple(cycles))
    if len(_EXTRACT_CACHE) > _EXTRACT_CACHE_SIZE:
        _EXTRACT_CACHE.popitem(last=False)
    return cycles


def cycle_through(fld: HamiltonianField, x, resolution: int = 512, floor: float | None = None) -> Cycle:
    """The cycle of ``{H = H(x)}`` passing through ``x``.

    The global extraction is tried first; when ``x`` is not within two lattice
    spacings of any extracted cycle (a cycle smaller than a lattice cell) a
    sequence of shrinking local windows around ``x`` is sampled instead.
    """
    x = np.asarray(x, dtype=float)
    h = float(fld.hamiltonian(x))
    hg = 2.0 * fld.radius / (resolution - 1)
    best = None
    try:
        for c in extract_cycles(fld, h, resolution, floor=floor):
            _, d = c.project(x)
            if best is None or d < best[1]:
                best = (c, d)
    except NoCycles:
        best = None
    if best is not None and best[1] <= 2.0 * hg:
        return best[0]
    w = 16.0 * hg
    while w > 1e-9:
        try:
            local = extract_cycles(fld, h, 128, window=(x[0], x[1], w), floor=floor)
        except NoCycles:
            local = []
        for c in local:
            _, d = c.project(x)
            if d <= 4.0 * w / 127:
                return c
        w /= 4.0
    raise NoCycles(f"no cycle of level {h:g} passes near {x.tolist()}")


# ---------------------------------------------------------------------------
# curve geometry

def turn_atoms(cycle: Cycle) -> tuple[np.ndarray, np.ndarray]:
    """Turn measure as atoms: ``masses[k] = |t_k - t_{k-1}|`` sitting at vertex ``s[k]``."""
    t = cycle.chord_tangents
    d = t - np.roll(t, 1, axis=0)
    return cycle.s[:-1].copy(), np.hypot(*d.T)


def turn(cycle: Cycle) -> float:
    """Cyclic total variation of the chord tangents."""
    return float(np.sum(turn_atoms(cycle)[1]))


def window_mass(positions, masses, half_width: float, period: float = 1.0) -> float:
    """Largest mass of a closed cyclic window of length ``2 * half_width``."""
    if half_width <= 0:
        raise ValueError("half_width must be positive")
    pos = np.mod(np.asarray(positions, dtype=float).ravel(), period)
    m = np.asarray(masses, dtype=float).ravel()
    if pos.size == 0:
        return 0.0
    width = 2.0 * half_width
    if width >= period:
        return float(m.sum())
    order = np.argsort(pos, kind="stable")
    pos, m = pos[order], m[order]
    pos2 = np.concatenate([pos, pos + period])
    csum = np.concatenate([[0.0], np.cumsum(np.concatenate([m, m]))])
    stop = np.searchsorted(pos2, pos + width * (1 + 1e-12), side="right")
    return float(np.max(csum[stop] - csum[np.arange(pos.size)]))


def check_no_cusp(cycle: Cycle, eps: float = 0.05) -> float:
    """Return a half-width at which the turn window mass is below ``2 - eps``; raise otherwise."""
    pos, m = turn_atoms(cycle)
    L = cycle.length
    finest = 0.25 * float(np.min(np.diff(cycle.s)))
    for delta in [L / 2 ** j for j in range(3, 16) if L / 2 ** j > finest] + [finest]:
        if window_mass(pos, m, delta, L) < 2.0 - eps:
            return delta
    raise CuspDetected("turn measure concentrates mass near 2 in every tested window")


def inverse_lipschitz(cycle: Cycle, max_samples: int = 1024, refine_window: int = 64) -> float:
    """Largest ratio of cyclic arc distance to chord over vertex pairs.

    All pairs of a decimated vertex set are scanned, then all vertex pairs in
    windows around the best decimated pair.
    """
    check_no_cusp(cycle)
    L = cycle.length
    s = cycle.s[:-1]
    if np.max(np.diff(cycle.s)) > L / max_samples:
        # coarse polygons: add points along the edges so interior edge points are seen
        s = np.union1d(s, np.linspace(0.0, L, 4 * max_samples, endpoint=False))
    P = cycle.point_at(s)
    K = P.shape[0]
    step = max(1, int(np.ceil(K / max_samples)))
    idx = np.arange(0, K, step)

    def best_pair(ia, ib):
        d = np.hypot(P[ia][:, None, 0] - P[ib][None, :, 0], P[ia][:, None, 1] - P[ib][None, :, 1])
        ds = np.abs(s[ia][:, None] - s[ib][None, :])
        arc = np.minimum(ds, L - ds)
        with np.errstate(divide="ignore", invalid="ignore"):
            r = np.where(d > 0, arc / d, 0.0)
        k = np.unravel_index(np.argmax(r), r.shape)
        return float(r[k]), int(ia[k[0]]), int(ib[k[1]])

    ratio, i, j = best_pair(idx, idx)
    if step > 1:
        w = step * 2
        ia = np.mod(np.arange(i - w, i + w + 1), K)
        ib = np.mod(np.arange(j - w, j + w + 1), K)
        r2, _, _ = best_pair(ia, ib)
        ratio = max(ratio, r2)
    return max(ratio, 1.0)


def degree(cycle: Cycle, tol: float = 1e-14) -> int:
    """+1 for a counterclockwise vertex loop, -1 for clockwise."""
    a = signed_area(cycle.points)
    scale = max(float(np.ptp(cycle.points, axis=0).max()), 1e-300) ** 2
    if abs(a) <= tol * scale:
        raise ZeroArea("polygon has (numerically) zero signed area")
    return 1 if a > 0 else -1


def interior_contains(cycle: Cycle, x, tol: float | None = None) -> bool | np.ndarray:
    """Even-odd containment; raises :class:`OnBoundary` within ``tol`` of the polyline."""
    pts = as_points(x)
    single = pts.ndim == 1
    q = pts.reshape(-1, 2)
    if tol is None:
        tol = 1e-10 * max(1.0, cycle.length)
    a = cycle.points
    b = np.roll(a, -1, axis=0)
    for pt in q:
        dist, _ = project_to_segments(pt, a, b)
        if np.min(dist) <= tol:
            raise OnBoundary(f"point {pt.tolist()} lies on the curve (distance {np.min(dist):.3g})")
    inside = points_in_polygon(cycle.points, q)
    return bool(inside[0]) if single else inside.reshape(pts.shape[:-1])


@dataclass(frozen=True)
class AdmissibilityCert:
    c_S: float
    M: float
    L: float
    thresholds: tuple
    speed_ok: bool
    turn_ok: bool
    lipschitz_ok: bool

    @property
    def passed(self) -> bool:
        return self.speed_ok and self.turn_ok and self.lipschitz_ok


def certify_admissible(cycle: Cycle, fld: HamiltonianField, thresholds) -> AdmissibilityCert:
    """Measure (min speed, turn, inverse-Lipschitz constant) and compare with thresholds."""
    c_S, M, L = (float(v) for v in thresholds)
    speeds = fld.speed(cycle.points)
    cs = float(np.min(speeds))
    tv = turn(cycle)
    lip = inverse_lipschitz(cycle)
    return AdmissibilityCert(c_S=cs, M=tv, L=lip, thresholds=(c_S, M, L),
                             speed_ok=cs >= c_S, turn_ok=tv <= M, lipschitz_ok=lip <= L)


# ---------------------------------------------------------------------------
# affine interpolant

@dataclass(frozen=True, eq=False)
class PolylineReparam:
    """Inscribed polygon of a cycle and the monotone map from cycle to polygon arc length.

    ``knots`` are the cycle parameters of the polygon vertices, ``vertices`` the
    points ``gamma(knots)``, ``directions`` the unit segment directions and
    ``y_knots`` the polygon arc length at each vertex (``y_knots[-1] == length``).
    The map ``y(s)`` on a segment is the projection of ``gamma(s) - gamma(s_i)``
    onto the segment direction.
    """

    cycle: Cycle
    knots: np.ndarray
    vertices: np.ndarray
    directions: np.ndarray
    y_knots: np.ndarray
    s_table: np.ndarray
    y_table: np.ndarray

    @property
    def K(self) -> int:
        return int(self.knots.size)

    @property
    def length(self) -> float:
        return float(self.y_knots[-1])

    @property
    def normals(self) -> np.ndarray:
        """Left normals ``e_i^perp``."""
        return perp(self.directions)

    @property
    def segment_lengths(self) -> np.ndarray:
        return np.diff(self.y_knots)

    def y_of_s(self, s) -> np.ndarray:
        return np.interp(np.mod(s, self.cycle.length), self.s_table, self.y_table)

    def s_of_y(self, y) -> np.ndarray:
        return np.interp(np.mod(y, self.length), self.y_table, self.s_table)

    def segment_of_y(self, y) -> np.ndarray:
        y = np.mod(np.asarray(y, dtype=float), self.length)
        return np.clip(np.searchsorted(self.y_knots, y, side="right") - 1, 0, self.K - 1)

    def point_at_y(self, y) -> np.ndarray:
        y = np.mod(np.asarray(y, dtype=float), self.length)
        i = self.segment_of_y(y)
        return self.vertices[i] + (y - self.y_knots[i])[..., None] * self.directions[i]

    def polygon(self) -> Cycle:
        return Cycle.from_points(self.vertices, self.cycle.level)


def _greedy_knots(cycle: Cycle, mesh: float, budget: float) -> np.ndarray:
    pos, mass = turn_atoms(cycle)
    L = cycle.length
    # a polygon's own corners are always kept, which makes the construction idempotent
    corners = np.zeros(0) if cycle.smooth else pos[(mass > 1e-12) & (pos > 0)]
    # atoms strictly inside (0, L) in order; the atom at 0 sits on the first knot
    knots = [0.0]
    csum = np.concatenate([[0.0], np.cumsum(mass)])
    cur = 0.0
    while True:
        # first atom index with position > cur
        a0 = int(np.searchsorted(pos, cur, side="right"))
        target = cur + mesh
        # first atom whose inclusion pushes the open-interval mass over budget
        acc = csum[a0:] - csum[a0]
        over = np.nonzero(acc[1:] > budget * (1 + 1e-12))[0]
        nxt = target
        if over.size:
            k = a0 + int(over[0])
            nxt = min(nxt, pos[k]) if k < pos.size else nxt
        c0 = int(np.searchsorted(corners, cur, side="right"))
        if c0 < corners.size:
            nxt = min(nxt, float(corners[c0]))
        if nxt >= L * (1 - 1e-12):
            break
        knots.append(float(nxt))
        cur = nxt
    return np.array(knots)


def _reparam_from_knots(cycle: Cycle, knots: np.ndarray) -> PolylineReparam:
    L = cycle.length
    V = cycle.point_at(knots)
    E = np.roll(V, -1, axis=0) - V
    seglen = np.hypot(*E.T)
    dirs = E / seglen[:, None]
    y_knots = np.concatenate([[0.0], np.cumsum(seglen)])
    # fine table: all cycle vertices plus knots
    s_all = np.union1d(cycle.s[:-1], knots)
    seg = np.clip(np.searchsorted(np.append(knots, L), s_all, side="right") - 1, 0, knots.size - 1)
    pts = cycle.point_at(s_all)
    y_all = y_knots[seg] + np.einsum("ij,ij->i", pts - V[seg], dirs[seg])
    s_table = np.append(s_all, L)
    y_table = np.append(y_all, y_knots[-1])
    # the projection is monotone on each segment when the turn budget holds;
    # enforce it against round-off
    y_table = np.maximum.accumulate(y_table)
    return PolylineReparam(cycle=cycle, knots=knots, vertices=V, directions=dirs, y_knots=y_knots,
                           s_table=s_table, y_table=y_table)


def affine_interpolant(cycle: Cycle, level_gap: float, budget: float = TURN_BUDGET,
                       max_refinements: int = 30) -> PolylineReparam:
    """Inscribed polygon with per-segment open turn mass <= ``budget`` and mesh <= ``2 * level_gap``.

    Knots are placed greedily from ``s = 0``. If the polygon is not simple the
    mesh is halved until it is; failure at the cycle's own resolution raises
    :class:`TurnBudgetImpossible`.
    """
    if level_gap <= 0:
        raise ValueError("level_gap must be positive")
    mesh = 2.0 * float(level_gap)
    min_mesh = float(np.min(np.diff(cycle.s)))
    for _ in range(max_refinements):
        knots = _greedy_knots(cycle, mesh, budget)
        if knots.size >= 3:
            rep = _reparam_from_knots(cycle, knots)
            if np.all(np.diff(rep.y_table) >= 0) and closed_polyline_is_simple(rep.vertices):
                return rep
        if mesh < min_mesh:
            break
        mesh *= 0.5
    raise TurnBudgetImpossible("no simple inscribed polygon satisfies the turn and mesh budgets")


# ---------------------------------------------------------------------------
# overlap of normal ribbons

def _clip_convex(subject: np.ndarray, clip: np.ndarray) -> np.ndarray:
    """Sutherland-Hodgman clipping of convex polygons (both counterclockwise)."""
    out = subject
    for k in range(clip.shape[0]):
        if out.shape[0] == 0:
            break
        a = clip[k]
        b = clip[(k + 1) % clip.shape[0]]
        edge = b - a
        side = cross2(edge, out - a)
        nxt = np.roll(out, -1, axis=0)
        side_n = np.roll(side, -1)
        new = []
        for p, q, sp, sq in zip(out, nxt, side, side_n):
            if sp >= 0:
                new.append(p)
            if (sp >= 0) != (sq >= 0):
                t = sp / (sp - sq)
                new.append(p + t * (q - p))
        out = np.array(new).reshape(-1, 2)
    return out


def _ribbon(v0, v1, n, a):
    """Counterclockwise rectangle ``segment + [-a, a] n``."""
    quad = np.array([v0 - a * n, v1 - a * n, v1 + a * n, v0 + a * n])
    if signed_area(quad) < 0:
        quad = quad[::-1]
    return quad


def overlap_bad_set(curve, a: float) -> IntervalSet:
    """Parameters whose normal segment of half-length ``a`` meets another normal segment.

    For a :class:`PolylineReparam` the normals are constant on each segment and
    the bad set on segment ``i`` is the union over ``j != i`` of the projection
    of ``R_i ∩ R_j`` onto the segment, where ``R_i`` is the segment's ribbon;
    the result is in polygon arc length. For a :class:`Cycle` the vertex
    normals of the smooth curve are used and each vertex whose normal segment
    meets another one contributes the half-edges around it (cycle arc length).
    """
    if a <= 0:
        raise ValueError("a must be positive")
    if isinstance(curve, PolylineReparam):
        return _ribbon_bad_set(curve, float(a))
    if isinstance(curve, Cycle):
        return _vertex_normal_bad_set(curve, float(a))
    raise TypeError("overlap_bad_set expects a PolylineReparam or a Cycle")


def _ribbon_bad_set(rep: PolylineReparam, a: float) -> IntervalSet:
    from scipy.spatial import cKDTree

    V = rep.vertices
    W = np.roll(V, -1, axis=0)
    N = rep.normals
    K = rep.K
    seglen = rep.segment_lengths
    mid = 0.5 * (V + W)
    reach = 0.5 * seglen + a
    tree = cKDTree(mid)
    pairs = tree.query_pairs(r=2.0 * float(np.max(reach)) + 1e-12, output_type="ndarray")
    if pairs.size:
        d = np.hypot(*(mid[pairs[:, 0]] - mid[pairs[:, 1]]).T)
        pairs = pairs[d <= reach[pairs[:, 0]] + reach[pairs[:, 1]] + 1e-12]
    ribbons = [_ribbon(V[i], W[i], N[i], a) for i in range(K)]
    starts, ends = [], []
    for i, j in pairs:
        P = _clip_convex(ribbons[i], ribbons[j])
        if P.shape[0] < 3 or abs(signed_area(P)) <= 1e-18 * max(a * a, 1e-300):
            continue
        for u, v in ((i, j), (j, i)):
            proj = (P - V[u]) @ rep.directions[u]
            lo = max(float(proj.min()), 0.0)
            hi = min(float(proj.max()), float(seglen[u]))
            if hi > lo:
                starts.append(rep.y_knots[u] + lo)
                ends.append(rep.y_knots[u] + hi)
    if not starts:
        return IntervalSet.empty(rep.length)
    # pieces meeting at a knot are computed from different segments; close the round-off gap
    eps = 1e-10 * rep.length
    return IntervalSet.from_pairs(np.array(starts) - eps, np.array(ends) + eps, rep.length)


def _vertex_normal_bad_set(cycle: Cycle, a: float, chunk: int = 512) -> IntervalSet:
    P = cycle.points
    n = perp(cycle.tangents)
    A = P - a * n
    B = P + a * n
    K = P.shape[0]
    bad = np.zeros(K, dtype=bool)
    grid = SegmentGrid(A, B, cell=max(2 * a, 1e-9))
    for idx in grid.buckets.values():
        if idx.size < 2:
            continue
        ii, jj = np.triu_indices(idx.size, k=1)
        i, j = idx[ii], idx[jj]
        hit = segments_intersect(A[i], B[i], A[j], B[j])
        bad[i[hit]] = True
        bad[j[hit]] = True
    if not bad.any():
        return IntervalSet.empty(cycle.length)
    s = cycle.s
    k = np.nonzero(bad)[0]
    prev = np.where(k > 0, s[k] - s[np.maximum(k - 1, 0)], s[-1] - s[-2])
    nxt = s[k + 1] - s[k]
    lo = s[k] - 0.5 * prev
    hi = s[k] + 0.5 * nxt
    return IntervalSet.from_pairs(np.mod(lo, cycle.length), hi, cycle.length)


# ---------------------------------------------------------------------------
# CSV interchange

def write_cycle_csv(cycle: Cycle, path) -> None:
    """Columns ``s, x, y``; the last row repeats the first vertex at ``s = length``."""
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["s", "x", "y"])
        for s, (x, y) in zip(cycle.s, cycle.closed_points):
            w.writerow([repr(float(s)), repr(float(x)), repr(float(y))])


def read_cycle_csv(path, level: float = float("nan"), fld: HamiltonianField | None = None) -> Cycle:
    """Inverse of :func:`write_cycle_csv`; a file without the closing row gets chord-length parameters."""
    with open(path, newline="") as fh:
        rows = list(csv.DictReader(fh))
    pts = np.array([[float(r["x"]), float(r["y"])] for r in rows])
    s = np.array([float(r["s"]) for r in rows])
    if pts.shape[0] < 4 or not np.array_equal(pts[0], pts[-1]):
        return Cycle.from_points(pts, level, fld)
    p = pts[:-1].copy()
    chord = np.concatenate([[0.0], np.cumsum(np.hypot(*np.diff(pts, axis=0).T))])
    smooth = not np.allclose(s, chord, rtol=1e-13, atol=0.0)
    p.setflags(write=False)
    s.setflags(write=False)
    return Cycle(level=float(level), points=p, s=s, speeds=None if fld is None else fld.speed(p), field=fld,
                 smooth=smooth)
