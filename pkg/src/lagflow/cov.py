"""Change of variables between two nested level-set cycles.

Given cycles ``gamma1`` (level h1) and ``gamma2`` (level h2) with one interior
inside the other, :func:`build_cov` pairs arcs of the two cycles by shooting
straight rays from ``gamma1`` along a fixed normal ``n_j`` per interval. The
rays start from the part of ``gamma1`` where the normal ribbons of its
turn-budgeted inscribed polygon do not overlap, stay strictly between the two
levels and land on ``gamma2`` where its tangent is close to the segment
direction ``e_j``. The result is a monotone bijection ``X12`` between finite
unions of closed intervals ``D1`` and ``D2``.

The module also holds the quantitative checks built on such pairs: slicing
of the Jacobian between two graphs, the folding ratio ``|Db|(Int)/length``,
the restricted period gap and the growth of the distance between two points
moving on the two cycles.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field as dc_field, replace
from typing import Callable, Sequence

import numpy as np
from scipy.spatial import cKDTree

from .errors import (
    DegenerateLevel,
    EmptyGoodSet,
    GraphOrderViolated,
    NotNested,
    OrientationMismatch,
)
from .field import HamiltonianField, RegionSpec, tv_measure
from .flow import advance_on_cycle, degeneracy_floor, travel_table
from .geometry import SegmentGrid, perp, points_in_polygon, segments_intersect
from .intervals import IntervalSet
from .levelset import Cycle, PolylineReparam, affine_interpolant, degree, overlap_bad_set

SQRT5 = np.sqrt(5.0)
TANGENT_MIN = np.sqrt(2.0) / 2.0
TANGENT_STRONG = 4.0 / (3.0 * np.sqrt(3.0))
MAX_PER_SEGMENT = 64
N_PROBES = 8


@dataclass(frozen=True, eq=False)
class CovInterval:
    """One matched pair ``I_{1,j} -> I_{2,j}`` with its samples of the map."""

    j: int
    segment: int
    s1_lo: float
    s1_hi: float
    s2_lo: float
    s2_hi: float
    e: np.ndarray
    n: np.ndarray
    s1: np.ndarray
    s2: np.ndarray
    d: np.ndarray

    @property
    def length1(self) -> float:
        return self.s1_hi - self.s1_lo


@dataclass(frozen=True, eq=False)
class CovMap:
    gamma1: Cycle
    gamma2: Cycle
    h1: float
    h2: float
    case: int
    sigma: float
    reparam: PolylineReparam
    intervals: tuple
    region: RegionSpec
    c_S: float
    a_bar: float
    shoot_length: float
    max_per_segment: int
    overflow: bool = False
    _grid: object = dc_field(default=None, repr=False)

    @property
    def N(self) -> int:
        return len(self.intervals)

    @property
    def level_gap(self) -> float:
        return abs(self.h1 - self.h2)

    @property
    def D1(self) -> IntervalSet:
        iv = self.intervals
        return IntervalSet.from_pairs([v.s1_lo for v in iv], [v.s1_hi for v in iv], self.gamma1.length)

    @property
    def D2(self) -> IntervalSet:
        iv = self.intervals
        return IntervalSet.from_pairs([v.s2_lo for v in iv], [np.mod(v.s2_hi, self.gamma2.length) for v in iv],
                                      self.gamma2.length)

    def measure_D2(self) -> float:
        return float(sum(v.s2_hi - v.s2_lo for v in self.intervals))

    def interval_of(self, s) -> np.ndarray:
        """Index of the interval containing each ``s`` (``-1`` outside ``D1``)."""
        s = np.mod(np.asarray(s, dtype=float), self.gamma1.length)
        lo = np.array([v.s1_lo for v in self.intervals])
        hi = np.array([v.s1_hi for v in self.intervals])
        k = np.clip(np.searchsorted(lo, s, side="right") - 1, 0, max(self.N - 1, 0))
        if self.N == 0:
            return np.full(s.shape, -1)
        inside = (s >= lo[k]) & (s <= hi[k])
        return np.where(inside, k, -1)

    def map(self, s) -> tuple[np.ndarray, np.ndarray]:
        """``(X12(s), d(s))``; NaN where ``s`` is outside ``D1`` or the ray misses."""
        s = np.atleast_1d(np.asarray(s, dtype=float))
        k = self.interval_of(s)
        out = np.full(s.shape, np.nan)
        dist = np.full(s.shape, np.nan)
        ok = k >= 0
        if ok.any():
            E = np.array([v.n for v in self.intervals])
            s2, d, _, hit = _shoot(self, s[ok], E[k[ok]])
            iv = self.intervals
            # keep the branch of the wrap used by the interval
            base = np.array([iv[j].s2_lo for j in k[ok]])
            s2 = base + np.mod(s2 - base, self.gamma2.length)
            out[ok] = np.where(hit, s2, np.nan)
            dist[ok] = np.where(hit, d, np.nan)
        return out, dist

    def graph(self, j: int) -> dict:
        """Graph coordinates of interval ``j`` over the origin ``gamma1(s1_lo)``.

        ``Y = (gamma - origin).e`` and ``f = (gamma - origin).n``, sampled on
        both curves at the stored map samples (so ``Y2[k] == Y1[k]``).
        """
        v = self.intervals[j]
        o = self.gamma1.point_at(v.s1_lo)
        p1 = self.gamma1.point_at(v.s1)
        p2 = self.gamma2.point_at(v.s2)
        return {"Y1": (p1 - o) @ v.e, "f1": (p1 - o) @ v.n,
                "Y2": (p2 - o) @ v.e, "f2": (p2 - o) @ v.n}

    def ribbon_polygon(self, j: int) -> np.ndarray:
        """Boundary of ``E_j``: along ``gamma1`` forward then back along the hit points."""
        v = self.intervals[j]
        p1 = self.gamma1.point_at(v.s1)
        p2 = p1 + v.d[:, None] * v.n
        return np.vstack([p1, p2[::-1]])

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["j", "s1_minus", "s1_plus", "s2_minus", "s2_plus", "e_j", "sup_d"])
            for v in self.intervals:
                w.writerow([v.j, f"{v.s1_lo:.12g}", f"{v.s1_hi:.12g}", f"{v.s2_lo:.12g}", f"{v.s2_hi:.12g}",
                            f"{v.e[0]:.12g} {v.e[1]:.12g}", f"{float(v.d.max()):.12g}"])


# ---------------------------------------------------------------------------
# construction

def _nesting(g1: Cycle, g2: Cycle) -> int:
    """+1 if Int(g1) is inside Int(g2), -1 for the converse, 0 otherwise."""
    in2 = points_in_polygon(g2.points, g1.points)
    in1 = points_in_polygon(g1.points, g2.points)
    if in2.all() and not in1.any():
        return 1
    if in1.all() and not in2.any():
        return -1
    return 0


def _dispatch(h1: float, h2: float, nest: int, deg: int) -> tuple[int, float]:
    """Orientation case and normal sign ``sigma`` in ``n_j = sigma * e_j^perp``."""
    table = {
        (True, 1, -1): (0, 1.0),
        (True, -1, 1): (1, 1.0),
        (False, -1, -1): (2, -1.0),
        (False, 1, 1): (3, -1.0),
    }
    key = (h1 > h2, nest, deg)
    if key not in table:
        raise OrientationMismatch(f"levels {h1:g} > {h2:g} is {h1 > h2}, nesting {nest}, degree {deg}: "
                                  "no admissible orientation case")
    return table[key]


class _Target:
    """Segment index over the polyline of ``gamma2`` for ray queries."""

    def __init__(self, g2: Cycle):
        self.a = g2.points
        self.b = np.roll(g2.points, -1, axis=0)
        self.w = self.b - self.a
        self.s = g2.s
        self.seg = np.diff(g2.s)
        self.mid = 0.5 * (self.a + self.b)
        self.tree = cKDTree(self.mid)
        self.half = 0.5 * float(np.max(np.hypot(*self.w.T)))
        self.tangent = self.w / np.hypot(*self.w.T)[:, None]


def _ray_hits(tgt: _Target, o: np.ndarray, n: np.ndarray, tmax: float):
    """First crossing of rays ``o + t n`` (``0 < t <= tmax``) with the target polyline.

    Returns ``(t, k, u)`` with ``t = inf`` where nothing is hit.
    """
    m = o.shape[0]
    t_best = np.full(m, np.inf)
    k_best = np.zeros(m, dtype=np.int64)
    u_best = np.zeros(m)
    mids = o + 0.5 * tmax * n
    lists = tgt.tree.query_ball_point(mids, r=0.5 * tmax + tgt.half + 1e-12)
    counts = np.fromiter((len(x) for x in lists), dtype=np.int64, count=m)
    if counts.sum() == 0:
        return t_best, k_best, u_best
    ray = np.repeat(np.arange(m), counts)
    seg = np.fromiter((k for x in lists for k in x), dtype=np.int64, count=int(counts.sum()))
    a, w = tgt.a[seg], tgt.w[seg]
    oo, nn = o[ray], n[ray]
    den = nn[:, 0] * w[:, 1] - nn[:, 1] * w[:, 0]
    r = a - oo
    with np.errstate(divide="ignore", invalid="ignore"):
        t = (r[:, 0] * w[:, 1] - r[:, 1] * w[:, 0]) / den
        u = (r[:, 0] * nn[:, 1] - r[:, 1] * nn[:, 0]) / den
    ok = (den != 0) & (t > 0) & (t <= tmax) & (u >= 0) & (u < 1)
    if not ok.any():
        return t_best, k_best, u_best
    ray, seg, t, u = ray[ok], seg[ok], t[ok], u[ok]
    order = np.lexsort((t, ray))
    ray, seg, t, u = ray[order], seg[order], t[order], u[order]
    first = np.ones(ray.size, dtype=bool)
    first[1:] = ray[1:] != ray[:-1]
    t_best[ray[first]] = t[first]
    k_best[ray[first]] = seg[first]
    u_best[ray[first]] = u[first]
    return t_best, k_best, u_best


def _shoot(cmap_or_ctx, s: np.ndarray, normals: np.ndarray):
    """Shoot rays from ``gamma1(s)``; returns ``(s2, d, k, ok)`` with the region test applied."""
    ctx = cmap_or_ctx if isinstance(cmap_or_ctx, _Context) else _Context.of(cmap_or_ctx)
    o = ctx.g1.point_at(s)
    t, k, u = _ray_hits(ctx.target, o, normals, ctx.tmax)
    hit = np.isfinite(t)
    if hit.any():
        # the open ray segment must stay strictly between the two levels
        frac = np.arange(1, N_PROBES + 1) / (N_PROBES + 1.0)
        tt = np.where(hit, t, 0.0)
        probes = o[:, None, :] + (tt[:, None] * frac[None, :])[..., None] * normals[:, None, :]
        hv = ctx.fld.hamiltonian(probes)
        inside = np.all((hv > ctx.lo) & (hv < ctx.hi), axis=1)
        hit &= inside
    s2 = ctx.target.s[k] + u * ctx.target.seg[k]
    return s2, np.where(hit, t, np.nan), k, hit


@dataclass
class _Context:
    g1: Cycle
    fld: HamiltonianField
    target: _Target
    tmax: float
    lo: float
    hi: float

    @classmethod
    def of(cls, cmap: CovMap) -> "_Context":
        ctx = cmap._grid
        if ctx is None:
            raise ValueError("map carries no shooting context")
        return ctx


def _predicate(ctx: _Context, rep: PolylineReparam, bad: IntervalSet, sigma: float,
               s: np.ndarray, seg: np.ndarray):
    e = rep.directions[seg]
    n = sigma * perp(e)
    good = ~bad.contains(rep.y_of_s(s)) if len(bad) else np.ones(s.shape, dtype=bool)
    s2, d, k, hit = _shoot(ctx, s, n)
    dot = np.einsum("ij,ij->i", ctx.target.tangent[k], e)
    ok = good & hit & (dot >= TANGENT_MIN)
    return ok, s2, d, dot


def build_cov(fld: HamiltonianField, gamma1: Cycle, gamma2: Cycle, samples_per_segment: int = 16,
              bisection_steps: int = 40, max_per_segment: int = MAX_PER_SEGMENT) -> CovMap:
    """Pair arcs of two nested cycles by normal rays from the good part of ``gamma1``."""
    h1, h2 = float(gamma1.level), float(gamma2.level)
    if not np.isfinite(h1) or not np.isfinite(h2):
        raise ValueError("both cycles must carry their levels")
    if h1 == h2 or gamma1 is gamma2:
        raise NotNested("equal levels: the cycles cannot be strictly nested")
    nest = _nesting(gamma1, gamma2)
    if nest == 0:
        raise NotNested("neither interior contains the other")
    d1, d2 = degree(gamma1), degree(gamma2)
    if d1 != d2:
        raise OrientationMismatch(f"degrees differ ({d1} vs {d2})")
    case, sigma = _dispatch(h1, h2, nest, d1)

    gap = abs(h1 - h2)
    c_S = float(min(np.min(fld.speed(gamma1.points)), np.min(fld.speed(gamma2.points))))
    if c_S <= 0:
        raise DegenerateLevel("a cycle touches a stagnation point")
    a_bar = (SQRT5 / c_S + 1.0) * gap
    tmax = SQRT5 / c_S * gap
    rep = affine_interpolant(gamma1, gap)
    bad = overlap_bad_set(rep, a_bar)
    ctx = _Context(g1=gamma1, fld=fld, target=_Target(gamma2), tmax=tmax, lo=min(h1, h2), hi=max(h1, h2))

    L1 = gamma1.length
    knots = np.append(rep.knots, L1)
    spacing = float(np.median(np.diff(gamma1.s)))
    segs, svals = [], []
    for i in range(rep.K):
        a, b = knots[i], knots[i + 1]
        m = max(samples_per_segment, int(np.ceil((b - a) / (0.5 * spacing))) + 1)
        svals.append(np.linspace(a, b, m))
        segs.append(np.full(m, i))
    s_all = np.concatenate(svals)
    seg_all = np.concatenate(segs)
    ok, s2_all, d_all, dot_all = _predicate(ctx, rep, bad, sigma, s_all, seg_all)

    # runs of passing samples inside each segment
    runs = []
    start = None
    for idx in range(s_all.size):
        same = idx > 0 and seg_all[idx] == seg_all[idx - 1]
        if start is not None and (not ok[idx] or not same):
            runs.append((start, idx - 1))
            start = None
        if ok[idx] and start is None:
            start = idx
    if start is not None:
        runs.append((start, s_all.size - 1))
    if not runs:
        raise EmptyGoodSet("no ray from the good set reaches the other cycle inside the region between them")

    # refine the run ends by bisection against the neighbouring failing sample
    lo_pass, lo_fail, hi_pass, hi_fail = [], [], [], []
    for r0, r1 in runs:
        lo_pass.append(s_all[r0])
        lo_fail.append(s_all[r0 - 1] if r0 > 0 and seg_all[r0 - 1] == seg_all[r0] and not ok[r0 - 1] else np.nan)
        hi_pass.append(s_all[r1])
        nxt = r1 + 1
        hi_fail.append(s_all[nxt] if nxt < s_all.size and seg_all[nxt] == seg_all[r1] and not ok[nxt] else np.nan)
    run_seg = np.array([seg_all[r0] for r0, _ in runs])
    lo_edge = _bisect(ctx, rep, bad, sigma, np.array(lo_pass), np.array(lo_fail), run_seg, bisection_steps)
    hi_edge = _bisect(ctx, rep, bad, sigma, np.array(hi_pass), np.array(hi_fail), run_seg, bisection_steps)

    intervals = []
    overflow = False
    L2 = gamma2.length
    per_seg: dict[int, list] = {}
    for r, (r0, r1) in enumerate(runs):
        i = int(run_seg[r])
        s_in = s_all[r0:r1 + 1]
        s_pts = np.unique(np.concatenate([[lo_edge[r]], s_in, [hi_edge[r]]]))
        if s_pts[-1] - s_pts[0] <= 0:
            continue
        okp, s2p, dp, dotp = _predicate(ctx, rep, bad, sigma, s_pts, np.full(s_pts.size, i))
        keep = okp
        s_pts, s2p, dp, dotp = s_pts[keep], s2p[keep], dp[keep], dotp[keep]
        if s_pts.size < 2 or not np.any(dotp >= TANGENT_STRONG):
            continue
        # unwrap the image so it increases through the seam of gamma2
        s2u = s2p[0] + np.concatenate([[0.0], np.cumsum(np.mod(np.diff(s2p) + 0.5 * L2, L2) - 0.5 * L2)])
        s2u = np.mod(s2u[0], L2) + (s2u - s2u[0])
        per_seg.setdefault(i, []).append((s_pts, s2u, dp))
    for i in sorted(per_seg):
        comps = per_seg[i]
        if len(comps) > max_per_segment:
            overflow = True
            comps = sorted(comps, key=lambda c: c[0][-1] - c[0][0], reverse=True)[:max_per_segment]
            comps.sort(key=lambda c: c[0][0])
        e = rep.directions[i]
        n = sigma * perp(e)
        for s_pts, s2u, dp in comps:
            s_pts.setflags(write=False)
            intervals.append(CovInterval(j=len(intervals), segment=i, s1_lo=float(s_pts[0]), s1_hi=float(s_pts[-1]),
                                         s2_lo=float(s2u[0]), s2_hi=float(s2u[-1]), e=e, n=n,
                                         s1=s_pts, s2=s2u, d=dp))
    if not intervals or sum(v.length1 for v in intervals) <= 0:
        raise EmptyGoodSet("the good set has zero measure")
    inner, outer = (gamma1, gamma2) if nest == 1 else (gamma2, gamma1)
    region = RegionSpec.annulus(outer.points, inner.points, check=False)
    return CovMap(gamma1=gamma1, gamma2=gamma2, h1=h1, h2=h2, case=case, sigma=sigma, reparam=rep,
                  intervals=tuple(intervals), region=region, c_S=c_S, a_bar=a_bar, shoot_length=tmax,
                  max_per_segment=max_per_segment, overflow=overflow, _grid=ctx)


def _bisect(ctx, rep, bad, sigma, s_pass, s_fail, seg, steps):
    a = s_pass.copy()
    b = s_fail.copy()
    todo = np.isfinite(b)
    if not todo.any():
        return a
    for _ in range(steps):
        mid = 0.5 * (a[todo] + b[todo])
        ok, *_ = _predicate(ctx, rep, bad, sigma, mid, seg[todo])
        aa, bb = a[todo], b[todo]
        aa[ok] = mid[ok]
        bb[~ok] = mid[~ok]
        a[todo], b[todo] = aa, bb
    return a


# ---------------------------------------------------------------------------
# verification

@dataclass(frozen=True)
class CovReport:
    sup_d: float
    d_bound: float
    distance_ok: bool
    winding: float
    monotone_ok: bool
    leftover1: float
    leftover2: float
    tv_A: float
    c1_fit: float
    c2_fit: float
    disjoint_ok: bool
    n_intervals: int
    overflow: bool
    slack: float

    @property
    def passed(self) -> bool:
        return self.distance_ok and self.monotone_ok and self.disjoint_ok


def _tv_resolution(cmap: CovMap) -> tuple[int, tuple]:
    win = cmap.region.bounding_window()
    width = float(np.median(np.concatenate([v.d for v in cmap.intervals])))
    n = int(np.clip(np.ceil(8.0 * win[2] / max(width, 1e-12) / 256.0) * 256, 512, 8192))
    return n, win


def region_tv(cmap: CovMap, fld: HamiltonianField, resolution: int | None = None) -> float:
    """``|Db|`` of the region between the cycles, on a grid fine enough to resolve its width."""
    n, win = _tv_resolution(cmap)
    return tv_measure(fld, cmap.region, resolution or n, window=win)


def _monotone(cmap: CovMap) -> tuple[float, bool]:
    L2 = cmap.gamma2.length
    s2 = np.concatenate([v.s2 for v in cmap.intervals])
    inner_ok = all(np.all(np.diff(v.s2) > 0) for v in cmap.intervals)
    steps = np.mod(np.diff(np.append(s2, s2[0])), L2)
    winding = float(steps.sum() / L2)
    return winding, inner_ok and abs(winding - 1.0) < 1e-9


def _ribbons_disjoint(cmap: CovMap) -> bool:
    polys = [cmap.ribbon_polygon(j) for j in range(cmap.N)]
    a = np.vstack(polys)
    b = np.vstack([np.roll(p, -1, axis=0) for p in polys])
    owner = np.concatenate([np.full(p.shape[0], j) for j, p in enumerate(polys)])
    grid = SegmentGrid(a, b)
    for idx in grid.buckets.values():
        if idx.size < 2:
            continue
        ii, jj = np.triu_indices(idx.size, k=1)
        i, j = idx[ii], idx[jj]
        diff = owner[i] != owner[j]
        if diff.any() and np.any(segments_intersect(a[i[diff]], b[i[diff]], a[j[diff]], b[j[diff]])):
            return False
    # no boundary crossings: a ribbon could still sit inside another one
    for j, p in enumerate(polys):
        for k in (j - 1, (j + 1) % len(polys)):
            if k != j and points_in_polygon(polys[k], p[:1]).any():
                return False
    return True


def verify_cov(cmap: CovMap, fld: HamiltonianField, slack: float = 0.05, tv_A: float | None = None) -> CovReport:
    """Distance bound, cyclic monotonicity, fitted leftover constants and ribbon disjointness."""
    gap = cmap.level_gap
    sup_d = float(max(v.d.max() for v in cmap.intervals))
    bound = 2.0 * np.sqrt(2.0) * gap / cmap.c_S
    winding, mono = _monotone(cmap)
    left1 = cmap.gamma1.length - cmap.D1.measure()
    left2 = cmap.gamma2.length - cmap.measure_D2()
    tv = region_tv(cmap, fld) if tv_A is None else float(tv_A)
    left = max(left1, left2, 0.0)
    # split the leftover evenly between the two terms of the bound
    c1 = left / (2.0 * gap)
    c2 = left / (2.0 * tv) if tv > 0 else np.inf
    return CovReport(sup_d=sup_d, d_bound=bound, distance_ok=sup_d <= bound * (1 + slack), winding=winding,
                     monotone_ok=mono, leftover1=left1, leftover2=left2, tv_A=tv, c1_fit=c1, c2_fit=c2,
                     disjoint_ok=_ribbons_disjoint(cmap), n_intervals=cmap.N, overflow=cmap.overflow, slack=slack)


# ---------------------------------------------------------------------------
# slicing and folding

def _as_pairs(D) -> list[tuple[float, float]]:
    if isinstance(D, IntervalSet):
        return D.pieces()
    D = np.asarray(D, dtype=float)
    return [tuple(D)] if D.ndim == 1 else [tuple(r) for r in D]


def slicing_bound(D, f1: Callable, f2: Callable, fld: HamiltonianField, frame, resolution: int = 512,
                  n_quad: int = 4096) -> tuple[float, float]:
    """Jump of b across the strip between two graphs versus ``|Db|`` of the strip.

    ``frame = (origin, e, n)``; the graphs are ``x1 -> origin + x1 e + f(x1) n``
    for ``x1`` in the intervals ``D``. ``lhs`` is the larger of the two frame
    components of ``int_D |g(top) - g(bottom)| dx1``; ``rhs`` is ``tv_measure``
    of the strip on a ``resolution``-cell grid over its bounding square.
    """
    origin, e, n = (np.asarray(v, dtype=float) for v in frame)
    pieces = [(a, b) for a, b in _as_pairs(D) if b > a]
    if not pieces:
        return 0.0, 0.0
    lhs = np.zeros(2)
    corners = []
    for a, b in pieces:
        x = a + (b - a) * (np.arange(n_quad) + 0.5) / n_quad
        lo = np.asarray(f1(x), dtype=float) * np.ones_like(x)
        hi = np.asarray(f2(x), dtype=float) * np.ones_like(x)
        if np.any(lo > hi + 1e-14):
            raise GraphOrderViolated("the lower graph exceeds the upper one")
        pb = origin + x[:, None] * e + lo[:, None] * n
        pt = origin + x[:, None] * e + hi[:, None] * n
        jump = fld.velocity(pt) - fld.velocity(pb)
        w = (b - a) / n_quad
        lhs += w * np.abs(np.stack([jump @ e, jump @ n], axis=-1)).sum(axis=0)
        corners.append(np.vstack([pb, pt]))
    thick = max(float(np.max(np.asarray(f2(x)) - np.asarray(f1(x)))) for a, b in pieces
                for x in [np.linspace(a, b, 257)])
    if thick <= 0:
        return float(lhs.max()), 0.0
    pts = np.vstack(corners)
    c = 0.5 * (pts.min(axis=0) + pts.max(axis=0))
    half = 0.5 * float(np.max(pts.max(axis=0) - pts.min(axis=0)))

    def inside(X, Y):
        q = np.stack([X - origin[0], Y - origin[1]], axis=-1)
        x1 = q @ e
        x2 = q @ n
        m = np.zeros(X.shape, dtype=bool)
        for a, b in pieces:
            sel = (x1 >= a) & (x1 < b)
            if sel.any():
                m[sel] |= (x2[sel] >= np.asarray(f1(x1[sel])) ) & (x2[sel] < np.asarray(f2(x1[sel])))
        return m

    region = RegionSpec.from_predicate(inside)
    rhs = tv_measure(fld, region, resolution, window=(float(c[0]), float(c[1]), half))
    return float(lhs.max()), rhs


@dataclass(frozen=True)
class FoldingReport:
    tv_interior: float
    length: float
    ratio: float
    c_fit: float | None
    passed: bool | None


def folding_check(cycle: Cycle, fld: HamiltonianField, c_fit: float | None = None,
                  resolution: int = 512) -> FoldingReport:
    """``|Db|(Int)`` over the cycle length, compared with a calibrated constant when given."""
    sp = fld.speed(cycle.points)
    if fld.sup_speed() <= 0 or np.min(sp) <= degeneracy_floor(fld):
        raise DegenerateLevel("the cycle is not admissible: the speed vanishes on it")
    tv = tv_measure(fld, RegionSpec.interior(cycle.points), resolution)
    ratio = tv / cycle.length
    return FoldingReport(tv_interior=tv, length=cycle.length, ratio=ratio, c_fit=c_fit,
                         passed=None if c_fit is None else ratio >= c_fit)


def calibrate_folding(cycles: Sequence[Cycle], fld: HamiltonianField, resolution: int = 512) -> tuple[float, float]:
    """``(c_fit, spread)``: the smallest ratio and the largest relative deviation from the median."""
    r = np.array([folding_check(c, fld, resolution=resolution).ratio for c in cycles])
    med = float(np.median(r))
    return float(r.min()), float(np.max(np.abs(r / med - 1.0)))


# ---------------------------------------------------------------------------
# periods and two-point growth

def period_gap(cmap: CovMap, F1=None, fld: HamiltonianField | None = None,
               tv_A: float | None = None) -> tuple[float, float]:
    """``|T(gamma1 on F1) - T(gamma2 on X12(F1))|`` and ``|Db|(A) / c_S^2``."""
    fld = fld or cmap.gamma1.field
    tv = region_tv(cmap, fld) if tv_A is None else float(tv_A)
    bound = tv / cmap.c_S ** 2
    t1 = travel_table(cmap.gamma1, fld.speed(cmap.gamma1.points))
    t2 = travel_table(cmap.gamma2, fld.speed(cmap.gamma2.points))
    pieces = [(v.s1_lo, v.s1_hi) for v in cmap.intervals] if F1 is None else _as_pairs(F1)
    T1 = T2 = 0.0
    for a, b in pieces:
        for v in cmap.intervals:
            lo, hi = max(a, v.s1_lo), min(b, v.s1_hi)
            if hi <= lo:
                continue
            T1 += float(t1.tau_at(hi) - t1.tau_at(lo)) if hi < cmap.gamma1.length else t1.period - float(t1.tau_at(lo))
            y_lo = np.interp(lo, v.s1, v.s2) if lo > v.s1_lo else v.s2_lo
            y_hi = np.interp(hi, v.s1, v.s2) if hi < v.s1_hi else v.s2_hi
            if lo > v.s1_lo or hi < v.s1_hi:
                ex, _ = cmap.map(np.array([lo, hi]))
                y_lo = ex[0] if lo > v.s1_lo and np.isfinite(ex[0]) else y_lo
                y_hi = ex[1] if hi < v.s1_hi and np.isfinite(ex[1]) else y_hi
            T2 += _tau_span(t2, y_lo, y_hi)
    return abs(T1 - T2), bound


def _tau_span(table, a: float, b: float) -> float:
    """Travel time over the arc ``[a, b]`` with ``b`` possibly beyond the length."""
    L = table.cycle.length
    turns, a0 = divmod(a, L)
    b0 = b - turns * L
    if b0 <= L:
        return float(np.interp(b0, table.cycle.s, table.tau) - np.interp(a0, table.cycle.s, table.tau))
    return (table.period - float(np.interp(a0, table.cycle.s, table.tau))
            + float(np.interp(b0 - L, table.cycle.s, table.tau)))


@dataclass(frozen=True)
class TwoPointReport:
    times: np.ndarray
    gaps: np.ndarray
    envelope: np.ndarray
    alpha: float
    beta: float
    predictor: float
    envelope_ok: bool


def two_point_gap_check(fld: HamiltonianField, gamma1: Cycle, gamma2: Cycle, s1: float, s2: float, times,
                        tv_A: float | None = None, resolution: int = 1024) -> TwoPointReport:
    """Distance between two points moving on their cycles, with an affine envelope fit.

    The running maximum of the distance is fitted by least squares to
    ``alpha + beta t``; ``alpha`` is then raised until the line dominates the
    envelope. ``predictor = (|h1 - h2| + |Db|(A)) / T(gamma1)`` is the slope
    scale the growth is compared against across a sweep.
    """
    times = np.asarray(times, dtype=float)
    t1 = travel_table(gamma1, fld.speed(gamma1.points))
    t2 = travel_table(gamma2, fld.speed(gamma2.points))
    p1 = gamma1.point_at(np.array([advance_on_cycle(t1, s1, t) for t in times]))
    p2 = gamma2.point_at(np.array([advance_on_cycle(t2, s2, t) for t in times]))
    gaps = np.hypot(*(p1 - p2).T)
    env = np.maximum.accumulate(gaps)
    if times.size >= 2 and np.ptp(times) > 0:
        beta, alpha = np.polyfit(times, env, 1)
    else:
        beta, alpha = 0.0, float(env.max(initial=0.0))
    alpha = float(alpha + max(0.0, float(np.max(env - (alpha + beta * times)))))
    if tv_A is None:
        nest = _nesting(gamma1, gamma2)
        if nest == 0:
            raise NotNested("neither interior contains the other")
        inner, outer = (gamma1, gamma2) if nest == 1 else (gamma2, gamma1)
        reg = RegionSpec.annulus(outer.points, inner.points, check=False)
        tv_A = tv_measure(fld, reg, resolution, window=reg.bounding_window())
    pred = (abs(gamma1.level - gamma2.level) + tv_A) / t1.period
    ok = bool(np.all(env <= alpha + beta * times + 1e-12 * max(1.0, float(env.max(initial=0.0)))))
    return TwoPointReport(times=times, gaps=gaps, envelope=env, alpha=alpha, beta=float(beta),
                          predictor=float(pred), envelope_ok=ok)


def shuffled(cmap: CovMap, seed: int = 0) -> CovMap:
    """Copy of the map with the images permuted across intervals (a broken map for tests)."""
    rng = np.random.default_rng(seed)
    perm = rng.permutation(cmap.N)
    if cmap.N > 1 and np.all(perm == np.arange(cmap.N)):
        perm = np.roll(perm, 1)
    src = cmap.intervals
    new = tuple(replace(v, s2=src[perm[k]].s2, s2_lo=src[perm[k]].s2_lo, s2_hi=src[perm[k]].s2_hi)
                for k, v in enumerate(src))
    return replace(cmap, intervals=new)
