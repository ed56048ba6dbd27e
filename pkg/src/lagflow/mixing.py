"""Indicator transport on the unit disk and its mixing scales.

Rasters live on an ``n x n`` cell grid over ``[-1, 1]^2`` with row 0 at the
bottom (``y = -1``). Cells whose centers lie in the open unit disk carry the
datum; the rest are masked.

Ball averages use row prefix sums: the sum over a lattice disk is one
difference of prefix values per disk row, so a scan of all centers at radius
``R`` cells costs ``O(R n^2)``.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field as dc_field
from typing import Callable, Sequence

import numpy as np
from scipy.sparse import coo_matrix, diags
from scipy.sparse.linalg import cg
from scipy.spatial import cKDTree

from .errors import NotInvariant, ParamsInfeasible, Unbalanced
from .field import HamiltonianField
from .flow import Foliation
from .pgm import read_p2, write_p2

DISK_AREA = np.pi


# ---------------------------------------------------------------------------
# rasters

def cell_centers(n: int) -> np.ndarray:
    return -1.0 + (2.0 / n) * (np.arange(n) + 0.5)


def disk_mask(n: int) -> np.ndarray:
    c = cell_centers(n)
    X, Y = np.meshgrid(c, c)
    return X * X + Y * Y < 1.0


@dataclass(frozen=True, eq=False)
class IndicatorRaster:
    """Values on the cells of ``[-1, 1]^2``; ``values[i, j]`` sits at ``(x_j, y_i)``.

    Inside the disk the values are +1/-1 for indicator data (real values are
    accepted for test data); masked cells hold 0.
    """

    values: np.ndarray
    mask: np.ndarray

    @property
    def n(self) -> int:
        return int(self.values.shape[0])

    @property
    def h(self) -> float:
        return 2.0 / self.n

    @classmethod
    def from_function(cls, n: int, fn: Callable) -> "IndicatorRaster":
        """``fn(x, y)`` evaluated at cell centers; boolean output maps to +1/-1."""
        c = cell_centers(n)
        X, Y = np.meshgrid(c, c)
        m = X * X + Y * Y < 1.0
        v = np.asarray(fn(X, Y))
        v = np.where(v, 1.0, -1.0) if v.dtype == bool else v.astype(float)
        v = np.where(m, v, 0.0)
        v.setflags(write=False)
        m.setflags(write=False)
        return cls(values=v, mask=m)

    @classmethod
    def from_set(cls, n: int, inside: Callable) -> "IndicatorRaster":
        return cls.from_function(n, lambda x, y: np.asarray(inside(x, y), dtype=bool))

    def with_values(self, v: np.ndarray) -> "IndicatorRaster":
        v = np.where(self.mask, v, 0.0)
        v.setflags(write=False)
        return IndicatorRaster(values=v, mask=self.mask)

    def mean(self) -> float:
        return float(self.values[self.mask].mean())

    def count(self, sign: int) -> int:
        return int(np.count_nonzero(self.values[self.mask] * sign > 0))

    def is_balanced(self, tol: float | None = None) -> bool:
        return abs(self.mean()) <= (4.0 / self.n if tol is None else tol)

    def to_p2(self, path, comment: str | None = None) -> None:
        """0 / 128 / 255 for -1 / masked / +1; the top row (y = +1) is written first."""
        img = np.where(self.mask, np.where(self.values > 0, 255, 0), 128)
        write_p2(path, img[::-1], 255, comment)

    @classmethod
    def from_p2(cls, path) -> "IndicatorRaster":
        img, maxval = read_p2(path)
        if img.shape[0] != img.shape[1]:
            raise ValueError("indicator rasters must be square")
        img = img[::-1]
        m = disk_mask(img.shape[0])
        v = np.where(img > 0.75 * maxval, 1.0, np.where(img < 0.25 * maxval, -1.0, 0.0))
        m = m & (v != 0)
        v = np.where(m, v, 0.0)
        v.setflags(write=False)
        m.setflags(write=False)
        return cls(values=v, mask=m)


def half_disk(n: int) -> IndicatorRaster:
    return IndicatorRaster.from_set(n, lambda x, y: y > 0)


def sector_datum(n: int, angle: float = np.pi / 2) -> IndicatorRaster:
    """Alternating sectors of opening ``angle`` around the origin (+1 on the first)."""
    return IndicatorRaster.from_set(n, lambda x, y: np.mod(np.arctan2(y, x), 2 * angle) < angle)


def stripes(n: int, width: float) -> IndicatorRaster:
    """Horizontal stripes of the given width, +1 on ``[0, w)``, alternating."""
    return IndicatorRaster.from_set(n, lambda x, y: np.mod(np.floor(y / width), 2) == 0)


def centered_disk(n: int, radius: float = 0.5) -> IndicatorRaster:
    return IndicatorRaster.from_set(n, lambda x, y: x * x + y * y < radius * radius)


def checkerboard(n: int, width: float) -> IndicatorRaster:
    return IndicatorRaster.from_set(
        n, lambda x, y: np.mod(np.floor(x / width) + np.floor(y / width), 2) == 0)


# ---------------------------------------------------------------------------
# transport

def check_invariant(fld: HamiltonianField, tol: float | None = None, samples: int = 4096) -> float:
    """Largest normal velocity on the unit circle; raises :class:`NotInvariant` above ``tol``."""
    th = np.linspace(0.0, 2 * np.pi, samples, endpoint=False)
    # just inside the circle, where a compactly supported field is still defined
    r = 1.0 - 1e-9
    x = np.stack([r * np.cos(th), r * np.sin(th)], axis=-1)
    flux = float(np.max(np.abs(np.einsum("ij,ij->i", fld.velocity(x), x / r))))
    sup = fld.sup_speed()
    limit = (1e-3 * sup + 1e-12) if tol is None else tol
    if flux > limit:
        raise NotInvariant(f"normal velocity {flux:.3g} on the unit circle exceeds {limit:.3g}")
    return flux


_FOLIATIONS: dict = {}


def raster_foliation(fld: HamiltonianField, n: int, n_levels: int = 1024, resolution: int = 512) -> Foliation:
    """Ladder flow for the cell centers of the disk (cached per field and grid)."""
    key = (id(fld), int(n), int(n_levels), int(resolution))
    hit = _FOLIATIONS.get(key)
    if hit is not None and hit[0] is fld:
        return hit[1]
    m = disk_mask(n)
    c = cell_centers(n)
    X, Y = np.meshgrid(c, c)
    pts = np.stack([X[m], Y[m]], axis=-1)
    fol = Foliation(fld, pts, n_levels=n_levels, resolution=resolution)
    if len(_FOLIATIONS) > 4:
        _FOLIATIONS.clear()
    _FOLIATIONS[key] = (fld, fol)
    return fol


def transport_indicator(fld: HamiltonianField, u0: IndicatorRaster, t: float,
                        foliation: Foliation | None = None) -> IndicatorRaster:
    """Pull-back ``u(t)(y) = u0(X(-t, y))`` sampled at the cell centers."""
    check_invariant(fld)
    if t == 0:
        return u0
    fol = foliation or raster_foliation(fld, u0.n)
    back = fol.at(-float(t))
    n, h = u0.n, u0.h
    j = np.clip(np.floor((back[:, 0] + 1.0) / h).astype(np.int64), 0, n - 1)
    i = np.clip(np.floor((back[:, 1] + 1.0) / h).astype(np.int64), 0, n - 1)
    vals = u0.values[i, j]
    # a foot landing on a masked cell takes the nearest datum value along the radius
    off = ~u0.mask[i, j]
    if off.any():
        p = back[off] * (1.0 - 2.0 * h) / np.maximum(np.hypot(*back[off].T), 1e-300)[:, None]
        jj = np.clip(np.floor((p[:, 0] + 1.0) / h).astype(np.int64), 0, n - 1)
        ii = np.clip(np.floor((p[:, 1] + 1.0) / h).astype(np.int64), 0, n - 1)
        vals[off] = u0.values[ii, jj]
    out = np.zeros((n, n))
    out[u0.mask] = vals
    return u0.with_values(out)


# ---------------------------------------------------------------------------
# disk sums

def disk_rows(R: float) -> tuple[np.ndarray, np.ndarray]:
    """Row offsets and half-widths of the lattice disk ``dx^2 + dy^2 <= R^2``."""
    r = int(np.floor(R + 1e-12))
    dy = np.arange(-r, r + 1)
    w = np.floor(np.sqrt(np.maximum(R * R - dy * dy, 0.0)) + 1e-12).astype(np.int64)
    return dy, w


def disk_cell_count(R: float) -> int:
    _, w = disk_rows(R)
    return int(np.sum(2 * w + 1))


def disk_sums(img: np.ndarray, R: float) -> np.ndarray:
    """Sum of ``img`` over the lattice disk of radius ``R`` cells around every cell.

    ``img`` may carry leading channel axes; cells outside the array count as 0.
    """
    img = np.asarray(img, dtype=float)
    n_rows, n_cols = img.shape[-2:]
    dy, w = disk_rows(R)
    r = int(dy[-1]) if dy.size else 0
    pad = r + 1
    lead = img.shape[:-2]
    # prefix along rows, padded so that every disk row is a plain slice
    P = np.zeros(lead + (n_rows + 2 * r, n_cols + 1 + 2 * pad))
    csum = np.cumsum(img, axis=-1)
    P[..., r:r + n_rows, pad + 1:pad + 1 + n_cols] = csum
    P[..., r:r + n_rows, pad + 1 + n_cols:] = csum[..., -1:]
    out = np.zeros(img.shape)
    for d, ww in zip(dy.tolist(), w.tolist()):
        rows = P[..., r + d:r + d + n_rows, :]
        hi = rows[..., pad + 1 + ww:pad + 1 + ww + n_cols]
        lo = rows[..., pad - ww:pad - ww + n_cols]
        out += hi - lo
    return out


def _sign_fractions(u: IndicatorRaster, R: float) -> np.ndarray:
    """Fractions of the lattice disk covered by +1 and by -1, at every cell."""
    chans = np.stack([(u.values > 0).astype(float), (u.values < 0).astype(float)])
    return disk_sums(chans, R) / disk_cell_count(R)


def _bracket_search(pred: Callable[[float], bool], lo: float, hi_cap: float, tol: float,
                    want_true_above: bool) -> float:
    """Boundary of a monotone predicate on ``[lo, hi_cap]`` by doubling then bisection.

    ``want_true_above``: the predicate holds for large arguments; returns the
    smallest accepted value. Otherwise it holds for small arguments and the
    largest accepted value is returned.
    """
    if want_true_above:
        if pred(lo):
            return lo
        a, b = lo, lo
        while True:
            b = min(2.0 * b, hi_cap)
            if pred(b):
                break
            a = b
            if b >= hi_cap:
                return hi_cap
        while b - a > tol:
            m = 0.5 * (a + b)
            if pred(m):
                b = m
            else:
                a = m
        return b
    if not pred(lo):
        return 0.0
    a, b = lo, lo
    while True:
        b = min(2.0 * max(b, tol), hi_cap)
        if not pred(b):
            break
        a = b
        if b >= hi_cap:
            return hi_cap
    while b - a > tol:
        m = 0.5 * (a + b)
        if pred(m):
            a = m
        else:
            b = m
    return a


# ---------------------------------------------------------------------------
# scales

def density_condition(u: IndicatorRaster, delta: float, k: float) -> np.ndarray:
    """Per-cell truth of both ``fraction < 1 - k`` conditions (masked cells are True)."""
    fr = _sign_fractions(u, delta / u.h)
    ok = (fr[0] < 1.0 - k) & (fr[1] < 1.0 - k)
    return ok | ~u.mask


def geometric_scale(u: IndicatorRaster, k: float = 0.25, tol: float | None = None) -> float:
    """Smallest ball radius at which every disk point sees both signs with accuracy ``k``."""
    if not 0.0 < k < 0.5:
        raise ValueError("k must lie in (0, 1/2)")
    h = u.h
    return _bracket_search(lambda d: bool(density_condition(u, d, k).all()), h, 2.0,
                           2.0 * h if tol is None else tol, want_true_above=True)


def mixing_witness(u: IndicatorRaster, delta: float, k: float = 0.25):
    """A disk point whose ball of radius ``delta`` is almost one-signed, or ``None``.

    Returns ``(x, fraction_plus, fraction_minus)`` for the worst offending cell.
    """
    fr = _sign_fractions(u, delta / u.h)
    worst = np.where(u.mask, np.maximum(fr[0], fr[1]), -1.0)
    i, j = np.unravel_index(int(np.argmax(worst)), worst.shape)
    if worst[i, j] < 1.0 - k:
        return None
    c = cell_centers(u.n)
    return np.array([c[j], c[i]]), float(fr[0, i, j]), float(fr[1, i, j])


def _neumann_laplacian(mask: np.ndarray):
    idx = -np.ones(mask.shape, dtype=np.int64)
    idx[mask] = np.arange(int(mask.sum()))
    rows, cols = [], []
    for a, b in ((idx[:, :-1], idx[:, 1:]), (idx[:-1, :], idx[1:, :])):
        both = (a >= 0) & (b >= 0)
        rows.append(a[both])
        cols.append(b[both])
    r = np.concatenate(rows)
    c = np.concatenate(cols)
    m = int(mask.sum())
    adj = coo_matrix((np.ones(r.size), (r, c)), shape=(m, m)).tocsr()
    adj = adj + adj.T
    deg = np.asarray(adj.sum(axis=1)).ravel()
    return (diags(deg) - adj).tocsr()


_LAPLACIANS: dict = {}


def poisson_neumann(u: IndicatorRaster, rtol: float = 1e-8) -> np.ndarray:
    """Zero-mean solution of ``-Lap phi = u`` with no-flux walls on the disk cells."""
    key = u.n
    L = _LAPLACIANS.get(key)
    if L is None:
        L = _neumann_laplacian(u.mask)
        _LAPLACIANS.clear()
        _LAPLACIANS[key] = L
    f = u.values[u.mask]
    f = f - f.mean()
    rhs = f * u.h * u.h
    if not np.any(rhs):
        return np.zeros(f.size)
    phi, info = cg(L, rhs, rtol=rtol, maxiter=20 * L.shape[0])
    if info != 0:
        raise RuntimeError("conjugate gradients did not converge")
    return phi - phi.mean()


def functional_scale(u: IndicatorRaster, rtol: float = 1e-8, check_balance: bool = True) -> float:
    """Negative Sobolev norm: ``||grad phi||_L2`` of the Neumann solution of ``-Lap phi = u``."""
    if check_balance and not u.is_balanced():
        raise Unbalanced(f"mean {u.mean():.3g} exceeds the balance tolerance {4.0 / u.n:.3g}")
    phi = poisson_neumann(u, rtol)
    if not np.any(phi):
        return 0.0
    f = u.values[u.mask]
    # phi^T L phi = h^2 f^T phi is the discrete gradient energy
    return float(np.sqrt(max(u.h * u.h * float(np.dot(f - f.mean(), phi)), 0.0)))


def g0_area(A: IndicatorRaster, r0: float, k0: float) -> float:
    """Area of the disk points whose ball of radius ``r0`` lies in A up to a fraction ``k0``."""
    R = r0 / A.h
    frac = disk_sums((A.values > 0).astype(float), R) / disk_cell_count(R)
    return float(np.count_nonzero((frac > 1.0 - k0) & A.mask) * A.h * A.h)


def r0_bar(A: IndicatorRaster, alpha0: float = DISK_AREA / 4, k0: float = 1.0 / 640,
           tol: float | None = None) -> float:
    """Largest radius at which the well-inside part of A still has area ``alpha0``."""
    if not 0.0 < alpha0 < DISK_AREA:
        raise ValueError("alpha0 must lie in (0, area of the disk)")
    if not 0.0 < k0 < 0.5:
        raise ValueError("k0 must lie in (0, 1/2)")
    h = A.h
    return _bracket_search(lambda r: g0_area(A, r, k0) >= alpha0, 0.5 * h, 2.0,
                           0.125 * h if tol is None else tol, want_true_above=False)


def _interface_segments(values: np.ndarray, usable: np.ndarray):
    """Marching-squares segments of the zero level on the cell-center lattice."""
    v00, v01 = values[:-1, :-1], values[:-1, 1:]
    v10, v11 = values[1:, :-1], values[1:, 1:]
    ok = usable[:-1, :-1] & usable[:-1, 1:] & usable[1:, :-1] & usable[1:, 1:]
    n = values.shape[0]
    c = cell_centers(n)
    h = 2.0 / n
    I, J = np.meshgrid(np.arange(n - 1), np.arange(n - 1), indexing="ij")
    x0, y0 = c[J], c[I]

    def cross(a, b):
        with np.errstate(divide="ignore", invalid="ignore"):
            return np.clip(a / (a - b), 0.0, 1.0)

    # edge points: bottom (00-01), right (01-11), top (10-11), left (00-10)
    pts = [np.stack([x0 + h * cross(v00, v01), y0], -1),
           np.stack([x0 + h, y0 + h * cross(v01, v11)], -1),
           np.stack([x0 + h * cross(v10, v11), y0 + h], -1),
           np.stack([x0, y0 + h * cross(v00, v10)], -1)]
    s00, s01, s10, s11 = v00 > 0, v01 > 0, v10 > 0, v11 > 0
    e = [s00 != s01, s01 != s11, s10 != s11, s00 != s10]
    ecount = e[0].astype(int) + e[1] + e[2] + e[3]
    segs = []
    two = ok & (ecount == 2)
    if two.any():
        idx = np.stack([e[k][two] for k in range(4)], axis=-1)
        order = np.argsort(~idx, axis=-1, kind="stable")[:, :2]
        P = np.stack([pts[k][two] for k in range(4)], axis=1)
        r = np.arange(order.shape[0])
        segs.append((P[r, order[:, 0]], P[r, order[:, 1]]))
    four = ok & (ecount == 4)
    if four.any():
        center = 0.25 * (v00 + v01 + v10 + v11)[four]
        P = [p[four] for p in pts]
        join_diag = (center > 0) == s00[four]
        # the diagonal through the sign of v00 is connected: cut off corners 01 and 10
        a1 = np.where(join_diag[:, None], P[0], P[3])
        b1 = np.where(join_diag[:, None], P[1], P[0])
        a2 = np.where(join_diag[:, None], P[2], P[1])
        b2 = np.where(join_diag[:, None], P[3], P[2])
        segs.append((a1, b1))
        segs.append((a2, b2))
    if not segs:
        z = np.zeros((0, 2))
        return z, z
    return np.concatenate([s[0] for s in segs]), np.concatenate([s[1] for s in segs])


def _box_average(values: np.ndarray, mask: np.ndarray) -> np.ndarray:
    """3x3 mean over the unmasked neighbours; turns a sign raster into a ramp across interfaces."""
    v = np.where(mask, values, 0.0)
    w = mask.astype(float)
    pv = np.pad(v, 1)
    pw = np.pad(w, 1)
    n0, n1 = v.shape
    sv = sum(pv[di:di + n0, dj:dj + n1] for di in range(3) for dj in range(3))
    sw = sum(pw[di:di + n0, dj:dj + n1] for di in range(3) for dj in range(3))
    return np.where(mask, sv / np.maximum(sw, 1.0), 0.0)


def perimeter(A: IndicatorRaster, margin: float | None = None) -> float:
    """Length of the sign interface strictly inside the disk.

    The zero level is traced by marching squares on the 3x3 average of the
    raster, which places crossings between cell centers according to the
    local mix of signs instead of at fixed edge midpoints. Segments whose
    midpoint lies within ``margin`` (default ``2/n``) of the unit circle are
    dropped.
    """
    margin = 2.0 / A.n if margin is None else margin
    a, b = _interface_segments(_box_average(A.values, A.mask), A.mask)
    if a.shape[0] == 0:
        return 0.0
    mid = 0.5 * (a + b)
    keep = np.hypot(*mid.T) < 1.0 - margin
    return float(np.sum(np.hypot(*(b - a)[keep].T)))


def vitali_disjoint(centers, r: float) -> np.ndarray:
    """Greedy disjoint subfamily of equal balls, in input order; returns the kept indices."""
    if r <= 0:
        raise ValueError("r must be positive")
    P = np.asarray(centers, dtype=float).reshape(-1, 2)
    tree = cKDTree(P)
    blocked = np.zeros(P.shape[0], dtype=bool)
    kept = []
    for i in range(P.shape[0]):
        if blocked[i]:
            continue
        kept.append(i)
        # any ball whose center is closer than 2r meets the kept one
        for j in tree.query_ball_point(P[i], 2.0 * r * (1 - 1e-12)):
            blocked[j] = True
    return np.array(kept, dtype=np.int64)


# ---------------------------------------------------------------------------
# reports and certificates

@dataclass(frozen=True)
class MixingParams:
    k: float = 0.25
    k0: float = 0.25 / 160
    alpha0: float = DISK_AREA / 4
    alpha1: float = DISK_AREA / 4 / 480
    eps: float = DISK_AREA / 4 * 0.25 / (480 * 11)

    @classmethod
    def default(cls, k: float = 0.25) -> "MixingParams":
        a0 = DISK_AREA / 4
        return cls(k=k, k0=k / 160, alpha0=a0, alpha1=a0 / 480, eps=a0 * k / (480 * 11))

    def margin(self) -> float:
        """Left side of the parameter feasibility inequality (must be positive)."""
        k, k0, a0, a1, e = self.k, self.k0, self.alpha0, self.alpha1, self.eps
        return ((k / 10) * (0.25 - k0) - k0) * a0 - a1 * k - e * k - 10 * e


@dataclass
class MixReport:
    times: np.ndarray
    delta_g: np.ndarray
    hm1: np.ndarray
    k: float = 0.25
    bound_g: np.ndarray | None = None
    bound_a: np.ndarray | None = None
    verdicts: list = dc_field(default_factory=list)

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t", "delta_g", "hm1", "bound_g", "bound_a", "verdict"])
            for i, t in enumerate(self.times):
                bg = "" if self.bound_g is None else f"{self.bound_g[i]:.10g}"
                ba = "" if self.bound_a is None else f"{self.bound_a[i]:.10g}"
                v = self.verdicts[i] if i < len(self.verdicts) else ""
                w.writerow([f"{t:.10g}", f"{self.delta_g[i]:.10g}", f"{self.hm1[i]:.10g}", bg, ba, v])


def mixing_series(fld: HamiltonianField, u0: IndicatorRaster, times: Sequence[float], k: float = 0.25,
                  snapshot: Callable | None = None) -> MixReport:
    """Transport ``u0`` to each time and measure both scales."""
    times = np.asarray(times, dtype=float)
    dg, hm = [], []
    fol = None
    for t in times:
        if t != 0 and fol is None:
            fol = raster_foliation(fld, u0.n)
        u = transport_indicator(fld, u0, float(t), foliation=fol)
        if snapshot is not None:
            snapshot(float(t), u)
        dg.append(geometric_scale(u, k))
        hm.append(functional_scale(u, check_balance=False))
    return MixReport(times=times, delta_g=np.array(dg), hm1=np.array(hm), k=k)


@dataclass(frozen=True)
class Certificate:
    verdict: str
    c_g: float
    c_a: float
    r0_bar: float
    r0_tilde: float
    perimeter: float
    c_g_per: float
    c_a_per: float
    products_g: np.ndarray
    products_a: np.ndarray
    band_g: float
    band_a: float
    params: MixingParams

    @property
    def passed(self) -> bool:
        return self.verdict == "PASS"


def decay_certificate(report: MixReport, A: IndicatorRaster, params: MixingParams | None = None,
                      slack: float = 3.0) -> Certificate:
    """Check that both scales decay no faster than ``1/(1+t)``.

    ``c_g`` and ``c_a`` are fitted as the smallest scaled products over the
    earliest quarter of the times, divided by ``slack``; every later time
    must stay above the resulting bounds. The perimeter form of both bounds is
    fitted the same way and reported. Rows of the report receive their bounds
    and per-time verdicts.
    """
    p = params or MixingParams.default(report.k)
    if p.margin() <= 0:
        raise ParamsInfeasible(f"parameter inequality fails: margin {p.margin():.3g} <= 0")
    t = np.asarray(report.times, dtype=float)
    if t.size == 0:
        raise ValueError("empty mixing report")
    rb = r0_bar(A, p.alpha0, p.k0)
    rt = r0_bar(A, p.alpha0, 1.0 / 640)
    per = perimeter(A)
    pg = report.delta_g * (1 + t)
    pa = report.hm1 * (1 + t)
    early = np.argsort(t)[:max(1, int(np.ceil(t.size / 4)))]
    c_g = float(np.min(pg[early])) / slack / max(rb, 1e-300)
    c_a = float(np.min(pa[early])) / slack / max(rt, 1e-300)
    c_g_per = float(np.min(pg[early])) / slack * per
    c_a_per = float(np.min(pa[early])) / slack * per
    report.bound_g = c_g * rb / (1 + t)
    report.bound_a = c_a * rt / (1 + t)
    ok = (report.delta_g >= report.bound_g) & (report.hm1 >= report.bound_a) & (rb > 0) & (rt > 0)
    report.verdicts = ["PASS" if v else "FAIL" for v in ok]
    band = lambda x: float(np.max(x) / np.min(x)) if np.min(x) > 0 else np.inf
    return Certificate(verdict="PASS" if ok.all() else "FAIL", c_g=c_g, c_a=c_a, r0_bar=rb, r0_tilde=rt,
                       perimeter=per, c_g_per=c_g_per, c_a_per=c_a_per, products_g=pg, products_a=pa,
                       band_g=band(pg), band_a=band(pa), params=p)
