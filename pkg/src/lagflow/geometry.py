"""Planar polygon and segment utilities shared by the curve, region and ribbon code.

Polygons are ``(K, 2)`` vertex arrays; the closing edge from the last vertex back
to the first is implicit unless stated otherwise.
"""

from __future__ import annotations

import numpy as np


def as_points(x) -> np.ndarray:
    """Coerce ``x`` to a float array whose last axis has length 2."""
    arr = np.asarray(x, dtype=float)
    if arr.shape[-1] != 2:
        raise ValueError(f"expected points with trailing dimension 2, got shape {arr.shape}")
    return arr


def perp(v: np.ndarray) -> np.ndarray:
    """Counterclockwise rotation by a quarter turn, ``(v1, v2) -> (-v2, v1)``."""
    v = np.asarray(v, dtype=float)
    return np.stack([-v[..., 1], v[..., 0]], axis=-1)


def cross2(a: np.ndarray, b: np.ndarray) -> np.ndarray:
    return a[..., 0] * b[..., 1] - a[..., 1] * b[..., 0]


def signed_area(poly: np.ndarray) -> float:
    """Shoelace signed area; positive for counterclockwise vertex order."""
    p = as_points(poly)
    x, y = p[:, 0], p[:, 1]
    return 0.5 * float(np.sum(x * np.roll(y, -1) - np.roll(x, -1) * y))


def polygon_mask(poly: np.ndarray, xs: np.ndarray, ys: np.ndarray) -> np.ndarray:
    """Even-odd fill of ``poly`` sampled at the tensor grid ``ys x xs``.

    Returns a boolean array of shape ``(len(ys), len(xs))``. Each row is filled
    by a scanline pass over the edge crossings, so the cost is linear in the
    number of edges plus the number of crossings.
    """
    p = as_points(poly)
    xs = np.asarray(xs, dtype=float)
    ys = np.asarray(ys, dtype=float)
    mask = np.zeros((ys.size, xs.size), dtype=bool)
    a = p
    b = np.roll(p, -1, axis=0)
    ylo = np.minimum(a[:, 1], b[:, 1])
    yhi = np.maximum(a[:, 1], b[:, 1])
    # half-open rule [ylo, yhi) avoids double counting at shared vertices
    order = np.argsort(ylo)
    ylo, yhi, a, b = ylo[order], yhi[order], a[order], b[order]
    for row, y in enumerate(ys):
        upto = np.searchsorted(ylo, y, side="right")
        if upto == 0:
            continue
        sel = yhi[:upto] > y
        if not np.any(sel):
            continue
        aa, bb = a[:upto][sel], b[:upto][sel]
        t = (y - aa[:, 1]) / (bb[:, 1] - aa[:, 1])
        xc = np.sort(aa[:, 0] + t * (bb[:, 0] - aa[:, 0]))
        if xc.size % 2:
            xc = xc[:-1]
        lo = np.searchsorted(xs, xc[0::2], side="left")
        hi = np.searchsorted(xs, xc[1::2], side="left")
        diff = np.zeros(xs.size + 1, dtype=np.int32)
        np.add.at(diff, lo, 1)
        np.add.at(diff, hi, -1)
        mask[row] = np.cumsum(diff[:-1]) > 0
    return mask


def points_in_polygon(poly: np.ndarray, pts: np.ndarray, chunk: int = 2048) -> np.ndarray:
    """Even-odd crossing test for many points; returns a boolean array."""
    p = as_points(poly)
    q = as_points(pts).reshape(-1, 2)
    a = p
    b = np.roll(p, -1, axis=0)
    out = np.zeros(q.shape[0], dtype=bool)
    for start in range(0, q.shape[0], chunk):
        qq = q[start:start + chunk]
        px = qq[:, 0][:, None]
        py = qq[:, 1][:, None]
        ay, by = a[:, 1][None, :], b[:, 1][None, :]
        straddle = (ay > py) != (by > py)
        with np.errstate(divide="ignore", invalid="ignore"):
            xint = a[:, 0][None, :] + (py - ay) * (b[:, 0] - a[:, 0])[None, :] / (by - ay)
        hits = straddle & (px < xint)
        out[start:start + chunk] = (np.count_nonzero(hits, axis=1) % 2) == 1
    return out.reshape(np.asarray(pts).shape[:-1])


def winding_numbers(poly: np.ndarray, pts: np.ndarray) -> np.ndarray:
    """Winding number of the closed polygon around each point (nonzero rule)."""
    p = as_points(poly)
    q = as_points(pts).reshape(-1, 2)
    a = p
    b = np.roll(p, -1, axis=0)
    out = np.zeros(q.shape[0], dtype=int)
    for i, pt in enumerate(q):
        is_left = (b[:, 0] - a[:, 0]) * (pt[1] - a[:, 1]) - (pt[0] - a[:, 0]) * (b[:, 1] - a[:, 1])
        up = (a[:, 1] <= pt[1]) & (b[:, 1] > pt[1]) & (is_left > 0)
        down = (a[:, 1] > pt[1]) & (b[:, 1] <= pt[1]) & (is_left < 0)
        out[i] = int(np.count_nonzero(up)) - int(np.count_nonzero(down))
    return out.reshape(np.asarray(pts).shape[:-1])


def project_to_segments(pt: np.ndarray, a: np.ndarray, b: np.ndarray):
    """Distance from ``pt`` to each segment ``[a_k, b_k]`` and the clamped parameter."""
    d = b - a
    L2 = np.einsum("ij,ij->i", d, d)
    with np.errstate(divide="ignore", invalid="ignore"):
        u = np.where(L2 > 0, np.einsum("ij,ij->i", pt - a, d) / L2, 0.0)
    u = np.clip(u, 0.0, 1.0)
    foot = a + u[:, None] * d
    dist = np.hypot(*(foot - pt).T)
    return dist, u


def segments_intersect(p1, p2, q1, q2, eps: float = 0.0) -> np.ndarray:
    """Closed-segment intersection test, broadcast over leading dimensions."""
    p1, p2, q1, q2 = (np.asarray(v, dtype=float) for v in (p1, p2, q1, q2))
    r = p2 - p1
    s = q2 - q1
    qp = q1 - p1
    den = cross2(r, s)
    num_t = cross2(qp, s)
    num_u = cross2(qp, r)
    with np.errstate(divide="ignore", invalid="ignore"):
        t = num_t / den
        u = num_u / den
    proper = (np.abs(den) > 1e-300) & (t >= -eps) & (t <= 1 + eps) & (u >= -eps) & (u <= 1 + eps)
    # collinear overlap
    col = (np.abs(den) <= 1e-300) & (np.abs(num_t) <= 1e-14 * (1 + np.abs(qp).sum(-1)))
    rr = np.einsum("...i,...i->...", r, r)
    with np.errstate(divide="ignore", invalid="ignore"):
        t0 = np.einsum("...i,...i->...", qp, r) / rr
        t1 = t0 + np.einsum("...i,...i->...", s, r) / rr
    lo = np.minimum(t0, t1)
    hi = np.maximum(t0, t1)
    overlap = col & (hi >= -eps) & (lo <= 1 + eps)
    return proper | overlap


class SegmentGrid:
    """Uniform bucket index over a set of segments for local intersection queries."""

    def __init__(self, a: np.ndarray, b: np.ndarray, cell: float | None = None):
        self.a = np.asarray(a, dtype=float)
        self.b = np.asarray(b, dtype=float)
        lo = np.minimum(self.a, self.b)
        hi = np.maximum(self.a, self.b)
        if cell is None:
            lengths = np.hypot(*(self.b - self.a).T)
            cell = max(float(np.median(lengths)) * 4.0, 1e-9) if lengths.size else 1.0
        self.cell = float(cell)
        self.origin = lo.min(axis=0) if lo.size else np.zeros(2)
        ilo = np.floor((lo - self.origin) / self.cell).astype(np.int64)
        ihi = np.floor((hi - self.origin) / self.cell).astype(np.int64)
        buckets: dict[tuple[int, int], list[int]] = {}
        for k in range(self.a.shape[0]):
            for i in range(ilo[k, 0], ihi[k, 0] + 1):
                for j in range(ilo[k, 1], ihi[k, 1] + 1):
                    buckets.setdefault((i, j), []).append(k)
        self.buckets = {key: np.asarray(v, dtype=np.int64) for key, v in buckets.items()}

    def candidates(self, lo: np.ndarray, hi: np.ndarray) -> np.ndarray:
        """Indices of segments whose buckets overlap the box ``[lo, hi]``."""
        ilo = np.floor((np.asarray(lo) - self.origin) / self.cell).astype(np.int64)
        ihi = np.floor((np.asarray(hi) - self.origin) / self.cell).astype(np.int64)
        found = []
        for i in range(ilo[0], ihi[0] + 1):
            for j in range(ilo[1], ihi[1] + 1):
                v = self.buckets.get((i, j))
                if v is not None:
                    found.append(v)
        if not found:
            return np.zeros(0, dtype=np.int64)
        return np.unique(np.concatenate(found))

    def crossing_pairs(self) -> list[tuple[int, int]]:
        """All intersecting pairs ``(i, j)``, ``i < j``, among the indexed segments."""
        pairs = set()
        for idx in self.buckets.values():
            if idx.size < 2:
                continue
            ii, jj = np.triu_indices(idx.size, k=1)
            i, j = idx[ii], idx[jj]
            hit = segments_intersect(self.a[i], self.b[i], self.a[j], self.b[j])
            for u, v in zip(i[hit], j[hit]):
                pairs.add((int(min(u, v)), int(max(u, v))))
        return sorted(pairs)


def closed_polyline_is_simple(points: np.ndarray) -> bool:
    """True when no two non-adjacent edges of the closed polyline intersect."""
    p = as_points(points)
    n = p.shape[0]
    if n < 3:
        return False
    a = p
    b = np.roll(p, -1, axis=0)
    grid = SegmentGrid(a, b)
    for i, j in grid.crossing_pairs():
        if j - i == 1 or (i == 0 and j == n - 1):
            continue
        return False
    return True
