"""Hamiltonian fields H, their velocity b = grad-perp H and Jacobian total variation.

The rotated gradient is ``b = (-dH/dy, dH/dx)``; with this convention the
Hamiltonian ``(1 - r^2)/2`` generates the clockwise rotation ``b = (y, -x)``.

Two representations share one interface:

* :class:`AnalyticField` - closed-form H with exact derivatives (the catalogue);
* :class:`GridField` - node samples on ``[-R, R]^2`` with bilinear interpolation
  and central-difference velocity.

All points are arrays with a trailing axis of length 2 and all evaluators are
vectorized over the leading axes.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field as dc_field
from pathlib import Path
from typing import Callable

import numpy as np
from scipy import optimize

from .errors import EmptyRegion, NotNested
from .geometry import as_points, perp, points_in_polygon, polygon_mask, signed_area
from .pgm import read_p2

HAMF1_MAGIC = b"HAMF1"


@dataclass(eq=False)
class HamiltonianField:
    """Common base: a compactly supported Lipschitz H on the disk of radius ``radius``."""

    kind: str
    radius: float
    _cache: dict = dc_field(default_factory=dict, init=False, repr=False)

    # subclasses implement _h_inside and _grad_inside on points with |x| < radius
    def _h_inside(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def _grad_inside(self, p: np.ndarray) -> np.ndarray:
        raise NotImplementedError

    def hamiltonian(self, x) -> np.ndarray:
        p = as_points(x)
        out = np.zeros(p.shape[:-1])
        inside = np.hypot(p[..., 0], p[..., 1]) < self.radius
        if np.any(inside):
            out[inside] = self._h_inside(p[inside])
        return out

    def gradient(self, x) -> np.ndarray:
        p = as_points(x)
        out = np.zeros(p.shape)
        inside = np.hypot(p[..., 0], p[..., 1]) < self.radius
        if np.any(inside):
            out[inside] = self._grad_inside(p[inside])
        return out

    def velocity(self, x) -> np.ndarray:
        return perp(self.gradient(x))

    def speed(self, x) -> np.ndarray:
        v = self.velocity(x)
        return np.hypot(v[..., 0], v[..., 1])

    def sup_speed(self) -> float:
        raise NotImplementedError

    @property
    def grid_spacing(self) -> float | None:
        return None

    def node_values(self, n: int) -> tuple[np.ndarray, np.ndarray]:
        """Samples of H on an ``n x n`` node lattice over ``[-R, R]^2`` (cached).

        Returns ``(coords, values)`` with ``values[i, j] = H(coords[j], coords[i])``.
        """
        key = ("nodes", int(n))
        hit = self._cache.get(key)
        if hit is None:
            coords = np.linspace(-self.radius, self.radius, int(n))
            X, Y = np.meshgrid(coords, coords)
            values = self.hamiltonian(np.stack([X, Y], axis=-1))
            hit = (coords, values)
            self._cache[key] = hit
        return hit


@dataclass(eq=False)
class AnalyticField(HamiltonianField):
    """Closed-form Hamiltonian with exact gradient, zero outside ``radius``."""

    name: str = "analytic"
    func: Callable | None = None
    grad: Callable | None = None
    speed_bound: float | None = None
    params: dict = dc_field(default_factory=dict)

    def _h_inside(self, p):
        return self.func(p[..., 0], p[..., 1])

    def _grad_inside(self, p):
        gx, gy = self.grad(p[..., 0], p[..., 1])
        return np.stack([np.broadcast_to(gx, p.shape[:-1]), np.broadcast_to(gy, p.shape[:-1])], axis=-1)

    def sup_speed(self) -> float:
        if self.speed_bound is not None:
            return float(self.speed_bound)
        hit = self._cache.get("sup_speed")
        if hit is None:
            hit = _numeric_sup_speed(self)
            self._cache["sup_speed"] = hit
        return hit


def _numeric_sup_speed(fld: HamiltonianField, n: int = 401) -> float:
    """Dense scan followed by local maximization from the best few nodes."""
    R = fld.radius
    coords = np.linspace(-R, R, n)
    X, Y = np.meshgrid(coords, coords)
    pts = np.stack([X, Y], axis=-1).reshape(-1, 2)
    sp = fld.speed(pts)
    best = float(sp.max(initial=0.0))
    for k in np.argsort(sp)[-8:]:
        res = optimize.minimize(lambda z: -float(fld.speed(z)), pts[k], method="Nelder-Mead",
                                options={"xatol": 1e-12, "fatol": 1e-15, "maxiter": 2000})
        best = max(best, -float(res.fun))
    return best


@dataclass(eq=False)
class GridField(HamiltonianField):
    """Node samples of H with bilinear interpolation.

    ``values[i, j]`` is H at ``(x_j, y_i)`` with both coordinates on
    ``linspace(-R, R, n)``; row 0 is the bottom row (``y = -R``).
    """

    values: np.ndarray | None = None
    stencil_half_width: int = 1

    def __post_init__(self):
        v = np.array(self.values, dtype=float)
        if v.ndim != 2 or v.shape[0] != v.shape[1] or v.shape[0] < 2:
            raise ValueError("grid values must be a square array with n >= 2")
        coords = np.linspace(-self.radius, self.radius, v.shape[0])
        X, Y = np.meshgrid(coords, coords)
        v[np.hypot(X, Y) >= self.radius] = 0.0
        v.setflags(write=False)
        self.values = v

    @property
    def n(self) -> int:
        return self.values.shape[0]

    @property
    def grid_spacing(self) -> float:
        return 2.0 * self.radius / (self.n - 1)

    def _bilinear(self, p: np.ndarray) -> np.ndarray:
        hg = self.grid_spacing
        u = (p[..., 0] + self.radius) / hg
        w = (p[..., 1] + self.radius) / hg
        j = np.clip(np.floor(u).astype(np.int64), 0, self.n - 2)
        i = np.clip(np.floor(w).astype(np.int64), 0, self.n - 2)
        fu = u - j
        fw = w - i
        v = self.values
        return ((1 - fu) * (1 - fw) * v[i, j] + fu * (1 - fw) * v[i, j + 1]
                + (1 - fu) * fw * v[i + 1, j] + fu * fw * v[i + 1, j + 1])

    def _h_inside(self, p):
        return self._bilinear(p)

    def _grad_inside(self, p):
        hg = self.grid_spacing * self.stencil_half_width
        ex = np.array([hg, 0.0])
        ey = np.array([0.0, hg])
        gx = (self.hamiltonian(p + ex) - self.hamiltonian(p - ex)) / (2 * hg)
        gy = (self.hamiltonian(p + ey) - self.hamiltonian(p - ey)) / (2 * hg)
        return np.stack([gx, gy], axis=-1)

    def sup_speed(self) -> float:
        hit = self._cache.get("sup_speed")
        if hit is None:
            v = self.values
            hg = self.grid_spacing
            gx = (v[1:-1, 2:] - v[1:-1, :-2]) / (2 * hg)
            gy = (v[2:, 1:-1] - v[:-2, 1:-1]) / (2 * hg)
            hit = float(np.hypot(gx, gy).max(initial=0.0))
            self._cache["sup_speed"] = hit
        return hit

    def node_values(self, n: int):
        if int(n) == self.n:
            return np.linspace(-self.radius, self.radius, self.n), self.values
        return super().node_values(n)


# ---------------------------------------------------------------------------
# catalogue

def rigid_rotation(amplitude: float = 1.0, radius: float = 1.0) -> AnalyticField:
    """``H = A (R^2 - r^2)/2``: uniform clockwise rotation, period ``2 pi / A``."""
    A, R = float(amplitude), float(radius)
    return AnalyticField(
        kind="catalogue", radius=R, name="rigid",
        func=lambda x, y: 0.5 * A * (R * R - x * x - y * y),
        grad=lambda x, y: (-A * x, -A * y),
        speed_bound=abs(A) * R, params={"amplitude": A, "radius": R})


def differential_rotation(amplitude: float = 1.0) -> AnalyticField:
    """``H = A (1 - r^2)^2 / 4``: angular velocity ``-A (1 - r^2)``, speed ``A r (1 - r^2)``."""
    A = float(amplitude)

    def func(x, y):
        q = 1.0 - x * x - y * y
        return 0.25 * A * q * q

    def grad(x, y):
        q = 1.0 - x * x - y * y
        return (-A * q * x, -A * q * y)

    return AnalyticField(kind="catalogue", radius=1.0, name="differential", func=func, grad=grad,
                         speed_bound=abs(A) * 2.0 / (3.0 * np.sqrt(3.0)), params={"amplitude": A})


def double_well(offset: float = 0.1, amplitude: float = 1.0) -> AnalyticField:
    """``H = A (1 - r^2)^2 (x^2 + c)``: two peaks on the x-axis joined through a saddle at 0.

    The saddle value is ``A c`` and the peaks sit at ``x = +-sqrt((1 - 2c)/3)``;
    levels between the two values split into one cycle around each peak.
    """
    c, A = float(offset), float(amplitude)
    if not 0 < c < 0.5:
        raise ValueError("double_well offset must lie in (0, 1/2)")

    def func(x, y):
        q = 1.0 - x * x - y * y
        return A * q * q * (x * x + c)

    def grad(x, y):
        q = 1.0 - x * x - y * y
        s = x * x + c
        return (A * (-4.0 * x * q * s + 2.0 * x * q * q), A * (-4.0 * y * q * s))

    xp = np.sqrt((1.0 - 2.0 * c) / 3.0)
    peak = A * (1.0 - xp * xp) ** 2 * (xp * xp + c)
    return AnalyticField(kind="catalogue", radius=1.0, name="doublewell", func=func, grad=grad,
                         params={"offset": c, "amplitude": A, "saddle": A * c, "peak": peak,
                                 "peak_x": xp})


def zero_field(radius: float = 1.0) -> AnalyticField:
    return AnalyticField(kind="catalogue", radius=float(radius), name="zero",
                         func=lambda x, y: np.zeros_like(x), grad=lambda x, y: (0.0 * x, 0.0 * y),
                         speed_bound=0.0)


def analytic_field(func, grad, radius: float, name: str = "analytic",
                   sup_speed: float | None = None) -> AnalyticField:
    """Wrap user-supplied ``H(x, y)`` and ``(dH/dx, dH/dy)(x, y)`` callables."""
    return AnalyticField(kind="analytic", radius=float(radius), name=name, func=func, grad=grad,
                         speed_bound=sup_speed)


CATALOGUE = {
    "rigid": rigid_rotation,
    "differential": differential_rotation,
    "doublewell": double_well,
    "zero": zero_field,
}


def catalogue_field(name: str, **params) -> AnalyticField:
    try:
        factory = CATALOGUE[name]
    except KeyError:
        raise KeyError(f"unknown catalogue field {name!r}; known: {sorted(CATALOGUE)}") from None
    return factory(**params)


def sample_field(fld: HamiltonianField, n: int) -> GridField:
    """Grid-sampled copy of ``fld`` on ``n x n`` nodes."""
    _, values = fld.node_values(n)
    return GridField(kind="grid", radius=fld.radius, values=values)


# ---------------------------------------------------------------------------
# free-function interface

def eval_hamiltonian(fld: HamiltonianField, x) -> np.ndarray | float:
    out = fld.hamiltonian(x)
    return float(out) if np.ndim(out) == 0 else out


def eval_velocity(fld: HamiltonianField, x) -> np.ndarray:
    return fld.velocity(x)


def sup_speed(fld: HamiltonianField) -> float:
    return fld.sup_speed()


# ---------------------------------------------------------------------------
# regions and total variation

def _curve_points(c) -> np.ndarray:
    pts = getattr(c, "points", c)
    return as_points(pts)


@dataclass
class RegionSpec:
    """A region of the plane, rasterized on demand onto a cell grid over ``[-E, E]^2``.

    Build with :meth:`annulus`, :meth:`interior`, :meth:`from_mask`, :meth:`box`
    or :meth:`from_predicate`.
    """

    kind: str
    outer: np.ndarray | None = None
    inner: np.ndarray | None = None
    mask: np.ndarray | None = None
    extent: float | None = None
    bounds: tuple | None = None
    predicate: Callable | None = None

    @classmethod
    def annulus(cls, outer, inner=None, check: bool = True) -> "RegionSpec":
        """Open region between two nested closed curves (``inner`` may be ``None``)."""
        po = _curve_points(outer)
        pi = None if inner is None else _curve_points(inner)
        if check and pi is not None:
            if not np.all(points_in_polygon(po, pi)):
                raise NotNested("inner curve is not contained in the interior of the outer curve")
        return cls(kind="annulus", outer=po, inner=pi)

    @classmethod
    def interior(cls, curve) -> "RegionSpec":
        return cls.annulus(curve, None)

    @classmethod
    def from_mask(cls, mask, extent: float) -> "RegionSpec":
        m = np.asarray(mask, dtype=bool)
        if m.ndim != 2 or m.shape[0] != m.shape[1]:
            raise ValueError("region mask must be square")
        return cls(kind="mask", mask=m, extent=float(extent))

    @classmethod
    def box(cls, x0, x1, y0, y1) -> "RegionSpec":
        return cls(kind="box", bounds=(float(x0), float(x1), float(y0), float(y1)))

    @classmethod
    def from_predicate(cls, fn) -> "RegionSpec":
        """``fn(x, y) -> bool array`` evaluated at cell centers."""
        return cls(kind="predicate", predicate=fn)

    def nominal_area(self) -> float | None:
        if self.kind == "annulus":
            a = abs(signed_area(self.outer))
            if self.inner is not None:
                a -= abs(signed_area(self.inner))
            return max(a, 0.0)
        if self.kind == "box":
            x0, x1, y0, y1 = self.bounds
            return max(x1 - x0, 0.0) * max(y1 - y0, 0.0)
        return None

    def cell_mask(self, n: int, window) -> np.ndarray:
        """Boolean ``(n, n)`` mask of cells whose centers lie in the region (row = y).

        ``window = (cx, cy, half)`` is the square carrying the cell grid.
        """
        cx, cy, half = (float(v) for v in window)
        if self.kind == "mask":
            if self.mask.shape[0] != n or not np.allclose((cx, cy, half), (0.0, 0.0, self.extent)):
                raise ValueError("mask region resolution or extent does not match the request")
            return self.mask
        h = 2.0 * half / n
        xc = cx - half + h * (np.arange(n) + 0.5)
        yc = cy - half + h * (np.arange(n) + 0.5)
        if self.kind == "annulus":
            m = polygon_mask(self.outer, xc, yc)
            if self.inner is not None:
                m &= ~polygon_mask(self.inner, xc, yc)
            return m
        X, Y = np.meshgrid(xc, yc)
        if self.kind == "box":
            x0, x1, y0, y1 = self.bounds
            return (X >= x0) & (X < x1) & (Y >= y0) & (Y < y1)
        if self.kind == "predicate":
            return np.asarray(self.predicate(X, Y), dtype=bool)
        raise ValueError(f"unknown region kind {self.kind!r}")

    def bounding_window(self) -> tuple[float, float, float] | None:
        """Smallest square ``(cx, cy, half)`` around the region, when it is known."""
        if self.kind == "annulus":
            lo, hi = self.outer.min(axis=0), self.outer.max(axis=0)
        elif self.kind == "box":
            x0, x1, y0, y1 = self.bounds
            lo, hi = np.array([x0, y0]), np.array([x1, y1])
        else:
            return None
        c = 0.5 * (lo + hi)
        return float(c[0]), float(c[1]), float(0.5 * np.max(hi - lo))


def jacobian_density(fld: HamiltonianField, n: int, window=None) -> np.ndarray:
    """Per-cell ``||Db||_F`` on an ``n x n`` cell grid over the square ``window`` (cached).

    ``window = (cx, cy, half)`` defaults to ``[-R, R]^2``. The Jacobian of each
    cell is the finite difference of b between the averages of its corner
    values, so a jump of b across a curve deposits its mass in one cell layer.
    """
    cx, cy, half = (0.0, 0.0, fld.radius) if window is None else (float(v) for v in window)
    key = ("jac", int(n), cx, cy, half)
    hit = fld._cache.get(key)
    if hit is None:
        h = 2.0 * half / n
        xs = np.linspace(cx - half, cx + half, n + 1)
        ys = np.linspace(cy - half, cy + half, n + 1)
        X, Y = np.meshgrid(xs, ys)
        b = fld.velocity(np.stack([X, Y], axis=-1))
        dx = 0.5 * ((b[:-1, 1:] - b[:-1, :-1]) + (b[1:, 1:] - b[1:, :-1])) / h
        dy = 0.5 * ((b[1:, :-1] - b[:-1, :-1]) + (b[1:, 1:] - b[:-1, 1:])) / h
        hit = np.sqrt(np.sum(dx * dx, axis=-1) + np.sum(dy * dy, axis=-1))
        hit.setflags(write=False)
        if len(fld._cache) > 64:
            for k in [k for k in fld._cache if isinstance(k, tuple) and k[0] == "jac"][:8]:
                del fld._cache[k]
        fld._cache[key] = hit
    return hit


def tv_measure(fld: HamiltonianField, region: RegionSpec, resolution: int = 512, window=None) -> float:
    """Cell-wise finite-difference surrogate for the total variation ``|Db|(region)``.

    The quadrature grid has ``resolution`` cells per side over ``window``
    (``(cx, cy, half)``; default ``[-R, R]^2``, or the mask's own extent).
    Regions whose declared geometric area is zero give 0. A region with
    positive (or unknown) area that covers no cell raises :class:`EmptyRegion`.
    """
    if region.kind == "mask":
        n = region.mask.shape[0]
        window = (0.0, 0.0, region.extent)
    else:
        n = int(resolution)
        if window is None:
            window = (0.0, 0.0, fld.radius)
    area = region.nominal_area()
    if area is not None and area == 0.0:
        return 0.0
    mask = region.cell_mask(n, window)
    if not mask.any():
        raise EmptyRegion("region covers no cell of the quadrature grid")
    h = 2.0 * float(window[2]) / n
    key = ("jac", int(n)) + tuple(float(v) for v in window)
    if key not in fld._cache and mask.sum() < 0.25 * n * n:
        # thin regions: evaluate only the covered cells
        i, j = np.nonzero(mask)
        x0 = window[0] - window[2] + h * j
        y0 = window[1] - window[2] + h * i
        dens = _cell_jacobian(fld, x0, y0, h)
        return float(dens.sum() * h * h)
    dens = jacobian_density(fld, n, window)
    return float(dens[mask].sum() * h * h)


def _cell_jacobian(fld: HamiltonianField, x0: np.ndarray, y0: np.ndarray, h: float) -> np.ndarray:
    """``||Db||_F`` of cells with lower-left corners ``(x0, y0)``; same stencil as the dense grid."""
    out = np.empty(x0.size)
    for lo in range(0, x0.size, 1 << 18):
        sl = slice(lo, lo + (1 << 18))
        xa, ya = x0[sl], y0[sl]
        c = np.stack([np.stack([xa, ya], -1), np.stack([xa + h, ya], -1),
                      np.stack([xa, ya + h], -1), np.stack([xa + h, ya + h], -1)])
        b00, b10, b01, b11 = fld.velocity(c)
        dx = 0.5 * ((b10 - b00) + (b11 - b01)) / h
        dy = 0.5 * ((b01 - b00) + (b11 - b10)) / h
        out[sl] = np.sqrt(np.sum(dx * dx, axis=-1) + np.sum(dy * dy, axis=-1))
    return out


# ---------------------------------------------------------------------------
# file formats

def load_hamf1(path) -> GridField:
    """Binary raster: ``b"HAMF1"``, ``n`` (uint32 LE), ``R`` (float64 LE), ``n*n`` float64 LE row-major."""
    data = Path(path).read_bytes()
    if data[:5] != HAMF1_MAGIC:
        raise ValueError(f"{path}: bad magic, expected {HAMF1_MAGIC!r}")
    n, R = struct.unpack_from("<Id", data, 5)
    body = np.frombuffer(data, dtype="<f8", count=n * n, offset=5 + 12)
    if body.size != n * n:
        raise ValueError(f"{path}: truncated sample block")
    return GridField(kind="grid", radius=float(R), values=body.reshape(n, n).copy())


def save_hamf1(fld: GridField, path) -> None:
    header = HAMF1_MAGIC + struct.pack("<Id", fld.n, float(fld.radius))
    Path(path).write_bytes(header + np.ascontiguousarray(fld.values, dtype="<f8").tobytes())


def load_p2_field(path, radius: float = 1.0, h_scale: float = 1.0) -> GridField:
    """Graymap whose sample ``v`` encodes ``H = h_scale * v / maxval``.

    The first image row is the top of the picture (``y = +R``).
    """
    raw, maxval = read_p2(path)
    if raw.shape[0] != raw.shape[1]:
        raise ValueError("field graymaps must be square")
    values = h_scale * raw[::-1].astype(float) / maxval
    return GridField(kind="grid", radius=float(radius), values=values)
