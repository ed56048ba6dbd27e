import numpy as np
import pytest
from scipy.integrate import solve_bvp
from scipy.signal import fftconvolve

from lagflow.errors import NotInvariant, ParamsInfeasible, Unbalanced
from lagflow.field import analytic_field, differential_rotation, rigid_rotation
from lagflow.flow import SampleSpec, lusin_lipschitz_profile
from lagflow.mixing import (
    IndicatorRaster, MixingParams, MixReport, _neumann_laplacian, cell_centers, centered_disk, checkerboard,
    decay_certificate, disk_cell_count, disk_mask, disk_sums, functional_scale, geometric_scale, half_disk,
    mixing_series, mixing_witness, perimeter, r0_bar, sector_datum, stripes, transport_indicator,
    vitali_disjoint,
)


def grid(n):
    c = cell_centers(n)
    return np.meshgrid(c, c)


def lattice_disk(R):
    r = int(np.floor(R + 1e-12))
    d = np.arange(-r, r + 1)
    DX, DY = np.meshgrid(d, d)
    return (DX * DX + DY * DY <= R * R + 1e-9).astype(float)


# disk sums ------------------------------------------------------------------------

@pytest.mark.parametrize("R", [0.5, 1.0, 2.5, 7.3])
def test_disk_sums_match_convolution(rng, R):
    img = rng.random((40, 33))
    ker = lattice_disk(R)
    assert disk_cell_count(R) == int(ker.sum())
    np.testing.assert_allclose(disk_sums(img, R), fftconvolve(img, ker, mode="same"), atol=1e-9)


# geometric scale ------------------------------------------------------------------

@pytest.fixture(scope="module")
def half256():
    return half_disk(256)


def test_half_disk_scale_is_macroscopic(half256):
    assert half256.is_balanced()
    assert geometric_scale(half256) >= 0.5


def test_checkerboard_scale_is_small():
    w = 8 / 128
    assert geometric_scale(checkerboard(256, w)) <= 4 * w


def test_scale_monotone_in_k():
    u = checkerboard(256, 1 / 16)
    assert geometric_scale(u, 0.3) >= geometric_scale(u, 0.1)


def test_scale_rotation_invariant():
    n = 256
    c, s = np.cos(0.7), np.sin(0.7)
    a = IndicatorRaster.from_set(n, lambda x, y: np.sin(6 * x + 2 * y) > 0)
    b = IndicatorRaster.from_set(n, lambda x, y: np.sin(6 * (c * x - s * y) + 2 * (s * x + c * y)) > 0)
    assert abs(geometric_scale(a) - geometric_scale(b)) <= 2 * a.h


def test_scale_brute_force(half256):
    # the defining condition checked directly at the returned scale and one tolerance below
    u = half256
    d = geometric_scale(u)
    for delta, expect in ((d, True), (d - 2 * u.h - 1e-9, False)):
        R = delta / u.h
        ker = lattice_disk(R)
        fp = fftconvolve((u.values > 0).astype(float), ker, mode="same") / ker.sum()
        fm = fftconvolve((u.values < 0).astype(float), ker, mode="same") / ker.sum()
        ok = ((fp < 0.75 - 1e-9) & (fm < 0.75 - 1e-9)) | ~u.mask
        assert bool(ok.all()) == expect


def test_witness(half256):
    u = half256
    d = geometric_scale(u)
    x, fp, fm = mixing_witness(u, 0.5 * d)
    assert max(fp, fm) >= 0.75 and np.hypot(*x) < 1
    assert mixing_witness(u, d) is None


# functional scale -----------------------------------------------------------------

def x1_radial_oracle():
    # phi = f(r) cos(theta) with -(f'' + f'/r - f/r^2) = r, f(0) = 0, f'(1) = 0
    r = np.linspace(1e-6, 1, 400)
    sol = solve_bvp(lambda r, y: np.vstack([y[1], -r - y[1] / r + y[0] / r ** 2]),
                    lambda a, b: np.array([a[0], b[1]]), r, np.zeros((2, r.size)), tol=1e-10)
    rr = np.linspace(0, 1, 20001)
    f = sol.sol(rr)[0]
    # |u|_{H^-1}^2 = int u phi = pi int_0^1 r^2 f(r) dr
    return np.sqrt(np.pi * np.trapezoid(rr * rr * f, rr))


def test_hm1_of_x1():
    ref = x1_radial_oracle()
    assert ref == pytest.approx(np.sqrt(7 * np.pi / 96), rel=1e-4)
    u = IndicatorRaster.from_function(256, lambda x, y: x)
    assert functional_scale(u, check_balance=False) == pytest.approx(ref, rel=0.02)


def test_hm1_zero():
    u = IndicatorRaster.from_function(64, lambda x, y: 0 * x)
    assert functional_scale(u) == 0.0


def test_hm1_homogeneous(rng):
    v = rng.standard_normal((64, 64))
    v -= v[disk_mask(64)].mean()
    u = IndicatorRaster.from_function(64, lambda x, y: v)
    a = functional_scale(u, rtol=1e-12, check_balance=False)
    b = functional_scale(u.with_values(2 * u.values), rtol=1e-12, check_balance=False)
    assert b == pytest.approx(2 * a, rel=1e-8)


def test_hm1_poincare_bound(rng):
    # Neumann Poincare constant of the unit disk: 1 / j'_{1,1}
    cp = 1 / 1.8411837813406593
    for u in (IndicatorRaster.from_function(128, lambda x, y: x), half_disk(128), checkerboard(128, 0.1)):
        l2 = np.sqrt(np.sum(u.values[u.mask] ** 2) * u.h ** 2)
        assert functional_scale(u, check_balance=False) <= cp * l2 * 1.02


def test_unbalanced_rejected():
    with pytest.raises(Unbalanced):
        functional_scale(IndicatorRaster.from_set(128, lambda x, y: y > 0.3))


def test_bump_pairing_bounds_hm1_from_below(half256):
    """Radial bump test functions give lower bounds on the negative norm."""
    u = half256
    d = geometric_scale(u)
    x, _, _ = mixing_witness(u, 0.5 * d)
    delta = 0.5 * d
    a, b = delta * np.sqrt(0.75), delta
    X, Y = grid(u.n)
    r = np.hypot(X - x[0], Y - x[1])
    psi = np.clip((b - r) / (b - a), 0, 1)[u.mask]
    L = _neumann_laplacian(u.mask)
    f = u.values[u.mask] - u.values[u.mask].mean()
    pairing = abs(float(np.dot(f, psi))) * u.h * u.h
    lower = pairing / np.sqrt(float(psi @ (L @ psi)))
    hm1 = functional_scale(u)
    assert 0.1 * delta <= lower <= hm1 * (1 + 1e-6)


# r0_bar ---------------------------------------------------------------------------

def r0_brute(A, alpha0, k0, step):
    best = 0.0
    for r in np.arange(step, 2.0, step):
        ker = lattice_disk(r / A.h)
        frac = fftconvolve((A.values > 0).astype(float), ker, mode="same") / ker.sum()
        area = np.count_nonzero((frac > 1 - k0 + 1e-12) & A.mask) * A.h ** 2
        if area >= alpha0:
            best = r
        else:
            break
    return best


def test_r0_half_disk(half256):
    A = half256
    r = r0_bar(A, np.pi / 4, 1 / 640)
    assert r > 0.1
    assert abs(r - r0_brute(A, np.pi / 4, 1 / 640, 1 / 256)) <= 2 / 256


def test_r0_stripes():
    vals = []
    for w in (2 ** -3, 2 ** -4):
        r = r0_bar(stripes(512, w), np.pi / 8, 1 / 640)
        assert w / 4 <= r <= 2 * w
        vals.append(r / w)
    assert max(vals) / min(vals) <= 1.3


def test_r0_monotone_in_alpha(half256):
    rs = [r0_bar(half256, a, 1 / 640) for a in (0.2, 0.5, 0.8)]
    assert rs[0] >= rs[1] >= rs[2]


# perimeter ------------------------------------------------------------------------

def test_perimeter_half_disk():
    assert perimeter(half_disk(512)) == pytest.approx(2.0, rel=0.02)


def test_perimeter_circle():
    assert perimeter(centered_disk(512)) == pytest.approx(np.pi, rel=0.02)


def test_perimeter_checkerboard_edge_count():
    u = checkerboard(512, 1 / 16)
    X, Y = grid(u.n)
    inner = np.hypot(X, Y) < 1 - 2 / u.n
    v = u.values
    edges = 0
    for a, b, ia, ib in ((v[:, :-1], v[:, 1:], inner[:, :-1], inner[:, 1:]),
                         (v[:-1, :], v[1:, :], inner[:-1, :], inner[1:, :])):
        edges += np.count_nonzero((a != b) & ia & ib)
    assert perimeter(u) == pytest.approx(edges * u.h, rel=0.05)


# Vitali selection -----------------------------------------------------------------

def test_vitali_equal_centers():
    assert len(vitali_disjoint(np.zeros((5, 2)), 0.1)) == 1


def test_vitali_collinear():
    c = np.c_[np.arange(6) * 0.2, np.zeros(6)]
    assert len(vitali_disjoint(c, 0.1)) == 6


def test_vitali_random(rng):
    r = 0.05
    rr = np.sqrt(rng.random(1000))
    th = 2 * np.pi * rng.random(1000)
    P = np.c_[rr * np.cos(th), rr * np.sin(th)]
    kept = vitali_disjoint(P, r)
    K = P[kept]
    D = np.hypot(*(K[:, None] - K[None]).transpose(2, 0, 1))
    assert np.all(D[~np.eye(len(K), dtype=bool)] >= 2 * r)
    # every input ball meets a kept ball
    assert np.all(np.min(np.hypot(*(P[:, None] - K[None]).transpose(2, 0, 1)), axis=1) < 2 * r)
    X, Y = np.meshgrid(*[np.linspace(-1.1, 1.1, 1024)] * 2)
    union = np.zeros(X.shape, dtype=bool)
    for p in P:
        union |= (X - p[0]) ** 2 + (Y - p[1]) ** 2 < r * r
    area = union.mean() * 2.2 ** 2
    assert 9 * len(K) * np.pi * r * r >= area


# transport ------------------------------------------------------------------------

@pytest.fixture(scope="module")
def tilted():
    return IndicatorRaster.from_set(512, lambda x, y: y > 0.1 * x + 0.05)


def test_transport_t0(tilted):
    assert transport_indicator(rigid_rotation(), tilted, 0.0) is tilted


def test_transport_rigid_quarter_turn(tilted):
    u = transport_indicator(rigid_rotation(), tilted, np.pi / 2)
    X, Y = grid(512)
    # clockwise motion: the value at y comes from y rotated counter-clockwise
    ref = np.where(X > 0.1 * (-Y) + 0.05, 1.0, -1.0)
    m = tilted.mask
    assert np.mean(u.values[m] == ref[m]) >= 0.99
    assert abs(u.count(1) - tilted.count(1)) <= 8 * 512


def test_transport_spiral():
    n = 512
    u0 = half_disk(n)
    u = transport_indicator(differential_rotation(), u0, 10.0)
    X, Y = grid(n)
    R, th = np.hypot(X, Y), np.arctan2(Y, X)
    ref = np.where(np.sin(th + (1 - R * R) * 10) > 0, 1.0, -1.0)
    m = u0.mask
    assert np.mean(u.values[m] == ref[m]) >= 0.99
    assert abs(u.count(1) - u0.count(1)) <= 8 * n
    assert set(np.unique(u.values[m])) <= {-1.0, 1.0}


def test_transport_requires_invariant_disk():
    drift = analytic_field(lambda x, y: x, lambda x, y: (1 + 0 * x, 0 * y), radius=2.0)
    with pytest.raises(NotInvariant):
        transport_indicator(drift, half_disk(64), 1.0)


def test_p2_round_trip(tmp_path):
    u = sector_datum(64, np.pi / 3)
    u.to_p2(tmp_path / "u.pgm")
    v = IndicatorRaster.from_p2(tmp_path / "u.pgm")
    assert np.array_equal(u.values, v.values) and np.array_equal(u.mask, v.mask)


# certificates ---------------------------------------------------------------------

def test_rigid_certificate_passes():
    u0 = half_disk(128)
    rep = mixing_series(rigid_rotation(), u0, [0.0, 1.0, 2.0, 5.0])
    assert np.ptp(rep.delta_g) <= 2 * u0.h
    cert = decay_certificate(rep, u0)
    assert cert.passed and rep.verdicts == ["PASS"] * 4


def test_exponential_series_fails():
    u0 = half_disk(128)
    t = np.linspace(0, 20, 12)
    rep = MixReport(times=t, delta_g=np.exp(-t), hm1=np.exp(-t))
    cert = decay_certificate(rep, u0)
    assert not cert.passed and "FAIL" in rep.verdicts


def test_infeasible_parameters():
    with pytest.raises(ParamsInfeasible):
        decay_certificate(MixReport(times=np.ones(1), delta_g=np.ones(1), hm1=np.ones(1)), half_disk(64),
                          MixingParams(k=0.25, k0=0.2))


def test_default_parameters_feasible():
    assert MixingParams.default().margin() > 0
    assert MixingParams.default(0.1).margin() > 0


def test_report_csv(tmp_path):
    rep = MixReport(times=np.array([0.0, 1.0]), delta_g=np.array([0.5, 0.4]), hm1=np.array([0.2, 0.1]))
    decay_certificate(rep, half_disk(64))
    rep.to_csv(tmp_path / "m.csv")
    lines = (tmp_path / "m.csv").read_text().splitlines()
    assert lines[0] == "t,delta_g,hm1,bound_g,bound_a,verdict" and len(lines) == 3


def test_small_scale_has_witness():
    """Below r0 / (2 C(t)) the mixing condition fails at some ball."""
    fld = differential_rotation()
    u0 = half_disk(256)
    t = 20.0
    u = transport_indicator(fld, u0, t)
    prof = lusin_lipschitz_profile(fld, 0.05, SampleSpec(n_points=200, pair_offset=1e-3, seed=3), [t])
    r0 = r0_bar(u0, np.pi / 4, 0.25 / 160)
    delta = r0 / (2 * prof.c_est[0])
    assert delta < geometric_scale(u)
    assert mixing_witness(u, delta) is not None
