"""Desk-scale acceptance suite: one PASS/FAIL line per criterion.

Each test measures its criterion at the stated tolerance, prints the verdict
with the measured numbers and wall time, and then asserts it. Run with
``pytest -s tests/test_acceptance.py`` or look for the ``criterion`` lines in
the verbose log.
"""

import time

import numpy as np
import pytest

from lagflow.cov import build_cov, period_gap, verify_cov
from lagflow.field import differential_rotation, rigid_rotation
from lagflow.flow import SampleSpec, flow, flow_points, lusin_lipschitz_profile, period, travel_table
from lagflow.levelset import extract_cycles
from lagflow.mixing import (
    IndicatorRaster, MixingParams, MixReport, decay_certificate, functional_scale, half_disk, mixing_series,
    perimeter, r0_bar, sector_datum, stripes,
)


@pytest.fixture
def verdict(capsys):
    start = time.perf_counter()

    def emit(number, ok, detail, limit):
        elapsed = time.perf_counter() - start
        ok = bool(ok) and elapsed <= limit
        with capsys.disabled():
            print(f"\ncriterion {number:2d}: {'PASS' if ok else 'FAIL'}  {detail}  [{elapsed:.1f} s of {limit:g} s]")
        assert ok, detail

    return emit


def disk_points(rng, n, radius=1.0):
    r = radius * np.sqrt(rng.random(n))
    th = 2 * np.pi * rng.random(n)
    return np.c_[r * np.cos(th), r * np.sin(th)]


def test_criterion_01_conservation(verdict):
    fld = differential_rotation()
    pts = disk_points(np.random.default_rng(1), 1000)
    out = flow_points(fld, pts, [1.0, 10.0, 100.0], resolution=512)
    err = float(np.max(np.abs(fld.hamiltonian(out) - fld.hamiltonian(pts)[None])))
    verdict(1, err <= 1e-5, f"max |H(X(t,x)) - H(x)| = {err:.2e} (limit 1e-5)", 30)


def test_criterion_02_periods(verdict):
    fld = differential_rotation()
    worst = 0.0
    for r in (0.3, 0.5, 0.7):
        cyc = extract_cycles(fld, (1 - r * r) ** 2 / 4)[0]
        T = period(travel_table(cyc), rtol=1e-10)
        worst = max(worst, abs(T - 2 * np.pi / (1 - r * r)) / (2 * np.pi / (1 - r * r)))
    verdict(2, worst <= 1e-6, f"max relative period error = {worst:.2e} (limit 1e-6)", 5)


def test_criterion_03_group_law(verdict):
    fld = differential_rotation()
    pts = disk_points(np.random.default_rng(3), 100, 0.95)
    worst = 0.0
    for t in (0.5, 3.7):
        for s in (0.5, 3.7):
            for x in pts:
                a = flow(fld, x, t + s)
                b = flow(fld, flow(fld, x, t), s)
                worst = max(worst, float(np.hypot(*(a - b))))
    verdict(3, worst <= 1e-6, f"max |X(t+s,x) - X(s,X(t,x))| = {worst:.2e} (limit 1e-6)", 10)


def test_criterion_04_linear_lipschitz_growth(verdict):
    t = np.arange(1.0, 101.0)
    spec = SampleSpec(n_points=1000, pair_offset=1e-3, seed=4, radius=1.0)
    diff = lusin_lipschitz_profile(differential_rotation(), 0.05, spec, t)
    rigid = lusin_lipschitz_profile(rigid_rotation(), 0.05, spec, t)
    rig_ok = bool(np.all((rigid.c_est >= 0.99) & (rigid.c_est <= 1.01)))
    ok = diff.r2 >= 0.99 and diff.max_rel_residual <= 0.10 and rig_ok
    verdict(4, ok, f"differential R2 = {diff.r2:.7f} (>= 0.99), max residual/fit = {diff.max_rel_residual:.4f} "
                   f"(<= 0.10); rigid C_est in [{rigid.c_est.min():.5f}, {rigid.c_est.max():.5f}]", 120)


AMPLITUDE = 4.0
RADII = (0.4, 0.5, 0.6, 0.7)
STEPS = (4, 5, 6, 7, 8)


@pytest.fixture(scope="module")
def radial_pairs():
    """20 nested radial pairs: four inner radii times five level gaps 2^-4 ... 2^-8."""
    start = time.perf_counter()
    fld = differential_rotation(amplitude=AMPLITUDE)
    rows = []
    for r in RADII:
        h1 = AMPLITUDE * (1 - r * r) ** 2 / 4
        g1 = extract_cycles(fld, h1)[0]
        for k in STEPS:
            g2 = extract_cycles(fld, h1 - 2.0 ** -k)[0]
            m = build_cov(fld, g1, g2)
            rep = verify_cov(m, fld)
            gap, bound = period_gap(m, tv_A=rep.tv_A)
            rows.append((r, k, m, rep, gap, bound))
    return rows, time.perf_counter() - start


def test_criterion_05_period_gap(verdict, radial_pairs):
    rows, build = radial_pairs
    ratios = [gap / bound for *_, gap, bound in rows]
    verdict(5, len(rows) == 20 and max(ratios) <= 1.05,
            f"20 pairs, max gap / bound = {max(ratios):.3f} (limit 1.05); construction {build:.1f} s", 60 + build)


def test_criterion_06_change_of_variables(verdict, radial_pairs):
    rows, build = radial_pairs
    d_ratio = max(rep.sup_d / rep.d_bound for _, _, _, rep, _, _ in rows)
    mono = all(rep.monotone_ok for _, _, _, rep, _, _ in rows)
    c1 = np.array([rep.c1_fit for _, _, _, rep, _, _ in rows])
    c2 = np.array([rep.c2_fit for _, _, _, rep, _, _ in rows])
    s1, s2 = c1.max() / c1.min(), c2.max() / c2.min()
    ok = d_ratio <= 1.05 and mono and s1 <= 5 and s2 <= 5
    verdict(6, ok, f"max sup_d / bound = {d_ratio:.3f}, monotone = {mono}, "
                   f"c1 spread = {s1:.2f}, c2 spread = {s2:.2f} (limit 5)", 120 + build)


def test_criterion_07_hm1_oracle(verdict):
    u = IndicatorRaster.from_function(512, lambda x, y: x)
    val = functional_scale(u, check_balance=False)
    ref = np.sqrt(7 * np.pi / 96)
    rel = abs(val - ref) / ref
    verdict(7, rel <= 0.02, f"||x1|| = {val:.5f} vs {ref:.5f}, relative error {rel:.4f} (limit 0.02)", 30)


def test_criterion_08_mixing_lower_bound(verdict):
    fld = differential_rotation()
    u0 = sector_datum(512)
    rep = mixing_series(fld, u0, np.geomspace(5, 100, 12))
    cert = decay_certificate(rep, u0, MixingParams.default())
    ok = cert.band_g <= 3 and cert.band_a <= 3 and cert.passed
    verdict(8, ok, f"band of delta_g*(1+t) = {cert.band_g:.3f}, band of hm1*(1+t) = {cert.band_a:.3f} (limit 3), "
                   f"certificate {cert.verdict}", 600)


def test_criterion_09_perimeter_relation(verdict):
    p = MixingParams.default()
    prods = []
    for w in (2 ** -3, 2 ** -4, 2 ** -5, 2 ** -6):
        A = stripes(1024, w)
        prods.append(perimeter(A) * r0_bar(A, p.alpha0, p.k0))
    prods = np.array(prods)
    spread = float(np.max(np.abs(prods / np.median(prods) - 1)))
    verdict(9, prods.min() > 0 and spread <= 0.30,
            f"Per * r0_bar = {np.array2string(prods, precision=3)}, spread {spread:.3f} (limit 0.30)", 120)


def test_criterion_10_negative_control(verdict):
    u0 = half_disk(64)
    t = np.linspace(0, 10, 12)
    rep = MixReport(times=t, delta_g=np.exp(-t), hm1=np.exp(-t))
    cert = decay_certificate(rep, u0)
    verdict(10, not cert.passed, f"exponential series certificate: {cert.verdict} (expected FAIL)", 1)
