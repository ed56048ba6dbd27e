import numpy as np
import pytest

from conftest import radial_level, rigid_level
from lagflow.cov import (
    build_cov, calibrate_folding, folding_check, period_gap, shuffled, slicing_bound, two_point_gap_check,
    verify_cov,
)
from lagflow.errors import DegenerateLevel, EmptyGoodSet, GraphOrderViolated, NotNested, OrientationMismatch
from lagflow.field import analytic_field, differential_rotation, zero_field
from lagflow.intervals import IntervalSet
from lagflow.levelset import Cycle, extract_cycles


def radial_pair(fld, r1, r2, level=radial_level):
    return extract_cycles(fld, level(r1))[0], extract_cycles(fld, level(r2))[0]


@pytest.fixture(scope="module")
def concentric():
    fld = differential_rotation()
    g1, g2 = radial_pair(fld, 0.69, 0.71)
    return fld, g1, g2, build_cov(fld, g1, g2)


@pytest.fixture(scope="module")
def concentric_report(concentric):
    fld, _, _, m = concentric
    return verify_cov(m, fld)


def angles(points):
    return np.arctan2(points[:, 1], points[:, 0])


def test_radial_map_is_angle_identity(concentric):
    fld, g1, g2, m = concentric
    assert m.N >= 1 and not m.overflow
    s1 = np.concatenate([v.s1 for v in m.intervals])
    s2 = np.concatenate([v.s2 for v in m.intervals])
    d = np.concatenate([v.d for v in m.intervals])
    np.testing.assert_allclose(d, 0.02, atol=1e-5)
    dth = np.angle(np.exp(1j * (angles(g1.point_at(s1)) - angles(g2.point_at(s2)))))
    assert np.max(np.abs(dth)) < 1e-3
    # only the neighbourhoods of the interpolation knots are lost
    assert m.D1.measure() > 0.5 * g1.length
    assert m.N == len(m.intervals) and abs(m.D1.measure() - sum(v.length1 for v in m.intervals)) < 1e-9


def test_map_geometry_invariant(concentric):
    _, g1, g2, m = concentric
    for v in m.intervals:
        assert np.all(v.d > 0)
        np.testing.assert_allclose(g2.point_at(v.s2), g1.point_at(v.s1) + v.d[:, None] * v.n, atol=1e-9)
        assert np.all(np.diff(v.s2) > 0)
        assert abs(np.hypot(*v.e) - 1) < 1e-12 and abs(np.dot(v.e, v.n)) < 1e-12


def test_verify_concentric(concentric, concentric_report):
    fld, g1, g2, m = concentric
    rep = concentric_report
    dh = radial_level(0.69) - radial_level(0.71)
    c_S = min(r * (1 - r * r) for r in (0.69, 0.71))
    bound = 2 * np.sqrt(2) * dh / c_S
    assert rep.d_bound == pytest.approx(bound, rel=1e-3)
    assert rep.d_bound / rep.sup_d == pytest.approx(bound / 0.02, rel=0.01)
    assert 2.5 < bound / 0.02 < 3.2
    assert rep.distance_ok and rep.monotone_ok and rep.disjoint_ok and rep.passed
    assert rep.winding == pytest.approx(1.0)


def test_shuffled_map_fails_monotonicity(concentric):
    fld, _, _, m = concentric
    assert not verify_cov(shuffled(m, 1), fld, tv_A=1.0).monotone_ok


def test_round_trip(concentric):
    fld, g1, g2, m12 = concentric
    m21 = build_cov(fld, g2, g1)
    s = np.concatenate([v.s1[1:-1] for v in m12.intervals])
    x, _ = m12.map(s)
    y, _ = m21.map(np.mod(x, g2.length))
    ok = np.isfinite(y)
    assert ok.mean() > 0.5
    err = np.abs(np.mod(y[ok] - s[ok] + 0.5 * g1.length, g1.length) - 0.5 * g1.length)
    assert err.max() <= 2 * max(g1.spacing, g2.spacing)


def test_equal_levels_rejected(concentric):
    fld, g1, _, _ = concentric
    with pytest.raises(NotNested):
        build_cov(fld, g1, g1)


def test_different_wells_rejected(dwell):
    left, right = sorted(extract_cycles(dwell, 0.15), key=lambda c: c.points[:, 0].mean())
    other = [c for c in extract_cycles(dwell, 0.14) if c.points[:, 0].mean() > 0][0]
    with pytest.raises(NotNested):
        build_cov(dwell, left, other)


def test_orientation_mismatch(concentric):
    fld, g1, g2, _ = concentric
    with pytest.raises(OrientationMismatch):
        build_cov(fld, g1, g2.reversed())


def test_empty_good_set_for_far_levels():
    fld = differential_rotation()
    g1 = extract_cycles(fld, radial_level(0.5))[0]
    g2 = extract_cycles(fld, radial_level(0.5) - 1 / 16)[0]
    with pytest.raises(EmptyGoodSet):
        build_cov(fld, g1, g2)


def test_double_well_nested_pair(dwell):
    a = extract_cycles(dwell, 0.15)[0]
    side = np.sign(a.points[:, 0].mean())
    c = [c for c in extract_cycles(dwell, 0.14) if np.sign(c.points[:, 0].mean()) == side][0]
    m = build_cov(dwell, a, c)
    rep = verify_cov(m, dwell)
    assert rep.passed and not m.overflow
    assert 1 <= m.N <= m.max_per_segment * m.reparam.K


def test_sweep_constants_bounded():
    A = 4.0
    fld = differential_rotation(amplitude=A)
    h1 = radial_level(0.5, A)
    c1, c2 = [], []
    for k in (4, 5, 6, 7):
        g1 = extract_cycles(fld, h1)[0]
        g2 = extract_cycles(fld, h1 - 2.0 ** -k)[0]
        rep = verify_cov(build_cov(fld, g1, g2), fld)
        assert rep.passed
        c1.append(rep.c1_fit)
        c2.append(rep.c2_fit)
    assert max(c1) / min(c1) <= 5 and max(c2) / min(c2) <= 5


def test_csv_export(concentric, tmp_path):
    _, _, _, m = concentric
    m.to_csv(tmp_path / "cov.csv")
    lines = (tmp_path / "cov.csv").read_text().splitlines()
    assert lines[0] == "j,s1_minus,s1_plus,s2_minus,s2_plus,e_j,sup_d"
    assert len(lines) == m.N + 1
    first = lines[1].split(",")
    assert len(first[5].split()) == 2 and float(first[6]) > 0


# slicing --------------------------------------------------------------------------

@pytest.fixture(scope="module")
def slab():
    # H = -y^2 / 2 gives b = (y, 0): a unit-gradient first component
    return analytic_field(lambda x, y: -0.5 * y * y, lambda x, y: (0 * x, -y), radius=10.0)


def test_slicing_unit_slab(slab):
    lhs, rhs = slicing_bound([0, 1], lambda x: 0 * x, lambda x: 0 * x + 1, slab, ((0, 0), (1, 0), (0, 1)))
    assert lhs == pytest.approx(1.0, rel=1e-6)
    assert rhs == pytest.approx(1.0, rel=0.01)


def test_slicing_equal_graphs(slab):
    lhs, rhs = slicing_bound([0, 1], lambda x: 0 * x, lambda x: 0 * x, slab, ((0, 0), (1, 0), (0, 1)))
    assert lhs == 0 and rhs >= 0


def test_slicing_order_violation(slab):
    with pytest.raises(GraphOrderViolated):
        slicing_bound([0, 1], lambda x: 0 * x + 1, lambda x: 0 * x, slab, ((0, 0), (1, 0), (0, 1)))


def test_slicing_annular_strip(concentric):
    fld, g1, _, m = concentric
    j = int(np.argmax([v.length1 for v in m.intervals]))
    v = m.intervals[j]
    G = m.graph(j)
    f1 = lambda x: np.interp(x, G["Y1"], G["f1"])  # noqa: E731
    f2 = lambda x: np.interp(x, G["Y2"], G["f2"])  # noqa: E731
    frame = (g1.point_at(v.s1_lo), v.e, v.n)
    for res in (256, 1024):
        lhs, rhs = slicing_bound([G["Y1"][0], G["Y1"][-1]], f1, f2, fld, frame, resolution=res)
        assert 0 < lhs <= rhs * 1.05


def test_graph_functions_are_one_lipschitz(concentric):
    _, _, _, m = concentric
    for j in range(m.N):
        G = m.graph(j)
        for y, f in ((G["Y1"], G["f1"]), (G["Y2"], G["f2"])):
            assert np.all(np.diff(y) > 0)
            assert np.max(np.abs(np.diff(f) / np.diff(y))) <= 1 + 1e-9


# folding --------------------------------------------------------------------------

def test_folding_rigid(rigid):
    c = extract_cycles(rigid, rigid_level(0.5))[0]
    assert folding_check(c, rigid).ratio == pytest.approx(0.5 * np.sqrt(2) / 2, rel=1e-3)


def test_folding_differential_stable(diff):
    cycles = [extract_cycles(diff, radial_level(r))[0] for r in (0.4, 0.5, 0.6)]
    c_fit, spread = calibrate_folding(cycles, diff)
    assert c_fit > 0 and spread <= 0.2
    assert all(folding_check(c, diff, c_fit).passed for c in cycles)


def test_folding_zero_field_rejected():
    th = np.linspace(0, 2 * np.pi, 256, endpoint=False)
    z = zero_field()
    c = Cycle.from_points(0.5 * np.c_[np.cos(th), np.sin(th)], 0.0, z)
    with pytest.raises(DegenerateLevel):
        folding_check(c, z)


# period gap -----------------------------------------------------------------------

def matched_time(m, v1, v2):
    """Travel time gap over the matched arcs, from the closed-form cycle speeds."""
    return abs(sum((v.s1_hi - v.s1_lo) / v1 - (v.s2_hi - v.s2_lo) / v2 for v in m.intervals))


def test_period_gap_rigid(rigid):
    g1, g2 = radial_pair(rigid, 0.5, 0.52, rigid_level)
    m = build_cov(rigid, g1, g2)
    gap, bound = period_gap(m, fld=rigid)
    # unit angular speed: the cycle speed equals the radius
    assert gap == pytest.approx(matched_time(m, 0.5, 0.52), rel=1e-3)
    assert 0 < gap <= bound


def test_period_gap_differential():
    fld = differential_rotation()
    g1, g2 = radial_pair(fld, 0.5, 0.55)
    m = build_cov(fld, g1, g2)
    gap, bound = period_gap(m)
    ref = matched_time(m, 0.5 * (1 - 0.25), 0.55 * (1 - 0.55 ** 2))
    assert gap == pytest.approx(ref, rel=1e-3)
    assert gap <= bound
    # whole-cycle periods differ by 2 pi |1/omega1 - 1/omega2|
    full = abs(2 * np.pi / 0.75 - 2 * np.pi / (1 - 0.3025))
    assert full == pytest.approx(0.6306, abs=1e-4)
    assert full <= bound


def test_period_gap_empty_set(concentric):
    _, g1, _, m = concentric
    gap, bound = period_gap(m, F1=IntervalSet.empty(g1.length), tv_A=1.0)
    assert gap == 0.0 and bound == pytest.approx(1.0 / m.c_S ** 2)


# two-point growth -----------------------------------------------------------------

def test_two_point_rigid(rigid):
    g1, g2 = radial_pair(rigid, 0.5, 0.52, rigid_level)
    rep = two_point_gap_check(rigid, g1, g2, 0.0, 0.0, np.linspace(0, 40, 41))
    np.testing.assert_allclose(rep.gaps, 0.02, atol=1e-4)
    assert abs(rep.beta) < 1e-5 and rep.envelope_ok


def test_two_point_differential_slope(diff):
    g1, g2 = radial_pair(diff, 0.5, 0.52)
    t = np.linspace(0, 2, 21)
    rep = two_point_gap_check(diff, g1, g2, 0.0, 0.0, t)
    assert rep.gaps[0] == pytest.approx(np.hypot(*(g1.point_at(0.0) - g2.point_at(0.0))), abs=1e-15)
    dw = abs((1 - 0.25) - (1 - 0.52 ** 2))
    # tangential separation grows at r * |d omega|; the radial 0.02 adds in quadrature
    late = np.sqrt(np.maximum(rep.gaps[10:] ** 2 - 0.02 ** 2, 0))
    slope = np.polyfit(t[10:], late, 1)[0]
    assert slope == pytest.approx(0.5 * dw, rel=0.1)
    assert rep.envelope_ok and rep.predictor > 0
