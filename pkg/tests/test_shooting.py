import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.integrate import quad

from rdpattern.kinetics import BranchLabel, ReducedParams, u_plus, v_r
from rdpattern.shooting import (
    Energy,
    InfeasiblePlan,
    NotSwitchable,
    RegimeError,
    Shooter,
    construct_monotone,
    construct_monotone_on_grid,
    construct_multiswitch,
    construct_tiled,
    energy_table,
    h_plus,
    integrate_plus_segment,
    steady_residual,
)

from conftest import COEX

P = ReducedParams(**COEX)
VR = v_r(P)


@pytest.fixture(scope="module")
def sh():
    return Shooter(P)


def test_energy_table_endpoints():
    t = energy_table(P, 2048)
    assert t.H[0] == 0.0
    assert t.p_star[-1] == 0.0
    assert t.w[-1] == VR


def test_energy_table_matches_adaptive_quadrature():
    t = energy_table(P)
    f = lambda w: float(h_plus(P, w))
    for i in range(1, len(t.w), 517):
        ref, _ = quad(f, 0.0, t.w[i], epsabs=1e-13, epsrel=1e-13, limit=200)
        assert t.H[i] == pytest.approx(ref, abs=1e-9)


def test_h_increasing_and_pstar_decreasing():
    t = energy_table(P, 2048)
    assert np.all(np.diff(t.h[:-1]) > 0)
    assert np.all(np.diff(t.p_star) < 0)
    assert t.h[0] < t.h[-1] < 0


def test_regime_error():
    with pytest.raises(RegimeError):
        energy_table(ReducedParams(m1=0.1, m2=1, k=0.01, mu3=1))
    with pytest.raises(RegimeError):
        Shooter(ReducedParams(m1=0.1, m2=1, k=0.01, mu3=1))


@pytest.mark.parametrize("b", [0.5, 0.5 * VR, 4.5])
def test_plus_segment_energy_identity(b):
    prof = integrate_plus_segment(P, b)
    en = Energy(P)
    x = np.linspace(0, prof.x_b, 40)
    w, wp = prof.w(x), prof.dw(x)
    Hb = en.H(b)
    for wi, wpi in zip(w, wp):
        wi = min(max(float(wi), 0.0), b)
        assert abs(wpi**2 - 2 * (en.H(wi) - Hb)) <= 1e-8 * (1 + abs(Hb))


def test_plus_segment_bound_and_monotone():
    b = 0.5 * VR
    prof = integrate_plus_segment(P, b)
    assert 0 < prof.x_b < math.sqrt(2 * b / abs(float(h_plus(P, b))))
    x = np.linspace(0, prof.x_b, 100)
    assert np.all(np.diff(prof.w(x)) < 0)


def test_plus_segment_ordered_in_b():
    p1, p2 = integrate_plus_segment(P, 2.0), integrate_plus_segment(P, 2.3)
    x = np.linspace(0, min(p1.x_b, p2.x_b), 200)
    assert np.all(p1.w(x) < p2.w(x))


@pytest.mark.parametrize("b", [0.0, -1.0, VR, VR + 1])
def test_plus_segment_rejects_b(b):
    with pytest.raises(ValueError):
        integrate_plus_segment(P, b)


def test_switch_plus_to_null_c1_matching(sh):
    b = 2.5
    cs = sh.c_upper_star(b)
    c = 0.5 * (cs + b)
    sw = sh.switch_plus_to_null(b, c)
    s3 = math.sqrt(P.mu3)
    # cosh segment centred at y_c to the right of the joint
    assert abs(sw.a * math.cosh(-s3 * sw.y_c) - c) < 1e-10
    assert abs(sw.a * s3 * math.sinh(-s3 * sw.y_c) - sw.slope) < 1e-10
    assert abs(sh.switch_indicator(b, cs)) < 1e-9


def test_switch_plus_to_null_limits(sh):
    b = 2.5
    near = sh.switch_plus_to_null(b, b * (1 - 1e-8))
    assert near.x_c < 1e-3 and near.y_c < 1e-3 and near.a == pytest.approx(b, rel=1e-6)
    cs = sh.c_upper_star(b)
    far = sh.switch_plus_to_null(b, cs + 1e-9)
    assert far.y_c > 2.0 and far.a < 1e-3


def test_switch_plus_to_null_not_switchable(sh):
    cs = sh.c_upper_star(2.5)
    with pytest.raises(NotSwitchable):
        sh.switch_plus_to_null(2.5, 0.9 * cs)


def test_switch_null_to_plus_matching(sh):
    a = 1.5
    cl = sh.c_lower_star(a)
    g = 0.5 * (a + cl)
    sw = sh.switch_null_to_plus(a, g)
    prof = sw.profile
    target = -math.sqrt(P.mu3 * (g * g - a * a))
    assert abs(float(prof.w(sw.x_c)) - g) < 1e-10
    assert abs(sw.slope - target) < 1e-10
    assert g < sw.b < VR


def test_switch_null_to_plus_limits(sh):
    a = 1.5
    assert sh.switch_null_to_plus(a, a * (1 + 1e-9)).b == pytest.approx(a, rel=1e-6)
    cl = sh.c_lower_star(a)
    assert sh.switch_null_to_plus(a, cl * (1 - 1e-9)).b > 0.99 * VR
    with pytest.raises(NotSwitchable):
        sh.switch_null_to_plus(a, 0.5 * (cl + VR))


def test_slope_map_strictly_decreasing_in_b(sh):
    g = 2.0
    bs = np.linspace(2.05, 4.9, 25)
    slopes = [sh.slope_at(b, g) for b in bs]
    assert np.all(np.diff(slopes) < 0)


def test_length_map_spans_D_range(sh):
    b = 2.5
    cs = sh.c_upper_star(b)
    gaps = np.geomspace(1e-10, 0.5, 30) * (b - cs)
    cs_ = np.concatenate([cs + gaps, (b - gaps)[::-1][1:]])
    Ds = [1.0 / sh.length(b, c) ** 2 for c in cs_]
    # D -> 0 only logarithmically in c - c*; 0.03 is the floor reachable in double precision
    assert min(Ds) <= 0.03 and max(Ds) >= 100
    assert np.all(np.diff(Ds) > 0)


@pytest.mark.parametrize("b", [1.5, 2.5, 3.5])
def test_construct_monotone(b, sh):
    pat = construct_monotone(P, 1.0, b, sh)
    assert 1.0 / pat.scale**2 == pytest.approx(1.0, rel=1e-10)
    assert len(pat.jumps) == 1
    assert all(m < 1e-10 for pair in pat.joint_mismatch() for m in pair)
    assert pat.boundary_slopes() == pytest.approx((0.0, 0.0), abs=1e-12)
    assert steady_residual(pat, 1024)[0] <= 1e-6
    x, u, v, br = pat.sample(1024)
    left = x < pat.jumps[0]
    np.testing.assert_allclose(u[left], u_plus(P, v[left]), rtol=1e-14)
    assert np.all(u[~left] == 0.0)
    assert set(br[left]) == {BranchLabel.PLUS} and set(br[~left]) == {BranchLabel.NULL}


def test_distinct_b_distinct_patterns(sh):
    x = np.linspace(0, 1, 257)
    p1, p2 = construct_monotone(P, 1.0, 2.0, sh), construct_monotone(P, 1.0, 3.0, sh)
    assert np.max(np.abs(p1.v(x) - p2.v(x))) > 0.1


def test_two_switch_pattern(sh):
    b = 2.5
    c = 0.5 * (sh.c_upper_star(b) + b)
    a = sh.switch_plus_to_null(b, c).a
    g = 0.5 * (a + sh.c_lower_star(a))
    pat = construct_multiswitch(P, None, [c, g], ("plus", b), sh)
    assert len(pat.jumps) == 2
    assert pat.branches == [BranchLabel.PLUS, BranchLabel.NULL, BranchLabel.PLUS]
    assert all(m < 1e-10 for pair in pat.joint_mismatch() for m in pair)
    assert pat.boundary_slopes() == pytest.approx((0.0, 0.0), abs=1e-12)
    assert pat.D == pytest.approx(1.0 / pat.scale**2)
    assert steady_residual(pat, 1024)[0] <= 1e-6


def test_two_switch_pattern_with_target_D(sh):
    b = 2.5
    c = 0.5 * (sh.c_upper_star(b) + b)
    a = sh.switch_plus_to_null(b, c).a
    g = 0.5 * (a + sh.c_lower_star(a))
    pat = construct_multiswitch(P, 1.0, [c, g], ("plus", b), sh)
    assert 1.0 / pat.scale**2 == pytest.approx(1.0, rel=1e-10)
    assert steady_residual(pat, 1024)[0] <= 1e-6


def test_empty_plan_is_single_segment(sh):
    pat = construct_multiswitch(P, None, [], ("plus", 2.5), sh)
    assert pat.jumps == [] and len(pat.segments) == 1
    assert pat.segments[0].branch == BranchLabel.PLUS


def test_infeasible_plan(sh):
    with pytest.raises(InfeasiblePlan):
        construct_multiswitch(P, None, [0.1], ("plus", 2.5), sh)


def test_null_start_plan(sh):
    a = 1.5
    g = 0.5 * (a + sh.c_lower_star(a))
    pat = construct_multiswitch(P, None, [g], ("null", a), sh)
    assert pat.branches == [BranchLabel.NULL, BranchLabel.PLUS]
    assert pat.boundary_slopes() == pytest.approx((0.0, 0.0), abs=1e-12)
    assert steady_residual(pat, 1024)[0] <= 1e-6


@pytest.mark.parametrize("jumps", [2, 3, 4])
def test_tiled_patterns(jumps, sh):
    pat = construct_tiled(P, 1.0, 2.5, jumps, sh)
    assert len(pat.jumps) == jumps
    assert 1.0 / pat.scale**2 == pytest.approx(1.0, rel=1e-9)
    assert steady_residual(pat, 1024)[0] <= 1e-6
    # every Plus segment returns to the same maximum
    bs = [s.descriptor.b for s in pat.segments if s.branch == BranchLabel.PLUS]
    assert bs == pytest.approx([2.5] * len(bs), abs=1e-9)


def test_on_grid_alignment(sh):
    pat = construct_monotone_on_grid(P, 1.0, 2.5, 512, sh)
    pos = pat.jumps[0] * 512
    assert pos - math.floor(pos) == pytest.approx(0.5, abs=1e-9)


@settings(max_examples=10, deadline=None)
@given(b=st.floats(1.0, 4.5), logD=st.floats(-1.0, 1.0))
def test_monotone_residual_property(b, logD):
    pat = construct_monotone(P, 10.0**logD, b)
    assert all(m < 1e-10 for pair in pat.joint_mismatch() for m in pair)
    assert 1.0 / pat.scale**2 == pytest.approx(10.0**logD, rel=1e-10)
