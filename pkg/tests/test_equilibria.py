import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy.optimize import brentq

from rdpattern.equilibria import (
    KineticStability,
    PoleError,
    classify,
    dg_minus_dv,
    dg_minus_dv_limit,
    homogeneous_states,
    invariant_rectangle,
    k0_intersections,
    mu3_threshold,
    nullclines,
    positive_states,
    regime_check,
)
from rdpattern.kinetics import BranchLabel, FullParams, ReducedParams, branches, eval_reduced

from conftest import COEX, FIG, FULL


def test_nullclines_at_zero(fig_params):
    assert nullclines(fig_params, 0.0) == {"v_f0": -1.0, "v_g0": 0.0, "v_fg": 0.0}


def test_vfg_independent_of_k(fig_params):
    for u in (0.3, 1.0, 4.0):
        assert nullclines(fig_params, u)["v_fg"] == nullclines(fig_params.replace(k=0.1), u)["v_fg"]


def test_vfg_point_value(fig_params):
    r = 2 / 1.44
    assert nullclines(fig_params, 1.0)["v_fg"] == pytest.approx(r / (4.1 + 1 - r), rel=1e-15)
    assert nullclines(fig_params, 1.0)["v_fg"] == pytest.approx(0.37425149700598803, abs=1e-14)


def test_vfg_pole(fig_params):
    pole = fig_params.m1 * fig_params.mu3 / (fig_params.m2 - fig_params.m1)
    with pytest.raises(PoleError):
        nullclines(fig_params, pole)


def test_k0_intersections_against_bisection(fig_params):
    lo, hi = k0_intersections(fig_params)
    l = lambda u: nullclines(fig_params.replace(k=1e-300), u)["v_g0"] - nullclines(fig_params, u)["v_fg"]
    assert lo == pytest.approx(brentq(l, 0.5, 2.0, xtol=1e-15), abs=1e-12)
    assert hi == pytest.approx(brentq(l, 5.0, 9.0, xtol=1e-15), abs=1e-12)
    assert lo == pytest.approx(0.93612, abs=1e-5)
    assert hi == pytest.approx(7.82102, abs=1e-5)


def test_small_k_states_approach_k0_limit(fig_params):
    lo, hi = k0_intersections(fig_params)
    us = sorted(s.u for s in positive_states(fig_params.replace(k=1e-7)))
    assert us == pytest.approx([lo, hi], rel=1e-4)


@pytest.mark.parametrize("pars", [FIG, COEX, dict(m1=1.1, m2=3.0, k=0.005, mu3=5.0, D=1.0)])
def test_origin_present_and_residuals(pars):
    p = ReducedParams(**pars)
    states = homogeneous_states(p)
    o = states[0]
    assert (o.u, o.v) == (0.0, 0.0) and o.kinetic_stability == KineticStability.STABLE
    assert sorted(e.real for e in o.eigenvalues) == pytest.approx(sorted([-1.0, -p.mu3]))
    for s in states:
        f, g = eval_reduced(p, s.u, s.v)
        assert abs(f) <= 1e-10 * (1 + s.u) and abs(g) <= 1e-10 * (1 + s.u)
        if s.u > 0:
            b = branches(p, s.v)
            assert s.u == pytest.approx(b.u_minus if s.branch == BranchLabel.MINUS else b.u_plus, rel=1e-12)


def test_coexistence_regime_states(coex):
    pos = positive_states(coex)
    assert len(pos) == 2
    assert all(s.branch == BranchLabel.MINUS for s in pos)
    lo, hi = pos
    assert lo.det < -1e-3
    assert hi.trace < -1e-3 and hi.det > 1e-3
    assert lo.kinetic_stability == KineticStability.UNSTABLE
    assert hi.kinetic_stability == KineticStability.STABLE
    assert hi.v == pytest.approx(2.1710244165477, abs=1e-9)


def test_classify_marginal():
    assert classify([0.0, -1.0]) == KineticStability.MARGINAL
    assert classify([1e-3, -1.0]) == KineticStability.UNSTABLE


def test_regime_check_coexistence(coex):
    rep = regime_check(coex)
    assert rep.mu3_threshold == pytest.approx(mu3_threshold(1.2, 2.0))
    assert rep.mu3_threshold == pytest.approx(3.70125, abs=5e-5)
    assert rep.all_hold


def test_regime_check_figure_params_fail_sqrt(fig_params):
    rep = regime_check(fig_params)
    assert not rep.hypotheses["m1<sqrt(m2)"].holds
    assert rep.hypotheses["m1<sqrt(m2)"].margin == pytest.approx(math.sqrt(2) - 1.44)


def test_regime_check_equal_gains():
    rep = regime_check(ReducedParams(m1=1.5, m2=1.5, k=0.01, mu3=4.0))
    assert not rep.hypotheses["m1<m2"].holds
    assert not rep.hypotheses["mu3>threshold"].holds


def test_empirical_k_thresholds(coex):
    rep = regime_check(coex, search_k_star=True)
    assert rep.k1_star is not None and rep.k1_star > coex.k
    assert rep.k2_star is not None and rep.k2_star > coex.k
    assert rep.hypotheses["k<k1*"].note == "empirical"


def test_invariant_rectangle_reduced(fig_params):
    r = invariant_rectangle(fig_params)
    assert r.u_hi == pytest.approx((1.44 + math.sqrt(1.44**2 - 0.04)) / 0.02, rel=1e-14)
    assert r.v_hi == pytest.approx(48.78049, abs=1e-5)
    assert not r.decay


def test_invariant_rectangle_decay():
    assert invariant_rectangle(ReducedParams(m1=0.1, m2=1.0, k=0.01, mu3=1.0)).decay
    pf = FullParams(**dict(FULL, theta1=0.1))
    assert pf.theta1 < 2 * pf.nu1 * math.sqrt(pf.kappa)
    assert invariant_rectangle(pf).decay
    assert not invariant_rectangle(FullParams(**FULL)).decay


def test_dg_minus_limit_converges(fig_params):
    v = np.linspace(0.05, 2.0, 200)
    errs = [np.max(np.abs(dg_minus_dv(fig_params.replace(k=k), v) - dg_minus_dv_limit(fig_params, v)))
            for k in (1e-2, 1e-3, 1e-4)]
    assert errs[0] > errs[1] > errs[2]


@settings(max_examples=30, deadline=None)
@given(v=st.floats(0.05, 4.9))
def test_dg_minus_matches_fd(v):
    from rdpattern.kinetics import u_minus

    p = ReducedParams(**COEX)
    g = lambda w: eval_reduced(p, u_minus(p, w), w)[1]
    h = 1e-6
    assert dg_minus_dv(p, v) == pytest.approx((g(v + h) - g(v - h)) / (2 * h), abs=1e-5)
