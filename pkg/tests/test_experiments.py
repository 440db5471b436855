import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from rdpattern.experiments import (
    Config,
    ConfigError,
    SweepPlan,
    bundled,
    detect_jumps,
    label_branches,
    load_scenario,
    qss_compare,
    read_pattern_csv,
    run_scenario,
    run_sweep,
    scenario_from_config,
    sweep_from_config,
    write_pattern_csv,
)
from rdpattern.kinetics import BranchLabel, FullParams, ReducedParams
from rdpattern.shooting import construct_monotone, construct_tiled
from rdpattern.solver import Grid, SolverConfig

from conftest import COEX, FULL

P = ReducedParams(**COEX)

GOOD = """[scenario]
name = tiny
model = reduced
seed = 3

[params]
m1 = 1.44
m2 = 2
k = 0.01
mu3 = 4.1
D = 1

[grid]
n = 32

[solver]
dt = 1e-3
t_end = 0.2
snapshot_every = 50

[initial.u]
kind = cospoly
a = 1.725
b = 0.1
omega = 2
p = 2

[initial.v]
kind = noise
base = 2.48615
amplitude = 0.01
"""


def _cfg(text=GOOD):
    return Config(text, "tiny.ini")


@pytest.mark.parametrize(
    "old,new,keyed",
    [
        ("mu3 = 4.1", "mu3 = four", True),
        ("dt = 1e-3", "dtt = 1e-3", True),
        ("kind = cospoly", "kind = spline", True),
        ("n = 32", "n = 2", False),
    ],
)
def test_config_errors_carry_location(old, new, keyed):
    text = GOOD.replace(old, new)
    line = text.splitlines().index(new) + 1
    with pytest.raises(ConfigError) as err:
        scenario_from_config(_cfg(text))
    msg = str(err.value)
    assert msg.startswith("tiny.ini:")
    if keyed:
        assert msg.startswith(f"tiny.ini:{line} ")


def test_config_syntax_error():
    with pytest.raises(ConfigError):
        Config("m1 = 1\n[params\n", "bad.ini")


def test_config_model_mismatch_and_unknown_keys():
    with pytest.raises(ConfigError):
        scenario_from_config(_cfg(GOOD.replace("model = reduced", "model = full")))
    with pytest.raises(ConfigError):
        scenario_from_config(_cfg(GOOD.replace("D = 1", "D = 1\nzeta = 2")))


def test_missing_file():
    with pytest.raises(ConfigError):
        Config.load("/nonexistent/x.ini")


@pytest.mark.parametrize("name", ["fig3_3", "fig3_4", "fig3_5", "full_qss"])
def test_bundled_scenarios_load(name):
    s = load_scenario(bundled(name), n=64)
    st0 = s.initial_state()
    assert st0.stack().shape[1] == 65
    assert np.all(np.isfinite(st0.stack()))


def test_fig_initial_data():
    s = load_scenario(bundled("fig3_4"), n=128)
    x = s.grid.x
    st0 = s.initial_state()
    np.testing.assert_allclose(st0.u, 1.725 - 0.1 * np.cos(2 * np.pi * x**2), rtol=0, atol=1e-15)
    assert np.all(st0.v == 2.48615)
    s5 = load_scenario(bundled("fig3_5"), n=128)
    np.testing.assert_allclose(s5.initial_state().u, 1.725 - 0.1 * x**4 * np.cos(8 * np.pi * x**2), atol=1e-15)


def test_detect_jumps_constant():
    assert detect_jumps(np.full(65, 3.0), Grid(1.0, 64)) == []


@pytest.mark.parametrize("b", [2.0, 2.5, 3.0])
def test_detect_jumps_on_pattern(b):
    g = Grid(1.0, 512)
    pat = construct_monotone(P, 1.0, b)
    found = detect_jumps(pat.u(g.x), g)
    assert len(found) == 1
    assert abs(found[0] - pat.jumps[0]) <= 2 * g.dx


@pytest.mark.parametrize("jumps", [2, 3])
def test_detect_jumps_multi(jumps):
    g = Grid(1.0, 512)
    pat = construct_tiled(P, 1.0, 2.5, jumps)
    assert len(detect_jumps(pat.u(g.x), g)) == jumps


@settings(max_examples=40, deadline=None)
@given(st.floats(1e-3, 1e3), st.integers(0, 2**32 - 1))
def test_detect_jumps_scale_invariant(c, seed):
    g = Grid(1.0, 64)
    rng = np.random.default_rng(seed)
    u = np.cumsum(rng.normal(size=65)) + 5 * (g.x > 0.4)
    assert detect_jumps(c * u, g) == detect_jumps(u, g)


def test_label_branches_on_pattern():
    pat = construct_monotone(P, 1.0, 2.5)
    g = Grid(1.0, 256)
    x = g.x
    labels = label_branches(P, pat.u(x), pat.v(x))
    expect = list(pat.branch_at(x))
    assert labels == expect


def test_pattern_csv_roundtrip(tmp_path):
    x = np.linspace(0, 1, 9)
    u = np.sqrt(x + 0.1)
    v = np.exp(x)
    br = [BranchLabel.PLUS] * 4 + [BranchLabel.NULL] * 5
    write_pattern_csv(tmp_path / "p.csv", x, u, v, br)
    x2, u2, v2, br2 = read_pattern_csv(tmp_path / "p.csv")
    assert np.array_equal(x, x2) and np.array_equal(u, u2) and np.array_equal(v, v2) and br2 == br


def test_read_pattern_csv_bad(tmp_path):
    (tmp_path / "p.csv").write_text("a,b\n1,2\n")
    with pytest.raises(ConfigError):
        read_pattern_csv(tmp_path / "p.csv")


def test_run_scenario_reproducible(tmp_path):
    s = scenario_from_config(_cfg())
    a = run_scenario(s, tmp_path / "a")
    run_scenario(s, tmp_path / "b")
    for f in ("snapshots.csv", "diagnostics.csv", "final_state.csv", "summary.json"):
        assert (tmp_path / "a" / f).read_bytes() == (tmp_path / "b" / f).read_bytes()
    summ = json.loads((tmp_path / "a" / "summary.json").read_text())
    assert {"converged", "jump_count", "jumps", "t_final"} <= set(summ)
    assert "runtime_s" in json.loads((tmp_path / "a" / "timing.json").read_text())
    assert a["positive"] and a["in_rectangle"]
    assert b"\r" not in (tmp_path / "a" / "snapshots.csv").read_bytes()


def test_seed_changes_noise():
    s = scenario_from_config(_cfg())
    s2 = scenario_from_config(_cfg(), seed=4)
    assert not np.array_equal(s.initial_state().v, s2.initial_state().v)
    assert np.array_equal(s.initial_state().v, scenario_from_config(_cfg()).initial_state().v)


def test_sweep_order_and_failures(tmp_path):
    base = scenario_from_config(_cfg())
    plan = SweepPlan(base, "D", [2.0, -1.0, 0.5])
    rows = run_sweep(plan, tmp_path)
    assert [r["value"] for r in rows] == [2.0, -1.0, 0.5]
    assert [r["status"] for r in rows] == ["ok", "failed", "ok"]
    lines = (tmp_path / "summary.csv").read_text().splitlines()
    assert len(lines) == 4 and lines[0].startswith("axis,value,status")


def test_sweep_workers_match_serial():
    base = scenario_from_config(_cfg())
    plan = SweepPlan(base, "D", [5.0, 1.0, 0.1])
    assert run_sweep(plan, workers=2) == run_sweep(plan, workers=1)


def test_single_value_sweep_equals_run():
    base = scenario_from_config(_cfg())
    row = run_sweep(SweepPlan(base, "D", [1.0]))[0]
    res = run_scenario(base.with_value("D", 1.0))
    for m in ("jump_count", "t_final", "sup_u", "sup_v", "converged"):
        assert row[m] == res[m]


def test_sweep_validation():
    base = scenario_from_config(_cfg())
    with pytest.raises(ConfigError):
        SweepPlan(base, "D", [])
    with pytest.raises(ConfigError):
        SweepPlan(base, "D", [1.0, float("nan")])
    plan = sweep_from_config(Config.load(bundled("fig3_4")))
    assert plan.axis == "D" and plan.values == [5.0, 1.0, 0.5, 0.1]


def test_patterns_distinct_across_b():
    x = np.linspace(0, 1, 257)
    vs = [construct_monotone(P, 1.0, b).v(x) for b in (2.0, 2.5, 3.0)]
    assert min(np.max(np.abs(a - b)) for a, b in [(vs[0], vs[1]), (vs[1], vs[2]), (vs[0], vs[2])]) > 1e-3


def test_fig3_5_plateaus_at_interior_maxima():
    s = load_scenario(bundled("fig3_5"), n=256)
    res = run_scenario(s)
    assert res["converged"]
    jumps = res["jumps"]
    assert len(jumps) % 2 == 0
    islands = list(zip(jumps[::2], jumps[1::2]))
    x = s.grid.x
    u0 = s.initial_state().u
    interior_max = [x[i] for i in range(1, x.size - 1) if u0[i] >= u0[i - 1] and u0[i] >= u0[i + 1]]
    covered = [any(a < xm < b for a, b in islands) for xm in interior_max]
    # every plateau sits on a maximum of the initial data
    for a, b in islands:
        assert any(a < xm < b for xm in interior_max)
    assert sum(covered) >= 3


def test_qss_compare_gap_shrinks():
    pf = FullParams(**FULL, delta=1.0)
    g = Grid(1.0, 64)
    cfg = SolverConfig(dt=5e-4, t_end=1.0, stiff_delta_mode=True)
    u0 = 1 + 0.5 * np.cos(np.pi * g.x)
    rows = qss_compare(pf, [1e-1, 1e-2], g, cfg, u0, np.ones_like(u0))
    assert rows[1]["gap"] < rows[0]["gap"] / 3
