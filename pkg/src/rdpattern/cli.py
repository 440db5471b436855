"""Command-line entry point: ``rdpattern <subcommand> [options]``.

Exit codes: 0 success, 1 a check failed, 2 configuration error, 3 numerical failure.
"""
from __future__ import annotations

import argparse
import csv
import json
import logging
import sys
from pathlib import Path

import numpy as np

from . import equilibria, shooting, stability, weinberger
from .experiments import (
    Config,
    ConfigError,
    label_branches,
    params_from_config,
    qss_compare,
    read_pattern_csv,
    run_scenario,
    run_sweep,
    scenario_from_config,
    sweep_from_config,
    write_pattern_csv,
    write_rows,
)
from .kinetics import BranchLabel, FullParams, ReducedParams, full_state_from_reduced, jacobian_full, reduce_params
from .solver import Grid, NumericalError, SolverConfig

EXIT_OK, EXIT_CHECK, EXIT_CONFIG, EXIT_NUMERIC = 0, 1, 2, 3

log = logging.getLogger("rdpattern")


def _out(args) -> Path:
    out = Path(args.out or ".")
    out.mkdir(parents=True, exist_ok=True)
    return out


def _config(args) -> Config:
    if not args.config:
        raise ConfigError("--config is required for this subcommand")
    return Config.load(args.config)


def _reduced(p) -> ReducedParams:
    return p if isinstance(p, ReducedParams) else reduce_params(p)[0]


def _fmt(v):
    if isinstance(v, float):
        return f"{v:.17g}"
    if isinstance(v, complex):
        return f"{v.real:.17g}{v.imag:+.17g}j"
    return v


def _write_csv(path, header, rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(header)
        for r in rows:
            w.writerow([_fmt(v) for v in r])


# --------------------------------------------------------------------------
# subcommands


def cmd_simulate(args) -> int:
    s = scenario_from_config(_config(args), n=args.grid, seed=args.seed)
    res = run_scenario(s, _out(args))
    print(f"{s.name}: reason={res['reason']} t={res['t_final']:.6g} jumps={res['jump_count']} "
          f"sup_u={res['sup_u']:.6g} v=[{res['v_min']:.6g}, {res['v_max']:.6g}]")
    return EXIT_OK


def cmd_equilibria(args) -> int:
    p = _reduced(params_from_config(_config(args)))
    states = equilibria.homogeneous_states(p)
    rows = []
    for h in states:
        e = h.eigenvalues
        rows.append((h.u, h.v, h.branch.value, h.trace, h.det, e[0].real, e[0].imag, e[1].real, e[1].imag,
                     h.kinetic_stability.value))
    out = _out(args)
    _write_csv(out / "equilibria.csv", ["u", "v", "branch", "trB", "detB", "eig1_re", "eig1_im", "eig2_re", "eig2_im",
                                        "stability"], rows)
    rep = equilibria.regime_check(p)
    _write_csv(out / "regime.csv", ["hypothesis", "holds", "margin", "note"],
               [(k, h.holds, h.margin, h.note) for k, h in rep.hypotheses.items()])
    for r in rows:
        print(f"u={r[0]:.10g} v={r[1]:.10g} branch={r[2]} {r[-1]}")
    return EXIT_OK


def cmd_construct(args) -> int:
    p = _reduced(params_from_config(_config(args)))
    n = args.grid or 1024
    try:
        if args.jumps == 1:
            # jump on a cell midpoint of the output grid, so the CSV is a discrete steady state
            pat = shooting.construct_monotone_on_grid(p, args.D, args.b, n)
        else:
            pat = shooting.construct_tiled(p, args.D, args.b, args.jumps)
    except (shooting.RegimeError, ValueError) as exc:
        if isinstance(exc, shooting.ShootingError) and not isinstance(exc, shooting.RegimeError):
            raise NumericalError(str(exc)) from exc
        raise ConfigError(str(exc)) from exc
    x, u, v, br = pat.sample(n)
    out = _out(args)
    write_pattern_csv(out / "pattern.csv", x, u, v, br)
    meta = pat.metadata()
    meta["residual_sup"] = shooting.steady_residual(pat, n)[0]
    meta["grid_n"] = n
    (out / "pattern.json").write_text(json.dumps(meta, indent=2) + "\n")
    print(f"jumps={meta['jumps']} D={meta['D']:.12g} residual={meta['residual_sup']:.3e}")
    return EXIT_OK


def _field_from_csv(path, p):
    x, u, v, _ = read_pattern_csv(path)
    return x, u, v


def cmd_check_stability(args) -> int:
    if not args.pattern:
        raise ConfigError("--pattern is required")
    p = params_from_config(_config(args))
    pr = _reduced(p)
    x, u, v = _field_from_csv(args.pattern, pr)
    rep = stability.check_thm22(stability.nodal_field(pr, x, u, v))
    if isinstance(p, FullParams):
        u1, u2, vf = full_state_from_reduced(p, u, v)
        cor = stability.check_cor24(stability.JacobianField(x, jacobian_full(p, u1, u2, vf)), p.delta)
        rep.merge(cor, "full.")
    out = _out(args)
    _write_csv(out / "stability.csv", ["condition", "holds", "margin", "witness_x"], rep.rows())
    for k, v_ in rep.constants.items():
        print(f"{k} = {v_:.10g}")
    for r in rep.rows():
        print(f"{r[0]}: {'ok' if r[1] else 'FAIL'} margin={r[2]:.6g} at x={r[3]:.6g}")
    return EXIT_OK if rep.all_hold else EXIT_CHECK


def cmd_ddi(args) -> int:
    p = _reduced(params_from_config(_config(args)))
    Ds = [float(d) for d in args.D.split(",")] if args.D else [p.D]
    grid = Grid(1.0, args.grid or 256)
    rows = []
    agree = True
    for h in equilibria.homogeneous_states(p):
        for D in Ds:
            d = stability.ddi_check(p, h, D=D)
            sp = stability.discrete_spectrum(p, h, D, grid)
            same = (d.rightmost.real > 0) == (sp.rightmost.real > 0)
            agree &= same
            rows.append((h.u, h.v, h.branch.value, D, d.kinetically_stable, d.ddi, d.rightmost.real,
                         sp.rightmost.real, len(d.unstable_modes), d.tail_unstable, same))
            print(f"v={h.v:.8g} D={D:g} stable={d.kinetically_stable} ddi={d.ddi} "
                  f"scan={d.rightmost.real:.6g} discrete={sp.rightmost.real:.6g}")
    _write_csv(_out(args) / "ddi.csv", ["u", "v", "branch", "D", "kinetically_stable", "ddi", "scan_rightmost",
                                        "discrete_rightmost", "unstable_mode_count", "tail_unstable", "agree"], rows)
    return EXIT_OK if agree else EXIT_CHECK


def cmd_sweep(args) -> int:
    plan = sweep_from_config(_config(args), n=args.grid, seed=args.seed)
    rows = run_sweep(plan, _out(args), workers=args.workers)
    for r in rows:
        print(", ".join(f"{k}={r[k]}" for k in ("value", "status", "jump_count")))
    return EXIT_NUMERIC if all(r["status"] != "ok" for r in rows) else EXIT_OK


def cmd_perturb(args) -> int:
    if not args.pattern:
        raise ConfigError("--pattern is required")
    cfg = _config(args)
    p = _reduced(params_from_config(cfg))
    x, u, v, _ = read_pattern_csv(args.pattern)
    grid = Grid(float(x[-1] - x[0]), len(x) - 1)
    solver = scenario_from_config(cfg).solver if cfg.has("solver") else SolverConfig(snapshot_every=100)
    spec = weinberger.PerturbSpec(args.eps, args.shape, args.shape, args.seed or 0)
    res = weinberger.epsA_experiment((u, v), p, grid, solver, spec, args.A, args.t_end)
    weinberger.write_time_series(res, _out(args) / "time_series.csv")
    print(f"passed={res.passed} worst_ratio={res.worst_ratio:.6g} measured_eps={res.measured_epsilon:.6g}")
    return EXIT_OK if res.passed else EXIT_CHECK


def cmd_qss(args) -> int:
    p = params_from_config(_config(args))
    if not isinstance(p, FullParams):
        raise ConfigError("qss-compare needs full-model [params]")
    grid = Grid(1.0, args.grid or 256)
    deltas = [float(d) for d in args.deltas.split(",")]
    x = grid.x
    u0 = 1.0 + 0.5 * np.cos(np.pi * x)
    v0 = np.ones_like(x)
    cfg = SolverConfig(dt=args.dt, t_end=args.t_end, stiff_delta_mode=True)
    rows = qss_compare(p, deltas, grid, cfg, u0, v0)
    out = _out(args)
    write_rows(out / "qss_gap.csv", rows)
    pr, _ = reduce_params(p)
    tracks = []
    for h in equilibria.positive_states(pr):
        st = full_state_from_reduced(p, h.u, h.v)
        for tr in stability.delta_eigen_track(p, st, deltas):
            tracks.append({"v": h.v, "delta": tr.delta, "gap": tr.gap, "scaled_remainder": tr.scaled_remainder,
                           "diverging_real": tr.diverging.real})
    write_rows(out / "eigen_track.csv", tracks)
    gaps = [r["gap"] for r in sorted(rows, key=lambda r: -r["delta"])]
    for r in rows:
        print(f"delta={r['delta']:g} gap={r['gap']:.6e}")
    return EXIT_OK if all(a > b for a, b in zip(gaps, gaps[1:])) else EXIT_CHECK


# --------------------------------------------------------------------------
# parser


def _add_globals(p: argparse.ArgumentParser, suppress: bool) -> None:
    d = argparse.SUPPRESS if suppress else None
    p.add_argument("--config", default=d, help="scenario / parameter INI file")
    p.add_argument("--out", default=d, help="output directory (default: current directory)")
    p.add_argument("--grid", type=int, default=d, help="number of grid cells")
    p.add_argument("--seed", type=int, default=d, help="random seed")


def build_parser() -> argparse.ArgumentParser:
    ap = argparse.ArgumentParser(prog="rdpattern", description=__doc__.splitlines()[0])
    ap.add_argument("-v", "--verbose", action="store_true")
    _add_globals(ap, suppress=False)
    sub = ap.add_subparsers(dest="command", required=True)

    def add(name, func, help_):
        sp = sub.add_parser(name, help=help_)
        _add_globals(sp, suppress=True)
        sp.set_defaults(func=func)
        return sp

    add("simulate", cmd_simulate, "run a scenario")
    add("equilibria", cmd_equilibria, "homogeneous steady states and regime hypotheses")
    sp = add("construct-pattern", cmd_construct, "build a jump pattern by shooting")
    sp.add_argument("--D", type=float, required=True)
    sp.add_argument("--b", type=float, required=True)
    sp.add_argument("--jumps", type=int, default=1)
    sp = add("check-stability", cmd_check_stability, "pointwise stability conditions along a pattern")
    sp.add_argument("--pattern", required=False)
    sp = add("ddi", cmd_ddi, "diffusion-driven instability of homogeneous states")
    sp.add_argument("--D", default=None, help="comma-separated diffusion coefficients")
    sp = add("sweep", cmd_sweep, "parameter sweep from a scenario with a [sweep] section")
    sp.add_argument("--workers", type=int, default=1)
    sp = add("perturb-test", cmd_perturb, "(eps, A) perturbation experiment around a pattern")
    sp.add_argument("--pattern", required=False)
    sp.add_argument("--eps", type=float, default=0.01)
    sp.add_argument("--A", type=float, default=10.0)
    sp.add_argument("--t-end", dest="t_end", type=float, default=50.0)
    sp.add_argument("--shape", default="cos1", choices=weinberger.SHAPES)
    sp = add("qss-compare", cmd_qss, "full model vs quasi-steady-state reduction")
    sp.add_argument("--deltas", default="1e-1,1e-2,1e-3")
    sp.add_argument("--t-end", dest="t_end", type=float, default=10.0)
    sp.add_argument("--dt", type=float, default=5e-4)
    return ap


def main(argv=None) -> int:
    ap = build_parser()
    try:
        args = ap.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_OK
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except (ConfigError, KeyError) as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (NumericalError, shooting.ShootingError, np.linalg.LinAlgError, FloatingPointError) as exc:
        print(f"numerical failure: {exc}", file=sys.stderr)
        return EXIT_NUMERIC


if __name__ == "__main__":
    sys.exit(main())
