"""Scenario configs, initial-data vocabulary, jump detection, runs and sweeps.

Scenario files are INI documents read with :mod:`configparser`::

    [scenario]
    name = fig3_4_D1
    model = reduced          ; or full
    seed = 0

    [params]
    m1 = 1.44
    ...

    [grid]
    n = 512

    [solver]
    dt = 1e-3
    t_end = 100

    [initial.u]
    kind = cospoly           ; a - b x^q cos(omega pi x^p)
    a = 1.725
    b = 0.1
    omega = 2
    p = 2

    [initial.v]
    kind = const
    value = 2.48615

    [sweep]
    axis = D
    values = 5, 1, 0.5, 0.1
"""
from __future__ import annotations

import configparser
import csv
import dataclasses
import json
import logging
import math
import re
import time
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .kinetics import FULL_KEYS, REDUCED_KEYS, BranchLabel, FullParams, ReducedParams, qss_u2, reduce_params, u_minus, u_plus
from .solver import Grid, NumericalError, SolverConfig, State, simulate, write_diagnostics, write_snapshots

log = logging.getLogger(__name__)

SCENARIO_DIR = Path(__file__).parent / "scenarios"
INIT_KINDS = ("const", "cospoly", "noise", "qss")
JUMP_THETA = 0.25
JUMP_MIN_SEP = 3


class ConfigError(ValueError):
    pass


# --------------------------------------------------------------------------
# config parsing


def _line_of(text: str, section: str, key: str | None = None) -> int | None:
    cur = None
    for i, line in enumerate(text.splitlines(), 1):
        s = line.strip()
        m = re.match(r"\[(.+)\]", s)
        if m:
            cur = m.group(1).strip()
            if key is None and cur == section:
                return i
            continue
        if cur == section and key is not None and re.match(rf"{re.escape(key)}\s*[=:]", s):
            return i
    return None


class Config:
    """Thin wrapper over ConfigParser that reports file:line for bad keys."""

    def __init__(self, text: str, source: str = "<string>"):
        self.text = text
        self.source = source
        self.cp = configparser.ConfigParser(inline_comment_prefixes=(";", "#"), interpolation=None)
        self.cp.optionxform = str
        try:
            self.cp.read_string(text, source)
        except configparser.Error as exc:
            raise ConfigError(f"{source}: {exc}") from exc

    @classmethod
    def load(cls, path) -> "Config":
        path = Path(path)
        try:
            text = path.read_text()
        except OSError as exc:
            raise ConfigError(f"cannot read config {path}: {exc}") from exc
        return cls(text, str(path))

    def where(self, section: str, key: str | None = None) -> str:
        line = _line_of(self.text, section, key)
        loc = f"{self.source}:{line}" if line else self.source
        return f"{loc} [{section}]" + (f" {key}" if key else "")

    def has(self, section: str) -> bool:
        return self.cp.has_section(section)

    def section(self, section: str) -> dict:
        if not self.cp.has_section(section):
            raise ConfigError(f"{self.source}: missing section [{section}]")
        return dict(self.cp.items(section))

    def get(self, section: str, key: str, conv=str, default=None):
        if not self.cp.has_option(section, key):
            if default is not None:
                return default
            raise ConfigError(f"{self.where(section)}: missing key {key!r}")
        raw = self.cp.get(section, key)
        try:
            return conv(raw)
        except (TypeError, ValueError) as exc:
            raise ConfigError(f"{self.where(section, key)}: bad value {raw!r} ({exc})") from exc


def _bool(s: str) -> bool:
    low = s.strip().lower()
    if low in ("1", "true", "yes", "on"):
        return True
    if low in ("0", "false", "no", "off"):
        return False
    raise ValueError("expected a boolean")


def params_from_config(cfg: Config):
    data = cfg.section("params")
    keys = set(data)
    if keys <= set(REDUCED_KEYS) | {"D"} and {"m1", "m2", "k", "mu3"} <= keys:
        cls, order = ReducedParams, REDUCED_KEYS
    elif set(FULL_KEYS) - {"delta"} <= keys <= set(FULL_KEYS):
        cls, order = FullParams, FULL_KEYS
    else:
        extra = sorted(keys - set(REDUCED_KEYS) - set(FULL_KEYS))
        raise ConfigError(f"{cfg.where('params')}: keys {sorted(keys)} match neither model"
                          + (f" (unknown: {extra})" if extra else ""))
    vals = {k: cfg.get("params", k, float) for k in order if k in data}
    try:
        return cls(**vals)
    except ValueError as exc:
        raise ConfigError(f"{cfg.where('params')}: {exc}") from exc


# --------------------------------------------------------------------------
# initial data


@dataclass(frozen=True)
class InitSpec:
    kind: str
    coeffs: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.kind not in INIT_KINDS:
            raise ValueError(f"unknown initial-data kind {self.kind!r}; choose from {INIT_KINDS}")


def cospoly(x, a: float, b: float, q: float = 0.0, omega: float = 2.0, p: float = 1.0):
    """a - b x^q cos(omega pi x^p)."""
    return a - b * x**q * np.cos(omega * np.pi * x**p)


def eval_init(spec: InitSpec, grid: Grid, rng: np.random.Generator) -> np.ndarray:
    x = grid.x / grid.l
    c = spec.coeffs
    if spec.kind == "const":
        return np.full_like(x, float(c["value"]))
    if spec.kind == "cospoly":
        return cospoly(x, float(c["a"]), float(c["b"]), float(c.get("q", 0.0)),
                       float(c.get("omega", 2.0)), float(c.get("p", 1.0)))
    if spec.kind == "noise":
        return float(c["base"]) + float(c["amplitude"]) * rng.uniform(-1.0, 1.0, x.size)
    raise ValueError(f"kind {spec.kind!r} needs model context")


@dataclass
class Scenario:
    name: str
    model: str
    params: ReducedParams | FullParams
    grid: Grid
    solver: SolverConfig
    initial: dict
    out: Path | None = None
    seed: int = 0

    def with_value(self, axis: str, value: float) -> "Scenario":
        if axis.startswith("grid."):
            return dataclasses.replace(self, grid=dataclasses.replace(self.grid, **{axis[5:]: type(getattr(self.grid, axis[5:]))(value)}))
        if axis.startswith("solver."):
            return dataclasses.replace(self, solver=dataclasses.replace(self.solver, **{axis[7:]: value}))
        if not hasattr(self.params, axis):
            raise ConfigError(f"unknown sweep axis {axis!r}")
        return dataclasses.replace(self, params=self.params.replace(**{axis: float(value)}),
                                   name=f"{self.name}_{axis}{value:g}")

    def initial_state(self) -> State:
        rng = np.random.default_rng(self.seed)
        comps = ("u", "v") if self.model == "reduced" else ("u1", "u2", "v")
        vals = {}
        for c in comps:
            if c not in self.initial:
                raise ConfigError(f"scenario {self.name}: missing [initial.{c}]")
            if self.initial[c].kind != "qss":
                vals[c] = eval_init(self.initial[c], self.grid, rng)
        if self.model == "reduced":
            return State(vals["u"], vals["v"])
        if "u2" not in vals:
            vals["u2"] = qss_u2(self.params, vals["u1"], vals["v"])
        return State.three(vals["u1"], vals["u2"], vals["v"])


_SOLVER_TYPES = {f.name: f.type for f in dataclasses.fields(SolverConfig)}
_CONV = {"float": float, "int": int, "str": str, "bool": _bool}


def scenario_from_config(cfg: Config, out: Path | None = None, n: int | None = None, seed: int | None = None) -> Scenario:
    params = params_from_config(cfg)
    model = "reduced" if isinstance(params, ReducedParams) else "full"
    if cfg.has("scenario"):
        declared = cfg.get("scenario", "model", str, model)
        if declared != model:
            raise ConfigError(f"{cfg.where('scenario', 'model')}: model {declared!r} but [params] are {model}")
    name = cfg.get("scenario", "name", str, "scenario") if cfg.has("scenario") else "scenario"
    sd = cfg.get("scenario", "seed", int, 0) if cfg.has("scenario") else 0
    g = {}
    if cfg.has("grid"):
        for key in cfg.section("grid"):
            if key not in ("l", "n"):
                raise ConfigError(f"{cfg.where('grid', key)}: unknown key")
        g = {"l": cfg.get("grid", "l", float, 1.0), "n": cfg.get("grid", "n", int, 512)}
    if n is not None:
        g["n"] = n
    try:
        grid = Grid(**g)
    except ValueError as exc:
        raise ConfigError(f"{cfg.where('grid')}: {exc}") from exc
    s = {}
    if cfg.has("solver"):
        for key in cfg.section("solver"):
            if key not in _SOLVER_TYPES:
                raise ConfigError(f"{cfg.where('solver', key)}: unknown key")
            s[key] = cfg.get("solver", key, _CONV[_SOLVER_TYPES[key]])
    try:
        solver = SolverConfig(**s)
    except ValueError as exc:
        raise ConfigError(f"{cfg.where('solver')}: {exc}") from exc
    initial = {}
    for sec in cfg.cp.sections():
        if sec.startswith("initial."):
            comp = sec.split(".", 1)[1]
            data = cfg.section(sec)
            kind = data.pop("kind", None)
            if kind not in INIT_KINDS:
                raise ConfigError(f"{cfg.where(sec, 'kind')}: kind must be one of {INIT_KINDS}, got {kind!r}")
            for k in data:
                try:
                    data[k] = float(data[k])
                except ValueError as exc:
                    raise ConfigError(f"{cfg.where(sec, k)}: bad value {data[k]!r}") from exc
            initial[comp] = InitSpec(kind, data)
    if seed is not None:
        sd = seed
    return Scenario(name, model, params, grid, solver, initial, out, sd)


def load_scenario(path, **kw) -> Scenario:
    return scenario_from_config(Config.load(path), **kw)


def bundled(name: str) -> Path:
    path = SCENARIO_DIR / f"{name}.ini"
    if not path.exists():
        raise ConfigError(f"no bundled scenario {name!r}")
    return path


# --------------------------------------------------------------------------
# jump detection and branch labels


def detect_jumps(u, grid: Grid, theta: float = JUMP_THETA, min_sep: int = JUMP_MIN_SEP) -> list:
    """Cell midpoints where |u[i+1] - u[i]| > theta * range(u); candidates closer than min_sep cells are merged."""
    u = np.asarray(u, dtype=float)
    rng = float(u.max() - u.min())
    if rng <= 0:
        return []
    d = np.abs(np.diff(u))
    idx = np.flatnonzero(d > theta * rng)
    picked: list[int] = []
    for i in idx:
        if picked and i - picked[-1] < min_sep:
            if d[i] > d[picked[-1]]:
                picked[-1] = i
            continue
        picked.append(int(i))
    return [float(grid.x[i] + 0.5 * grid.dx) for i in picked]


def label_branches(p: ReducedParams, u, v, zero_tol: float = 1e-6) -> list:
    """Nearest branch of f_r = 0 for every node (Null if u is essentially zero)."""
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    up, um = u_plus(p, v), u_minus(p, v)
    out = []
    for ui, a, b in zip(u, up, um):
        if abs(ui) <= zero_tol * max(1.0, float(np.nanmax(np.abs(u)))) or np.isnan(a):
            out.append(BranchLabel.NULL)
            continue
        cand = {BranchLabel.NULL: abs(ui), BranchLabel.PLUS: abs(ui - a), BranchLabel.MINUS: abs(ui - b)}
        out.append(min(cand, key=cand.get))
    return out


def write_pattern_csv(path, x, u, v, branch) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(["x", "u", "v", "branch"])
        for row in zip(x, u, v, branch):
            w.writerow([f"{row[0]:.17g}", f"{row[1]:.17g}", f"{row[2]:.17g}", BranchLabel(row[3]).value])


def read_pattern_csv(path):
    """(x, u, v, branch labels) from a pattern CSV."""
    try:
        with open(path, newline="") as fh:
            rows = list(csv.DictReader(fh))
    except OSError as exc:
        raise ConfigError(f"cannot read pattern {path}: {exc}") from exc
    if not rows or not {"x", "u", "v"} <= set(rows[0]):
        raise ConfigError(f"{path}: expected header x,u,v[,branch]")
    try:
        x = np.array([float(r["x"]) for r in rows])
        u = np.array([float(r["u"]) for r in rows])
        v = np.array([float(r["v"]) for r in rows])
    except ValueError as exc:
        raise ConfigError(f"{path}: {exc}") from exc
    br = [BranchLabel(r["branch"]) if r.get("branch") else None for r in rows]
    return x, u, v, br


# --------------------------------------------------------------------------
# runs


def _reduced_view(s: Scenario, state: State):
    if s.model == "reduced":
        return s.params, state.u, state.v
    pr, sc = reduce_params(s.params)
    return pr, sc.c_u * state.u1, sc.c_v * state.v


def run_scenario(s: Scenario, out: Path | None = None) -> dict:
    """Simulate a scenario and write its artifacts (if an output directory is set).

    Files: snapshots.csv, diagnostics.csv, final_state.csv (x,u,v,branch in
    reduced variables), summary.json. Wall time goes to timing.json so the
    other files are byte-reproducible.
    """
    out = out or s.out
    t0 = time.perf_counter()
    state0 = s.initial_state()
    traj = simulate(state0, s.params, s.grid, s.solver)
    runtime = time.perf_counter() - t0
    fin = traj.final
    pr, u, v = _reduced_view(s, fin)
    jumps = detect_jumps(fin.u1 if s.model == "full" else fin.u, s.grid)
    summary = {
        "name": s.name,
        "model": s.model,
        "converged": traj.converged,
        "reason": traj.reason,
        "t_final": traj.times[-1],
        "steps": traj.steps,
        "jump_count": len(jumps),
        "jumps": jumps,
        "sup_u": float(np.max(np.abs(fin.u1 if s.model == "full" else fin.u))),
        "sup_v": float(np.max(np.abs(fin.v))),
        "v_min": float(np.min(fin.v)),
        "v_max": float(np.max(fin.v)),
        "in_rectangle": all(d["in_rectangle"] for d in traj.diagnostics),
        "positive": all(d["positive"] for d in traj.diagnostics),
    }
    if out is not None:
        out = Path(out)
        out.mkdir(parents=True, exist_ok=True)
        write_snapshots(traj, s.grid, out / "snapshots.csv")
        write_diagnostics(traj, out / "diagnostics.csv")
        write_pattern_csv(out / "final_state.csv", s.grid.x, u, v, label_branches(pr, u, v))
        (out / "summary.json").write_text(json.dumps(summary, indent=2) + "\n")
        (out / "timing.json").write_text(json.dumps({"runtime_s": runtime}) + "\n")
    summary["runtime_s"] = runtime
    summary["trajectory"] = traj
    return summary


@dataclass
class SweepPlan:
    base: Scenario
    axis: str
    values: list
    metrics: tuple = ("jump_count", "converged", "t_final", "sup_u", "sup_v")

    def __post_init__(self):
        if not self.values:
            raise ConfigError("sweep values must be non-empty")
        if not all(math.isfinite(float(v)) for v in self.values):
            raise ConfigError("sweep values must be finite")


def sweep_from_config(cfg: Config, **kw) -> SweepPlan:
    base = scenario_from_config(cfg, **kw)
    axis = cfg.get("sweep", "axis")
    try:
        values = [float(t) for t in cfg.get("sweep", "values").split(",")]
    except ValueError as exc:
        raise ConfigError(f"{cfg.where('sweep', 'values')}: {exc}") from exc
    return SweepPlan(base, axis, values)


def _sweep_row(args):
    plan_base, axis, value, metrics, out = args
    row = {"axis": axis, "value": value, "status": "ok", "error": ""}
    try:
        s = plan_base.with_value(axis, value)
        res = run_scenario(s, out)
        for m in metrics:
            row[m] = res[m]
    except (NumericalError, ValueError, ArithmeticError) as exc:
        row["status"] = "failed"
        row["error"] = f"{type(exc).__name__}: {exc}"
        for m in metrics:
            row[m] = ""
    return row


def run_sweep(plan: SweepPlan, out: Path | None = None, workers: int = 1) -> list[dict]:
    """Run every value of the plan; failures are recorded per row. Rows keep plan order."""
    jobs = []
    for i, val in enumerate(plan.values):
        sub = Path(out) / f"run_{i:03d}" if out is not None else None
        jobs.append((plan.base, plan.axis, val, plan.metrics, sub))
    if workers > 1:
        with ProcessPoolExecutor(max_workers=workers) as ex:
            rows = list(ex.map(_sweep_row, jobs))
    else:
        rows = [_sweep_row(j) for j in jobs]
    if out is not None:
        Path(out).mkdir(parents=True, exist_ok=True)
        write_rows(Path(out) / "summary.csv", rows)
    return rows


def write_rows(path, rows: list[dict]) -> None:
    if not rows:
        Path(path).write_text("")
        return
    keys = list(rows[0])
    with open(path, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=keys, lineterminator="\n")
        w.writeheader()
        for r in rows:
            w.writerow({k: (f"{r[k]:.17g}" if isinstance(r[k], float) else r[k]) for k in keys})


# --------------------------------------------------------------------------
# full vs reduced comparison


def qss_compare(pf: FullParams, deltas, grid: Grid, cfg: SolverConfig, u0, v0) -> list[dict]:
    """Sup-norm gap between rescaled full-model and reduced trajectories at cfg.t_end.

    ``u0``/``v0`` are reduced-variable initial data; the full model starts on
    the slow manifold. Reduced time is nu1 times full time.
    """
    pr, sc = reduce_params(pf)
    red_cfg = dataclasses.replace(cfg, dt=cfg.dt * sc.c_t, t_end=cfg.t_end * sc.c_t, stop_at_steady=False,
                                  snapshot_every=10**9)
    ref = simulate(State(np.asarray(u0, float), np.asarray(v0, float)), pr, grid, red_cfg).final
    rows = []
    for d in deltas:
        p = pf.replace(delta=d)
        u1 = np.asarray(u0, float) / sc.c_u
        vf = np.asarray(v0, float) / sc.c_v
        st = State.three(u1, qss_u2(p, u1, vf), vf)
        fcfg = dataclasses.replace(cfg, stop_at_steady=False, snapshot_every=10**9)
        fin = simulate(st, p, grid, fcfg).final
        gap = max(float(np.max(np.abs(sc.c_u * fin.u1 - ref.u))), float(np.max(np.abs(sc.c_v * fin.v - ref.v))))
        rows.append({"delta": d, "gap": gap})
    return rows
