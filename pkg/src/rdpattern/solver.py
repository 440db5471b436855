"""Time integration of the ODE + reaction-diffusion systems on [0, l].

Spatial discretisation: node-centred finite differences on ``n + 1`` nodes,
homogeneous Neumann conditions through reflected ghost nodes. Only the last
component diffuses.

Default scheme (``"imex"``): Crank-Nicolson for diffusion, reaction advanced
by the explicit two-stage trapezoidal (Heun) rule, both stages sharing the
same factorised CN matrix. Second order in dt and dx.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
from scipy.sparse.linalg import splu

from .kinetics import FullParams, ReducedParams, eval_full, eval_reduced, jacobian_full, jacobian_reduced

log = logging.getLogger(__name__)


class NumericalError(RuntimeError):
    """NaN/Inf in the state or failed Newton iteration."""


class BlowUpError(NumericalError):
    def __init__(self, msg, trajectory=None):
        super().__init__(msg)
        self.trajectory = trajectory


@dataclass(frozen=True)
class Grid:
    l: float = 1.0
    n: int = 512

    def __post_init__(self):
        if self.n < 8:
            raise ValueError("grid needs n >= 8 cells")
        if not self.l > 0:
            raise ValueError("interval length must be positive")

    @property
    def dx(self) -> float:
        return self.l / self.n

    @property
    def x(self) -> np.ndarray:
        return np.linspace(0.0, self.l, self.n + 1)

    @property
    def weights(self) -> np.ndarray:
        """Trapezoidal quadrature weights on the nodes."""
        w = np.full(self.n + 1, self.dx)
        w[0] = w[-1] = 0.5 * self.dx
        return w


def neumann_laplacian(grid: Grid) -> sp.csr_matrix:
    """Second-order Neumann Laplacian using reflected ghost nodes."""
    n1 = grid.n + 1
    inv = 1.0 / grid.dx**2
    main = np.full(n1, -2.0 * inv)
    upper = np.full(n1 - 1, inv)
    lower = np.full(n1 - 1, inv)
    upper[0] = 2.0 * inv
    lower[-1] = 2.0 * inv
    return sp.diags([lower, main, upper], [-1, 0, 1], format="csr")


@dataclass
class State:
    """Grid functions of a two- or three-component state.

    Two-component: ``u`` and ``v`` are set, ``u2`` is ``None``.
    Three-component: ``u`` holds u1, ``u2`` the fast species, ``v`` the ligand.
    """

    u: np.ndarray
    v: np.ndarray
    u2: np.ndarray | None = None

    @classmethod
    def three(cls, u1, u2, v) -> "State":
        return cls(np.asarray(u1, float), np.asarray(v, float), np.asarray(u2, float))

    @property
    def is_three(self) -> bool:
        return self.u2 is not None

    @property
    def u1(self) -> np.ndarray:
        return self.u

    def stack(self) -> np.ndarray:
        rows = [self.u, self.u2, self.v] if self.is_three else [self.u, self.v]
        return np.vstack([np.asarray(r, dtype=float) for r in rows])

    @classmethod
    def from_stack(cls, y: np.ndarray) -> "State":
        if y.shape[0] == 3:
            return cls(y[0].copy(), y[2].copy(), y[1].copy())
        return cls(y[0].copy(), y[1].copy())

    def copy(self) -> "State":
        return State.from_stack(self.stack())


@dataclass
class SolverConfig:
    dt: float = 1e-3
    t_end: float = 100.0
    scheme: str = "imex"  # "imex" | "implicit"
    snapshot_every: int = 1000
    newton_tol: float = 1e-12
    newton_maxiter: int = 30
    stiff_delta_mode: bool = False
    steady_tol: float = 1e-8
    stop_at_steady: bool = True
    blowup_factor: float = 10.0

    def __post_init__(self):
        if not (self.dt > 0 and self.t_end > 0 and self.newton_tol > 0 and self.steady_tol > 0):
            raise ValueError("dt, t_end and tolerances must be positive")
        if self.scheme not in ("imex", "implicit"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.snapshot_every < 1:
            raise ValueError("snapshot_every must be >= 1")


@dataclass
class Trajectory:
    times: list = field(default_factory=list)
    states: list = field(default_factory=list)
    diagnostics: list = field(default_factory=list)
    reason: str = ""
    steps: int = 0

    @property
    def converged(self) -> bool:
        return self.reason == "converged"

    @property
    def final(self) -> State:
        return self.states[-1]


# --------------------------------------------------------------------------
# kinetics adaptors: map a stacked state (m, n+1) to reaction rates


@dataclass(frozen=True)
class PureDiffusion:
    """Two-component system with zero kinetics; u is frozen and v solves the heat equation."""

    D: float = 1.0


class _Model:
    """Reaction terms, diffusion coefficient and bounds of one of the models."""

    def __init__(self, p):
        self.p = p
        if isinstance(p, PureDiffusion):
            self.m = 2
            self.D = p.D
            self.delta = 1.0
        elif isinstance(p, ReducedParams):
            self.m = 2
            self.D = p.D
            self.delta = 1.0
        elif isinstance(p, FullParams):
            self.m = 3
            self.D = p.gamma
            self.delta = p.delta
        else:
            raise TypeError(f"unsupported parameter type {type(p).__name__}")

    def reaction(self, y: np.ndarray) -> np.ndarray:
        if isinstance(self.p, PureDiffusion):
            return np.zeros_like(y)
        if self.m == 2:
            f, g = eval_reduced(self.p, y[0], y[1])
            return np.vstack([f, g])
        f1, f2, g = eval_full(self.p, y[0], y[1], y[2])
        return np.vstack([f1, f2 / self.delta, g])

    def jacobian(self, y: np.ndarray) -> np.ndarray:
        """Pointwise Jacobian, shape (n+1, m, m)."""
        if isinstance(self.p, PureDiffusion):
            return np.zeros((y.shape[1], 2, 2))
        if self.m == 2:
            return jacobian_reduced(self.p, y[0], y[1])
        a = jacobian_full(self.p, y[0], y[1], y[2])
        a[:, 1, :] /= self.delta
        return a

    def rectangle(self):
        from .equilibria import invariant_rectangle

        if isinstance(self.p, PureDiffusion):
            return None
        return invariant_rectangle(self.p)


def _phi1(z):
    return -math.expm1(-z) / z if z > 1e-8 else 1.0 - z / 2.0


def _phi2(z):
    return (z - 1.0 + math.exp(-z)) / (z * z) if z > 1e-4 else 0.5 - z / 6.0


class Stepper:
    """Pre-factorised one-step map for fixed (params, grid, dt)."""

    def __init__(self, p, grid: Grid, cfg: SolverConfig, forcing: Callable | None = None):
        self.model = _Model(p)
        self.grid = grid
        self.cfg = cfg
        self.forcing = forcing
        self.x = grid.x
        self.L = neumann_laplacian(grid)
        n1 = grid.n + 1
        half = 0.5 * cfg.dt * self.model.D
        eye = sp.identity(n1, format="csc")
        self.lhs = splu((eye - half * self.L).tocsc())
        self.rhs_op = (eye + half * self.L).tocsr()
        self.stiff = cfg.stiff_delta_mode and self.model.m == 3
        if self.stiff:
            p = self.model.p
            self.rate = (p.nu2 + p.alpha) / p.delta
            z = self.rate * cfg.dt
            self.e = math.exp(-z)
            self.phi1 = _phi1(z)
            self.phi2 = _phi2(z)

    def _rates(self, y, t):
        r = self.model.reaction(y)
        if self.forcing is not None:
            r = r + self.forcing(t, self.x)
        return r

    def step(self, y: np.ndarray, t: float) -> np.ndarray:
        if self.cfg.scheme == "implicit":
            out = self._step_implicit(y, t)
        else:
            out = self._step_imex(y, t)
        if not np.all(np.isfinite(out)):
            raise NumericalError(f"non-finite state after step at t={t:.6g}")
        return out

    def _step_imex(self, y, t):
        dt = self.cfg.dt
        r0 = self._rates(y, t)
        base = self.rhs_op @ y[-1]
        ys = np.empty_like(y)
        ys[:-1] = y[:-1] + dt * r0[:-1]
        ys[-1] = self.lhs.solve(base + dt * r0[-1])
        if self.stiff:
            # u2 row: exact decay of the linear part, source treated by ETD2
            src0 = self._u2_source(y, t)
            ys[1] = self.e * y[1] + dt * self.phi1 * src0
        r1 = self._rates(ys, t + dt)
        out = np.empty_like(y)
        out[:-1] = y[:-1] + 0.5 * dt * (r0[:-1] + r1[:-1])
        out[-1] = self.lhs.solve(base + 0.5 * dt * (r0[-1] + r1[-1]))
        if self.stiff:
            src1 = self._u2_source(ys, t + dt)
            out[1] = ys[1] + dt * self.phi2 * (src1 - src0)
        return out

    def _u2_source(self, y, t):
        p = self.model.p
        s = p.beta * y[0] * y[2] / p.delta
        if self.forcing is not None:
            s = s + self.forcing(t, self.x)[1]
        return s

    def _step_implicit(self, y, t):
        """Crank-Nicolson in all terms, Newton on the coupled nodal system."""
        dt = self.cfg.dt
        m, n1 = y.shape
        D = self.model.D
        r0 = self._rates(y, t)
        lap = self.L
        explicit = y + 0.5 * dt * r0
        explicit[-1] += 0.5 * dt * D * (lap @ y[-1])
        z = self._step_imex(y, t) if not self.stiff else y.copy()
        eye = sp.identity(m * n1, format="csr")
        for _ in range(self.cfg.newton_maxiter):
            r1 = self._rates(z, t + dt)
            res = z - explicit - 0.5 * dt * r1
            res[-1] -= 0.5 * dt * D * (lap @ z[-1])
            if np.max(np.abs(res)) < self.cfg.newton_tol * max(1.0, np.max(np.abs(z))):
                return z
            jac = self.model.jacobian(z)  # (n1, m, m)
            blocks = [[sp.diags(jac[:, i, j]) for j in range(m)] for i in range(m)]
            blocks[-1][-1] = blocks[-1][-1] + D * lap
            J = eye - 0.5 * dt * sp.bmat(blocks, format="csr")
            dz = sp.linalg.spsolve(J.tocsc(), res.ravel())
            z = z - dz.reshape(m, n1)
        raise NumericalError(f"Newton iteration did not converge at t={t:.6g}")


# --------------------------------------------------------------------------


def step(state: State, p, grid: Grid, cfg: SolverConfig, t: float = 0.0, forcing=None) -> State:
    """Advance ``state`` by one time step ``cfg.dt``."""
    stepper = Stepper(p, grid, cfg, forcing)
    return State.from_stack(stepper.step(state.stack(), t))


def _diagnostics(t, y, y_prev, dt, rect, is_three):
    sup = np.max(np.abs(y), axis=1)
    d = {"t": t, "sup_u": float(sup[0]), "sup_v": float(sup[-1])}
    if is_three:
        d["sup_u2"] = float(sup[1])
    d["dstate_dt"] = float(np.max(np.abs(y - y_prev)) / dt) if y_prev is not None else float("nan")
    d["in_rectangle"] = bool(rect.contains(y)) if rect is not None else True
    d["positive"] = bool(np.all(y >= 0.0))
    return d


def simulate(state0: State, p, grid: Grid, cfg: SolverConfig, forcing=None) -> Trajectory:
    """Integrate to ``cfg.t_end`` or until the discrete time derivative drops below ``cfg.steady_tol``."""
    stepper = Stepper(p, grid, cfg, forcing)
    y = state0.stack()
    if y.shape != (stepper.model.m, grid.n + 1):
        raise ValueError(f"state shape {y.shape} does not match model/grid {(stepper.model.m, grid.n + 1)}")
    rect = stepper.model.rectangle()
    if rect is not None and not rect.contains(y):
        log.warning("initial data outside the invariant rectangle")
    bound = rect.sup_bound() if rect is not None else math.inf
    traj = Trajectory()
    traj.times.append(0.0)
    traj.states.append(State.from_stack(y))
    traj.diagnostics.append(_diagnostics(0.0, y, None, cfg.dt, rect, y.shape[0] == 3))
    nsteps = int(round(cfg.t_end / cfg.dt))
    t = 0.0
    reason = "t_end"
    prev = y
    for i in range(1, nsteps + 1):
        prev = y
        y = stepper.step(y, t)
        t = i * cfg.dt
        rate = np.max(np.abs(y - prev)) / cfg.dt
        sup = np.max(np.abs(y))
        if sup > cfg.blowup_factor * bound:
            traj.times.append(t)
            traj.states.append(State.from_stack(y))
            traj.diagnostics.append(_diagnostics(t, y, prev, cfg.dt, rect, y.shape[0] == 3))
            traj.reason, traj.steps = "blowup", i
            raise BlowUpError(f"sup-norm {sup:.3g} exceeds {cfg.blowup_factor} x rectangle bound at t={t:.6g}", traj)
        done = cfg.stop_at_steady and rate < cfg.steady_tol
        if i % cfg.snapshot_every == 0 or i == nsteps or done:
            traj.times.append(t)
            traj.states.append(State.from_stack(y))
            traj.diagnostics.append(_diagnostics(t, y, prev, cfg.dt, rect, y.shape[0] == 3))
        if done:
            reason = "converged"
            break
    traj.reason = reason
    traj.steps = i if nsteps else 0
    return traj


def simulate_full(state0: State, p: FullParams, grid: Grid, cfg: SolverConfig, forcing=None) -> Trajectory:
    if not isinstance(p, FullParams):
        raise TypeError("simulate_full needs FullParams")
    if not state0.is_three:
        raise ValueError("simulate_full needs a three-component state")
    return simulate(state0, p, grid, cfg, forcing)


# --------------------------------------------------------------------------
# CSV output


def write_snapshots(traj: Trajectory, grid: Grid, path) -> None:
    x = grid.x
    three = traj.states[0].is_three
    with open(path, "w", newline="\n") as fh:
        fh.write("t,x,u1,u2,v\n" if three else "t,x,u,v\n")
        for t, s in zip(traj.times, traj.states):
            cols = [s.u, s.u2, s.v] if three else [s.u, s.v]
            for i in range(x.size):
                fh.write(",".join(f"{val:.17g}" for val in (t, x[i], *(c[i] for c in cols))) + "\n")


def write_diagnostics(traj: Trajectory, path) -> None:
    with open(path, "w", newline="\n") as fh:
        fh.write("t,sup_u,sup_v,dstate_dt,in_rectangle\n")
        for d in traj.diagnostics:
            fh.write(f"{d['t']:.17g},{d['sup_u']:.17g},{d['sup_v']:.17g},{d['dstate_dt']:.17g},{int(d['in_rectangle'])}\n")
