"""Steady states with jump discontinuities built by matching ODE segments.

On a Null segment (u = 0) the steady equation ``v'' = mu3 v`` gives
``v = a cosh(sqrt(mu3) (x - x0))``. On a Plus segment (u = u_+(v)) the profile
``w`` solves ``w'' = h(w) := -g_r(u_+(w), w)``, ``w(0) = b``, ``w'(0) = 0``,
integrated numerically. Segments are glued with continuous v and v'; u jumps
at each joint. Both profiles are even about their centre, so a pattern that
starts and ends at a centre satisfies the Neumann conditions.

Construction is done with unit diffusion on ``[0, L]`` and rescaled to
``[0, 1]`` which yields ``D = 1 / L**2``.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property

import numpy as np
from scipy.integrate import quad, solve_ivp
from scipy.optimize import brentq

from .kinetics import BranchLabel, ReducedParams, eval_reduced, u_plus, v_r

RTOL = 1e-12
ATOL = 1e-12
XTOL = 1e-13


class ShootingError(ValueError):
    pass


class NotSwitchable(ShootingError):
    pass


class InfeasiblePlan(ShootingError):
    pass


class RegimeError(ShootingError):
    pass


def _require_regime(p: ReducedParams) -> float:
    vr = v_r(p)
    if vr <= 0:
        raise RegimeError(f"v_r = {vr:.6g} <= 0: no Plus branch (m1 <= 2 sqrt(k))")
    return vr


def h_plus(p: ReducedParams, w):
    """h(w) = -g_r(u_+(w), w), the right-hand side of the Plus-segment ODE."""
    return -eval_reduced(p, u_plus(p, w), w)[1]


# --------------------------------------------------------------------------
# energy


class Energy:
    """Primitive H(w) = int_0^w h and p_*(gamma) = sqrt(2 (H(gamma) - H(v_r))).

    Integrals use the substitution ``w = v_r (1 - (1 - t)^2)`` which removes
    the square-root behaviour of u_+ at v_r.
    """

    def __init__(self, p: ReducedParams):
        self.p = p
        self.vr = _require_regime(p)
        self._cache: dict = {}

    def _t_of_w(self, w):
        return 1.0 - math.sqrt(max(0.0, 1.0 - w / self.vr))

    def _integrand(self, t):
        w = self.vr * (1.0 - (1.0 - t) ** 2)
        return float(h_plus(self.p, w)) * 2.0 * self.vr * (1.0 - t)

    def H(self, w: float) -> float:
        if w in self._cache:
            return self._cache[w]
        if w == 0:
            return 0.0
        if not 0 < w <= self.vr:
            raise ValueError(f"H defined on [0, v_r], got {w}")
        val, _ = quad(self._integrand, 0.0, self._t_of_w(w), epsabs=1e-13, epsrel=1e-13, limit=200)
        self._cache[w] = val
        return val

    @cached_property
    def H_vr(self) -> float:
        return self.H(self.vr)

    def p_star(self, gamma: float) -> float:
        return math.sqrt(max(0.0, 2.0 * (self.H(gamma) - self.H_vr)))


@dataclass
class EnergyTable:
    w: np.ndarray
    H: np.ndarray
    h: np.ndarray
    p_star: np.ndarray
    v_r: float


def energy_table(p: ReducedParams, resolution: int = 8192) -> EnergyTable:
    """Tabulate H on ``resolution + 1`` nodes by cumulative composite Simpson.

    Nodes are uniform in the substituted variable t (see :class:`Energy`);
    ``resolution`` must be even.
    """
    vr = _require_regime(p)
    if resolution % 2:
        raise ValueError("resolution must be even")
    t = np.linspace(0.0, 1.0, resolution + 1)
    w = vr * (1.0 - (1.0 - t) ** 2)
    w[-1] = vr
    hv = h_plus(p, w)
    f = hv * 2.0 * vr * (1.0 - t)
    dt = t[1] - t[0]
    H = np.zeros_like(t)
    # Simpson on each pair of panels; odd nodes from a 3-point quadratic fit
    pair = dt / 3.0 * (f[0:-2:2] + 4.0 * f[1:-1:2] + f[2::2])
    H[2::2] = np.cumsum(pair)
    half = dt / 12.0 * (5.0 * f[0:-2:2] + 8.0 * f[1:-1:2] - f[2::2])
    H[1::2] = H[0:-2:2] + half
    if not (hv[0] < hv[-1] < 0):
        raise RegimeError("expected h(0) < h(v_r) < 0; fewer than two homogeneous Minus states")
    ps = np.sqrt(np.maximum(0.0, 2.0 * (H - H[-1])))
    return EnergyTable(w=w, H=H, h=hv, p_star=ps, v_r=vr)


# --------------------------------------------------------------------------
# segments


@dataclass
class PlusProfile:
    """Numerical solution w(s; b), s in [0, x_b], with w(x_b) = 0."""

    b: float
    x_b: float
    sol: object = field(repr=False)

    def w(self, s):
        s = np.abs(np.asarray(s, dtype=float))
        return self.sol.sol(s)[0]

    def dw(self, s):
        s = np.asarray(s, dtype=float)
        return np.sign(s) * self.sol.sol(np.abs(s))[1]

    @property
    def samples(self):
        return self.sol.t, self.sol.y[0], self.sol.y[1]

    def x_at(self, level: float) -> float:
        """Unique s in [0, x_b] with w(s) = level."""
        if not 0.0 <= level <= self.b:
            raise ValueError(f"level {level} outside [0, b]")
        if level == self.b:
            return 0.0
        return brentq(lambda s: float(self.sol.sol(s)[0]) - level, 0.0, self.x_b, xtol=1e-15, rtol=1e-15, maxiter=200)


def integrate_plus_segment(p: ReducedParams, b: float, rtol: float = RTOL, atol: float = ATOL) -> PlusProfile:
    vr = _require_regime(p)
    if not 0 < b < vr:
        raise ValueError(f"b = {b} outside (0, v_r = {vr})")

    def rhs(_, y):
        return (y[1], float(h_plus(p, y[0])))

    def hit_zero(_, y):
        return y[0]

    hit_zero.terminal = True
    hit_zero.direction = -1
    bound = math.sqrt(2.0 * b / abs(float(h_plus(p, b))))
    sol = solve_ivp(rhs, (0.0, 2.0 * bound + 1.0), (b, 0.0), method="DOP853", rtol=rtol, atol=atol,
                    dense_output=True, events=hit_zero)
    if sol.status != 1 or not len(sol.t_events[0]):
        raise ShootingError(f"Plus-segment integration failed for b={b}: {sol.message}")
    return PlusProfile(b=b, x_b=float(sol.t_events[0][0]), sol=sol)


@dataclass
class CoshSeg:
    a: float
    center: float
    sqrt_mu3: float

    def v(self, X):
        return self.a * np.cosh(self.sqrt_mu3 * (np.asarray(X) - self.center))

    def dv(self, X):
        return self.a * self.sqrt_mu3 * np.sinh(self.sqrt_mu3 * (np.asarray(X) - self.center))


@dataclass
class PlusSeg:
    profile: PlusProfile
    center: float

    @property
    def b(self) -> float:
        return self.profile.b

    def v(self, X):
        return self.profile.w(np.asarray(X) - self.center)

    def dv(self, X):
        return self.profile.dw(np.asarray(X) - self.center)


@dataclass
class Segment:
    """One branch-homogeneous piece; x_start/x_end live on the unscaled axis [0, L]."""

    branch: BranchLabel
    x_start: float
    x_end: float
    descriptor: CoshSeg | PlusSeg


@dataclass
class SwitchPN:
    a: float
    y_c: float
    x_c: float
    slope: float


@dataclass
class SwitchNP:
    b: float
    x_c: float
    y_c: float
    slope: float
    profile: PlusProfile = field(repr=False, default=None)


# --------------------------------------------------------------------------
# switching


class Shooter:
    """Caches Plus profiles and the energy for one parameter set."""

    def __init__(self, p: ReducedParams):
        self.p = p
        self.vr = _require_regime(p)
        self.sqrt_mu3 = math.sqrt(p.mu3)
        self.energy = Energy(p)
        self._profiles: dict = {}

    def profile(self, b: float) -> PlusProfile:
        if b not in self._profiles:
            self._profiles[b] = integrate_plus_segment(self.p, b)
        return self._profiles[b]

    # Plus -> Null -------------------------------------------------------

    def switch_indicator(self, b: float, c: float) -> float:
        """|w'(x_c)| - sqrt(mu3) c; negative iff switchable at c."""
        prof = self.profile(b)
        xc = prof.x_at(c)
        return abs(float(prof.sol.sol(xc)[1])) - self.sqrt_mu3 * c

    def c_upper_star(self, b: float) -> float:
        """c*(b): switchable to the cosh segment exactly for c in (c*(b), b)."""
        prof = self.profile(b)
        lo = 1e-14 * b
        return brentq(lambda c: self.switch_indicator(b, c), lo, b, xtol=1e-15, rtol=1e-15, maxiter=300) \
            if prof else math.nan

    def switch_plus_to_null(self, b: float, c: float) -> SwitchPN:
        if not 0 < c < b:
            raise NotSwitchable(f"need 0 < c < b, got c={c}, b={b}")
        prof = self.profile(b)
        xc = prof.x_at(c)
        wp = float(prof.sol.sol(xc)[1])
        ratio = wp / (self.sqrt_mu3 * c)
        if not abs(ratio) < 1.0:
            raise NotSwitchable(f"|w'(x_c)| = {abs(wp):.6g} >= sqrt(mu3) c = {self.sqrt_mu3 * c:.6g}")
        xi = math.atanh(ratio)
        return SwitchPN(a=c / math.cosh(xi), y_c=-xi / self.sqrt_mu3, x_c=xc, slope=wp)

    # Null -> Plus -------------------------------------------------------

    def c_lower_star(self, a: float) -> float:
        """c_*(a): cosh segment switchable to a Plus segment exactly for gamma in (a, c_*(a))."""
        if not 0 < a < self.vr:
            raise ValueError("need 0 < a < v_r")
        en = self.energy
        f = lambda c: math.sqrt(self.p.mu3 * (c * c - a * a)) - en.p_star(c)
        return brentq(f, a, self.vr, xtol=1e-15, rtol=1e-15, maxiter=300)

    def slope_at(self, b: float, gamma: float) -> float:
        """w'(x(gamma, b); b) (negative)."""
        prof = self.profile(b)
        return float(prof.sol.sol(prof.x_at(gamma))[1])

    def switch_null_to_plus(self, a: float, gamma: float) -> SwitchNP:
        if not 0 < a < gamma < self.vr:
            raise NotSwitchable(f"need 0 < a < gamma < v_r, got a={a}, gamma={gamma}")
        q = math.sqrt(self.p.mu3 * (gamma * gamma - a * a))
        ps = self.energy.p_star(gamma)
        if not q < ps:
            raise NotSwitchable(f"slope {q:.6g} >= p_*(gamma) = {ps:.6g}")
        # energy identity gives the bracket; the root is refined on integrated profiles
        en = self.energy
        target_H = en.H(gamma) - 0.5 * q * q
        b_guess = brentq(lambda b: en.H(b) - target_H, gamma, self.vr, xtol=1e-15, rtol=1e-15)
        F = lambda b: self.slope_at(b, gamma) + q
        lo, hi = gamma + 0.5 * (b_guess - gamma), b_guess + 0.5 * (self.vr - b_guess)
        if not (F(lo) > 0 > F(hi)):
            lo, hi = gamma * (1 + 1e-14) + 1e-300, self.vr * (1 - 1e-12)
        b = brentq(F, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200)
        prof = self.profile(b)
        xc = prof.x_at(gamma)
        return SwitchNP(b=b, x_c=xc, y_c=math.acosh(gamma / a) / self.sqrt_mu3,
                        slope=float(prof.sol.sol(xc)[1]), profile=prof)

    # monotone pattern ---------------------------------------------------

    def length(self, b: float, c: float) -> float:
        sw = self.switch_plus_to_null(b, c)
        return sw.x_c + sw.y_c

    def c_for_D(self, b: float, D: float) -> float:
        if not D > 0:
            raise ValueError("D must be positive")
        target = 1.0 / math.sqrt(D)
        cs = self.c_upper_star(b)
        lo, hi = cs + 1e-12 * (b - cs), b - 1e-12 * (b - cs)
        f = lambda c: math.log(self.length(b, c) / target)
        # push lo toward c* until L(lo) exceeds target (L -> inf as c -> c*)
        k = 0
        while f(lo) < 0:
            k += 1
            lo = cs + (lo - cs) * 1e-3
            if k > 8 or lo <= cs:
                raise ShootingError("could not bracket c for the requested D")
        while f(hi) > 0:
            hi = b - (b - hi) * 1e-3
            if b - hi <= 0:
                raise ShootingError("could not bracket c for the requested D")
        return brentq(f, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=300)


# --------------------------------------------------------------------------
# patterns


@dataclass
class PiecewisePattern:
    """Steady state on [0, 1]: ordered segments, jump positions and diffusion coefficient.

    ``segments`` are stored on the unscaled axis [0, L]; ``scale = L``.
    """

    segments: list
    D: float
    params: ReducedParams
    scale: float
    matching: list = field(default_factory=list)

    @property
    def jumps(self) -> list:
        return [s.x_end / self.scale for s in self.segments[:-1]]

    @property
    def branches(self) -> list:
        return [s.branch for s in self.segments]

    def _locate(self, X):
        ends = np.array([s.x_end for s in self.segments[:-1]])
        return np.searchsorted(ends, X, side="right")

    def v(self, x):
        x = np.asarray(x, dtype=float)
        X = x * self.scale
        idx = self._locate(X)
        out = np.empty_like(X)
        for i, seg in enumerate(self.segments):
            m = idx == i
            if np.any(m):
                out[m] = seg.descriptor.v(X[m])
        return out

    def dv(self, x):
        """dv/dx on the scaled axis."""
        x = np.asarray(x, dtype=float)
        X = x * self.scale
        idx = self._locate(X)
        out = np.empty_like(X)
        for i, seg in enumerate(self.segments):
            m = idx == i
            if np.any(m):
                out[m] = seg.descriptor.dv(X[m]) * self.scale
        return out

    def branch_at(self, x) -> np.ndarray:
        idx = self._locate(np.asarray(x, dtype=float) * self.scale)
        return np.array([self.segments[i].branch for i in np.atleast_1d(idx)], dtype=object)

    def u(self, x):
        x = np.asarray(x, dtype=float)
        idx = self._locate(x * self.scale)
        v = self.v(x)
        out = np.zeros_like(v)
        for i, seg in enumerate(self.segments):
            if seg.branch == BranchLabel.PLUS:
                m = idx == i
                out[m] = u_plus(self.params, v[m])
        return out

    def sample(self, n: int):
        """(x, u, v, branch) on the uniform grid with n cells."""
        x = np.linspace(0.0, 1.0, n + 1)
        return x, self.u(x), self.v(x), self.branch_at(x)

    def joint_mismatch(self) -> list:
        """|jump in v| and |jump in v'| at each joint, evaluated from both sides."""
        out = []
        for left, right in zip(self.segments[:-1], self.segments[1:]):
            X = left.x_end
            dv0 = abs(float(left.descriptor.v(X)) - float(right.descriptor.v(X)))
            dv1 = abs(float(left.descriptor.dv(X)) - float(right.descriptor.dv(X)))
            out.append((dv0, dv1))
        return out

    def boundary_slopes(self) -> tuple:
        first, last = self.segments[0], self.segments[-1]
        return float(first.descriptor.dv(0.0)), float(last.descriptor.dv(self.scale))

    def metadata(self) -> dict:
        return {
            "D": self.D,
            "jumps": self.jumps,
            "branches": [b.value for b in self.branches],
            "length_unscaled": self.scale,
            "joint_mismatch": self.joint_mismatch(),
            "boundary_slopes": self.boundary_slopes(),
            "params": {k: getattr(self.params, k) for k in ("m1", "m2", "k", "mu3", "D")},
        }


def _compose(p: ReducedParams, switch_plan, start: tuple, sh: Shooter) -> PiecewisePattern:
    """Glue segments following ``switch_plan``.

    ``start`` is ``("plus", b)`` or ``("null", a)``. Each plan entry is the
    v-level of the next switch: c for Plus -> Null (must lie in (c*(b), b)),
    gamma for Null -> Plus (must lie in (a, c_*(a))). The pattern ends at the
    centre of its last segment, so v' vanishes at both ends. An empty plan
    returns the bare starting Plus segment on [0, x_b] (no Neumann condition
    at the right end).
    """
    kind, val = start
    segs: list[Segment] = []
    matching = []
    if kind == "plus":
        prof = sh.profile(val)
        cur = PlusSeg(prof, 0.0)
        branch = BranchLabel.PLUS
    elif kind == "null":
        cur = CoshSeg(val, 0.0, sh.sqrt_mu3)
        branch = BranchLabel.NULL
    else:
        raise ValueError(f"unknown start {kind!r}")
    x0 = 0.0
    if not switch_plan:
        if branch != BranchLabel.PLUS:
            raise InfeasiblePlan("empty plan needs a Plus start")
        seg = Segment(branch, 0.0, cur.profile.x_b, cur)
        D = 1.0 / seg.x_end**2
        return PiecewisePattern([seg], D, p.replace(D=D), seg.x_end)
    for level in switch_plan:
        try:
            if branch == BranchLabel.PLUS:
                # descending side of the current plus profile
                sw = sh.switch_plus_to_null(cur.b, level)
                xj = cur.center + sw.x_c
                nxt = CoshSeg(sw.a, xj + sw.y_c, sh.sqrt_mu3)
                nbranch = BranchLabel.NULL
                matching.append({"type": "plus->null", "level": level, "a": sw.a,
                                 "x_c": sw.x_c, "y_c": sw.y_c})
            else:
                sw = sh.switch_null_to_plus(cur.a, level)
                xj = cur.center + sw.y_c
                nxt = PlusSeg(sw.profile, xj + sw.x_c)
                nbranch = BranchLabel.PLUS
                matching.append({"type": "null->plus", "level": level, "b": sw.b,
                                 "x_c": sw.x_c, "y_c": sw.y_c})
        except NotSwitchable as exc:
            raise InfeasiblePlan(str(exc)) from exc
        segs.append(Segment(branch, x0, xj, cur))
        cur, branch, x0 = nxt, nbranch, xj
    segs.append(Segment(branch, x0, cur.center, cur))
    L = cur.center
    D = 1.0 / L**2
    return PiecewisePattern(segs, D, p.replace(D=D), L, matching)


def _last_window(sh: Shooter, pat: PiecewisePattern) -> tuple[float, float]:
    seg = pat.segments[-2]
    if seg.branch == BranchLabel.PLUS:
        b = seg.descriptor.b
        return sh.c_upper_star(b), b
    a = seg.descriptor.a
    return a, sh.c_lower_star(a)


def construct_multiswitch(p: ReducedParams, D: float | None, switch_plan, start: tuple = ("plus", None),
                          shooter: Shooter | None = None) -> PiecewisePattern:
    """Pattern following ``switch_plan`` (see :func:`_compose` for the plan format).

    With ``D=None`` the pattern length fixes the diffusion coefficient, which
    is reported as ``pattern.D``. Otherwise the last switch level is re-solved
    inside its switchability window so that the implied D equals the target.
    """
    sh = shooter or Shooter(p)
    plan = list(switch_plan)
    pat = _compose(p, plan, start, sh)
    if D is None or not plan:
        return pat
    if not D > 0:
        raise ValueError("D must be positive")
    target = 1.0 / math.sqrt(D)
    lo, hi = _last_window(sh, pat)
    width = hi - lo

    def f(level):
        try:
            return math.log(_compose(p, plan[:-1] + [level], start, sh).scale / target)
        except InfeasiblePlan:
            return math.nan

    for s_ in (1e-9, 1e-6, 1e-3):
        a_, b_ = lo + s_ * width, hi - s_ * width
        fa, fb = f(a_), f(b_)
        if fa * fb < 0:
            level = brentq(f, a_, b_, xtol=1e-15, rtol=1e-15, maxiter=300)
            out = _compose(p, plan[:-1] + [level], start, sh)
            out.D = D
            out.params = p.replace(D=D)
            return out
    raise InfeasiblePlan(f"no level of the last switch gives D = {D}")


def construct_monotone(p: ReducedParams, D: float, b: float, shooter: Shooter | None = None) -> PiecewisePattern:
    """Single-jump decreasing pattern (Plus near x = 0, Null near x = 1) for diffusion D."""
    sh = shooter or Shooter(p)
    c = sh.c_for_D(b, D)
    pat = _compose(p, [c], ("plus", b), sh)
    pat.D = D
    pat.params = p.replace(D=D)
    return pat


def construct_tiled(p: ReducedParams, D: float, b: float, jumps: int, shooter: Shooter | None = None) -> PiecewisePattern:
    """Pattern with ``jumps`` jumps for diffusion D: reflected copies of a monotone cell.

    Each cell spans 1/jumps of the domain, so the cell problem has diffusion
    D * jumps**2. Returning switches reuse the same level, which recovers b.
    """
    if jumps < 1:
        raise ValueError("jumps must be >= 1")
    sh = shooter or Shooter(p)
    c = sh.c_for_D(b, D * jumps * jumps)
    pat = _compose(p, [c] * jumps, ("plus", b), sh)
    pat.D = D
    pat.params = p.replace(D=D)
    return pat


def steady_residual(pattern: PiecewisePattern, n: int, exclude: int = 2) -> tuple[float, np.ndarray]:
    """sup |D v_xx + g_r(u, v)| on an n-cell grid, skipping nodes within ``exclude`` cells of a jump.

    v_xx uses the fourth-order five-point stencil; v is extended evenly across
    both boundaries (each pattern ends at a segment centre).
    """
    x, u, v, _ = pattern.sample(n)
    dx = 1.0 / n
    ext = np.concatenate([v[2:0:-1], v, v[-2:-4:-1]])
    vxx = (-ext[:-4] + 16 * ext[1:-3] - 30 * ext[2:-2] + 16 * ext[3:-1] - ext[4:]) / (12 * dx * dx)
    res = pattern.D * vxx + eval_reduced(pattern.params, u, v)[1]
    mask = np.ones_like(x, dtype=bool)
    for xj in pattern.jumps:
        mask &= np.abs(x - xj) > (exclude + 0.5) * dx + 1e-15
    return float(np.max(np.abs(res[mask]))), res


def construct_monotone_on_grid(p: ReducedParams, D: float, b: float, n: int,
                               shooter: Shooter | None = None) -> PiecewisePattern:
    """Monotone pattern for diffusion D with b adjusted so the jump sits on a cell midpoint of an n-cell grid.

    On a node-centred grid a jump between nodes i and i+1 behaves like a jump
    at (i + 1/2)/n; matching that position keeps the sampled pattern O(dx^2)
    close to the discrete steady state.
    """
    sh = shooter or Shooter(p)
    jump = lambda bb: construct_monotone(p, D, bb, sh).jumps[0]
    j0 = jump(b)
    target = (math.floor(j0 * n - 0.5) + 0.5) / n
    for cand in (target, target + 1.0 / n):
        lo, hi = b, b
        # jump position increases with b; widen a bracket around b
        step = 0.02 * (sh.vr - b)
        f = lambda bb: jump(bb) - cand
        for _ in range(60):
            lo, hi = max(lo - step, 1e-6 * b), min(hi + step, sh.vr * (1 - 1e-9))
            if f(lo) * f(hi) < 0:
                bb = brentq(f, lo, hi, xtol=1e-15, rtol=1e-15, maxiter=200)
                return construct_monotone(p, D, bb, sh)
            step *= 1.5
    raise ShootingError("could not align the jump with a cell midpoint")
