"""Pointwise linear-stability conditions for patterns and a dense spectral oracle.

Conditions are evaluated node by node on a :class:`JacobianField`; at a jump
the Jacobian is taken one-sided from each adjacent segment. Every condition
reports a margin, the minimum slack over the field, with ``margin > 0``
exactly when it holds.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

from .equilibria import HomogeneousState
from .kinetics import (
    BranchLabel,
    FullParams,
    ReducedParams,
    delta_scaled,
    full_state_from_reduced,
    jacobian_full,
    jacobian_reduced,
    qss_jacobian,
    reduce_params,
    u_on_branch,
)
from .solver import Grid, neumann_laplacian

DENSE_MAX_N = 1024


class ReductionMismatch(ValueError):
    pass


class GridTooLarge(ValueError):
    pass


@dataclass
class JacobianField:
    """One Jacobian per sample point; ``mats`` has shape (N, m, m)."""

    x: np.ndarray
    mats: np.ndarray

    def __post_init__(self):
        self.x = np.asarray(self.x, dtype=float)
        self.mats = np.asarray(self.mats, dtype=float)
        if self.mats.ndim != 3 or self.mats.shape[1] != self.mats.shape[2] or len(self.x) != len(self.mats):
            raise ValueError("mats must have shape (len(x), m, m)")
        if len(self.x) == 0:
            raise ValueError("empty Jacobian field")
        if not np.all(np.isfinite(self.mats)):
            raise ValueError("non-finite Jacobian entries")

    @property
    def dim(self) -> int:
        return self.mats.shape[1]

    @classmethod
    def constant(cls, mat, n: int = 1) -> "JacobianField":
        mat = np.asarray(mat, dtype=float)
        return cls(np.linspace(0.0, 1.0, n), np.broadcast_to(mat, (n,) + mat.shape).copy())


@dataclass
class Verdict:
    holds: bool
    margin: float
    witness_x: float


@dataclass
class StabilityReport:
    conditions: dict = field(default_factory=dict)
    constants: dict = field(default_factory=dict)

    @property
    def all_hold(self) -> bool:
        return all(v.holds for v in self.conditions.values())

    def add(self, name: str, slack: np.ndarray, x: np.ndarray) -> None:
        i = int(np.argmin(slack))
        m = float(slack[i])
        self.conditions[name] = Verdict(m > 0, m, float(x[i]))

    def merge(self, other: "StabilityReport", prefix: str = "") -> None:
        for k, v in other.conditions.items():
            self.conditions[prefix + k] = v
        for k, v in other.constants.items():
            self.constants[prefix + k] = v

    def rows(self) -> list:
        return [(k, v.holds, v.margin, v.witness_x) for k, v in self.conditions.items()]


# --------------------------------------------------------------------------
# Jacobian fields along patterns


def pattern_samples(pattern, n: int):
    """Node samples (x, u, v) of a pattern plus both one-sided values at each jump.

    A nodal triple (x, u, v) is passed through unchanged.
    """
    if isinstance(pattern, tuple):
        return tuple(np.asarray(a, dtype=float) for a in pattern)
    x, u, v, _ = pattern.sample(n)
    xs, us, vs = [x], [u], [v]
    for seg in pattern.segments:
        for X in (seg.x_start, seg.x_end):
            vj = float(seg.descriptor.v(X))
            xs.append(np.array([X / pattern.scale]))
            vs.append(np.array([vj]))
            us.append(np.array([float(u_on_branch(pattern.params, seg.branch, vj))]))
    return np.concatenate(xs), np.concatenate(us), np.concatenate(vs)


def reduced_field(pattern, n: int = 1024, p: ReducedParams | None = None) -> JacobianField:
    x, u, v = pattern_samples(pattern, n)
    return JacobianField(x, jacobian_reduced(p or pattern.params, u, v))


def full_field(pf: FullParams, pattern, n: int = 1024) -> JacobianField:
    """Full-model Jacobian (delta = 1) along a reduced pattern lifted to the slow manifold."""
    x, u, v = pattern_samples(pattern, n)
    u1, u2, vf = full_state_from_reduced(pf, u, v)
    return JacobianField(x, jacobian_full(pf, u1, u2, vf))


# --------------------------------------------------------------------------
# two-component conditions


def check_thm22(jf: JacobianField) -> StabilityReport:
    """b11 <= -c1, b22 <= -c1 and det B > 0 at every point; c1 is the largest admissible constant."""
    if jf.dim != 2:
        raise ValueError("two-component field required")
    b = jf.mats
    rep = StabilityReport()
    rep.add("b11_negative", -b[:, 0, 0], jf.x)
    rep.add("b22_negative", -b[:, 1, 1], jf.x)
    rep.add("det_positive", np.linalg.det(b), jf.x)
    rep.constants["c1"] = float(min(np.min(-b[:, 0, 0]), np.min(-b[:, 1, 1])))
    return rep


# --------------------------------------------------------------------------
# three-component conditions


def _minors(a: np.ndarray):
    """Principal 2x2 minors A_jj (row/col j removed), stacked along axis 1."""
    idx = [(1, 2), (0, 2), (0, 1)]
    return np.stack([a[:, i][:, :, i] for i in idx], axis=1)


def kappa_max(a: np.ndarray) -> np.ndarray:
    """Largest kappa with a33 <= -3 kappa and det A33 >= -3 kappa tr A33 >= 18 kappa^2, pointwise."""
    a33m = _minors(a)[:, 2]
    tr33 = np.trace(a33m, axis1=1, axis2=2)
    det33 = np.linalg.det(a33m)
    with np.errstate(divide="ignore", invalid="ignore"):
        by_det = np.where(tr33 < 0, det33 / (-3.0 * tr33), -np.inf)
    return np.minimum(np.minimum(-a[:, 2, 2] / 3.0, by_det), -tr33 / 6.0)


def check_thm23(jf: JacobianField) -> StabilityReport:
    """Routh-Hurwitz type conditions on a 3x3 field plus the kappa bounds on the (u1, u2) minor."""
    if jf.dim != 3:
        raise ValueError("three-component field required")
    a = jf.mats
    x = jf.x
    tr = np.trace(a, axis1=1, axis2=2)
    det = np.linalg.det(a)
    mins = _minors(a)
    dets = np.linalg.det(mins)
    sig = dets.sum(axis=1)
    det33 = dets[:, 2]
    tr33 = np.trace(mins[:, 2], axis1=1, axis2=2)
    rep = StabilityReport()
    rep.add("trace_negative", -tr, x)
    rep.add("hurwitz_product", det - tr * sig, x)
    rep.add("det_negative", -det, x)
    slack = det + tr * det33 - tr33 * sig
    # non-strict inequality: report zero slack as holding
    rep.add("minor_trace_bound", np.where(slack >= 0, np.maximum(slack, np.finfo(float).tiny), slack), x)
    rep.add("minor_det_positive", 3.0 * det33, x)
    slack = tr * tr33 + sig - 3.0 * det33
    rep.add("minor_det_bound", np.where(slack >= 0, np.maximum(slack, np.finfo(float).tiny), slack), x)
    km = kappa_max(a)
    rep.add("kappa_positive", km, x)
    rep.constants["stab_kappa"] = float(np.min(km))
    return rep


def _thm23_holds(a: np.ndarray) -> bool:
    return check_thm23(JacobianField(np.zeros(len(a)), a)).all_hold


def delta_star(a: np.ndarray, delta_max: float = 1.0, delta_min: float = 1e-10, iters: int = 60) -> float:
    """Largest delta in (0, delta_max] such that the scaled field A^delta passes check_thm23.

    Bisection in log(delta), assuming the admissible set is an interval at 0.
    Returns 0.0 if even ``delta_min`` fails.
    """
    if _thm23_holds(delta_scaled(a, delta_max)):
        return delta_max
    if not _thm23_holds(delta_scaled(a, delta_min)):
        return 0.0
    lo, hi = math.log(delta_min), math.log(delta_max)
    for _ in range(iters):
        mid = 0.5 * (lo + hi)
        if _thm23_holds(delta_scaled(a, math.exp(mid))):
            lo = mid
        else:
            hi = mid
    return math.exp(lo)


def check_cor24(jf: JacobianField, delta: float | None = None) -> StabilityReport:
    """Fast-variable conditions on A (delta = 1) plus an empirical delta* from check_thm23 on A^delta.

    If ``delta`` is given, the report also states whether that delta lies below delta*.
    """
    if jf.dim != 3:
        raise ValueError("three-component field required")
    a = jf.mats
    x = jf.x
    mins = _minors(a)
    dets = np.linalg.det(mins)
    a22 = a[:, 1, 1]
    rep = StabilityReport()
    rep.add("a22_negative", -a22, x)
    rep.add("a33_negative", -a[:, 2, 2], x)
    rep.add("detA11_positive", dets[:, 0], x)
    with np.errstate(divide="ignore", invalid="ignore"):
        k3 = np.where(a22 < 0, dets[:, 2] / -a22, -np.inf)
    rep.add("detA33_dominates", k3, x)
    rep.add("det_negative", -np.linalg.det(a), x)
    rep.constants["k1"] = float(np.min(-a22))
    rep.constants["k2"] = float(np.min(-a[:, 2, 2]))
    rep.constants["k3"] = float(np.min(k3))
    ds = delta_star(a)
    rep.constants["delta_star"] = ds
    if delta is not None:
        rep.conditions["delta_below_star"] = Verdict(delta < ds or ds == 1.0 and delta <= 1.0,
                                                     ds - delta if ds < 1.0 else 1.0, math.nan)
        rep.conditions["scaled_thm23"] = Verdict(
            *(lambda r: (r.all_hold, min(v.margin for v in r.conditions.values()), math.nan))(
                check_thm23(JacobianField(x, delta_scaled(a, delta)))))
    return rep


# --------------------------------------------------------------------------
# dispersion relation


@dataclass
class DDIResult:
    kinetically_stable: bool
    ddi: bool
    unstable_modes: list
    rightmost: complex
    n_max: int
    tail_unstable: bool


def mode_cutoff(b: np.ndarray, D: float, l: float = 1.0) -> int:
    return int(math.ceil(math.sqrt(np.linalg.norm(b, 2) / (D * (math.pi / l) ** 2)))) + 10


def ddi_check(p: ReducedParams, h: HomogeneousState, l: float = 1.0, D: float | None = None) -> DDIResult:
    """Mode scan of B - diag(0, D mu_n), mu_n = (n pi / l)^2, for n = 0..n_max.

    ``tail_unstable`` flags b11 > 0, for which every mode beyond the cutoff
    is unstable as well (the symbol tends to b11).
    """
    D = p.D if D is None else D
    b = jacobian_reduced(p, h.u, h.v)
    ev0 = np.linalg.eigvals(b)
    stable = bool(np.max(ev0.real) < 0)
    if D == 0:
        right = complex(ev0[np.argmax(ev0.real)])
        return DDIResult(stable, False, [], right, 0, False)
    nmax = mode_cutoff(b, D, l)
    unstable = []
    right = complex(-np.inf)
    for n in range(nmax + 1):
        mu = (n * math.pi / l) ** 2
        ev = np.linalg.eigvals(b - np.diag([0.0, D * mu]))
        e = complex(ev[np.argmax(ev.real)])
        if e.real > right.real:
            right = e
        if e.real > 0 and n >= 1:
            unstable.append(n)
    return DDIResult(stable, stable and bool(unstable), unstable, right, nmax, bool(b[0, 0] > 0))


# --------------------------------------------------------------------------
# discrete spectrum


@dataclass
class SpectrumReport:
    eigenvalues: np.ndarray
    n: int
    D: float
    delta: float | None = None

    @property
    def rightmost(self) -> complex:
        return complex(self.eigenvalues[0])


def _node_jacobians(p, target, grid: Grid) -> np.ndarray:
    x = grid.x
    if isinstance(target, HomogeneousState):
        u = np.full_like(x, target.u)
        v = np.full_like(x, target.v)
    elif hasattr(target, "segments"):
        u, v = target.u(x), target.v(x)
    else:
        u, v = target
    if isinstance(p, ReducedParams):
        return jacobian_reduced(p, u, v)
    u1, u2, vf = full_state_from_reduced(p, u, v)
    return delta_scaled(jacobian_full(p, u1, u2, vf), p.delta)


def linearization(p, target, D: float, grid: Grid) -> np.ndarray:
    """Dense matrix of the linearised operator; diffusion acts on the last component only."""
    jac = _node_jacobians(p, target, grid)
    m = jac.shape[1]
    N = grid.n + 1
    M = np.zeros((m * N, m * N))
    idx = np.arange(N)
    for i in range(m):
        for j in range(m):
            M[i * N + idx, j * N + idx] = jac[:, i, j]
    M[(m - 1) * N:, (m - 1) * N:] += D * neumann_laplacian(grid).toarray()
    return M


def discrete_spectrum(p, target, D: float | None, grid: Grid) -> SpectrumReport:
    """All eigenvalues of the FD linearisation around ``target`` sorted by decreasing real part.

    ``target`` is a HomogeneousState, a PiecewisePattern, or a pair of nodal
    arrays (u, v) in reduced variables. For FullParams the state is lifted to
    the slow manifold and the fast row is divided by delta.
    """
    if grid.n > DENSE_MAX_N:
        raise GridTooLarge(f"n = {grid.n} exceeds dense eigensolve cap {DENSE_MAX_N}")
    if D is None:
        D = p.D if isinstance(p, ReducedParams) else p.gamma
    ev = np.linalg.eigvals(linearization(p, target, D, grid))
    ev = ev[np.lexsort((-ev.imag, -ev.real))]
    return SpectrumReport(ev, grid.n, D, getattr(p, "delta", None) if isinstance(p, FullParams) else None)


# --------------------------------------------------------------------------
# delta tracking


@dataclass
class DeltaTrack:
    delta: float
    eigenvalues: np.ndarray
    paired: np.ndarray
    gap: float
    diverging: complex
    scaled_remainder: float


def delta_eigen_track(p: FullParams, state, deltas) -> list[DeltaTrack]:
    """Eigenvalues of A^delta at a homogeneous full-model state (u1, u2, v).

    Two eigenvalues are matched to sigma(B) (the reduced Jacobian in full
    units) by minimum total distance; the remaining one is the diverging
    root, reported with ``|lambda_3 - a22/delta| delta^(2/3)``.
    """
    u1, u2, v = (float(s) for s in state)
    a = jacobian_full(p, u1, u2, v)
    if not a[1, 1] < 0:
        raise ValueError("a22 must be negative")
    sb = np.linalg.eigvals(qss_jacobian(p, u1, v))
    out = []
    for d in deltas:
        ev = np.linalg.eigvals(delta_scaled(a, d))
        best = None
        for k in range(3):
            rest = np.delete(ev, k)
            for perm in (rest, rest[::-1]):
                cost = np.abs(perm - sb).max()
                if best is None or cost < best[0]:
                    best = (cost, perm, ev[k])
        gap, paired, lam3 = best
        out.append(DeltaTrack(d, ev, paired, float(gap), complex(lam3),
                              float(abs(lam3 - a[1, 1] / d) * d ** (2.0 / 3.0))))
    return out


# --------------------------------------------------------------------------
# stability transfer


def _reduced_matches(pr: ReducedParams, pf: FullParams, rtol: float = 1e-10) -> None:
    red, _ = reduce_params(pf)
    for key in ("m1", "m2", "k", "mu3", "D"):
        a, b = getattr(pr, key), getattr(red, key)
        if not math.isclose(a, b, rel_tol=rtol):
            raise ReductionMismatch(f"{key}: reduced {a!r} but full parameters map to {b!r}")


def transfer_check(pr: ReducedParams, pf: FullParams, pattern, n: int = 1024) -> StabilityReport:
    """Hypotheses of the stability-transfer statement along a pattern.

    (1) two-component conditions on the reduced Jacobian field,
    (3) a22, a33 <= -c along the lifted state,
    plus the fast-variable conditions and empirical delta* on the full field.
    """
    _reduced_matches(pr, pf)
    rep = StabilityReport()
    rep.merge(check_thm22(reduced_field(pattern, n, pr)), "reduced.")
    ff = full_field(pf, pattern, n)
    a = ff.mats
    rep.add("a22_a33_negative", np.minimum(-a[:, 1, 1], -a[:, 2, 2]), ff.x)
    rep.constants["c"] = rep.conditions["a22_a33_negative"].margin
    cor = check_cor24(ff, pf.delta)
    rep.merge(cor, "full.")
    return rep


def with_minus_segment(pattern, frac: float = 0.5, width: float = 0.05):
    """Copy of a pattern's nodal samples with u switched to the Minus branch on a window.

    Returns a nodal (x, u, v) triple; used to show that Minus pieces break the conditions.
    """
    x, u, v, br = pattern.sample(1024)
    m = np.abs(x - frac) < width / 2
    from .kinetics import u_minus

    um = u_minus(pattern.params, v[m])
    u = u.copy()
    u[m] = np.where(np.isnan(um), u[m], um)
    return x, u, v


def nodal_field(p: ReducedParams, x, u, v) -> JacobianField:
    return JacobianField(x, jacobian_reduced(p, u, v))
