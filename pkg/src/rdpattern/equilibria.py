"""Homogeneous steady states, nullclines, parameter-regime checks and invariant rectangles."""
from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import brentq

from .kinetics import (
    BranchLabel,
    FullParams,
    ReducedParams,
    eval_reduced,
    jacobian_reduced,
    u_minus,
    u_on_branch,
    u_plus,
    v_r,
)

EIG_TOL = 1e-10
SCAN_POINTS = 10_000


class KineticStability(str, enum.Enum):
    STABLE = "stable"
    UNSTABLE = "unstable"
    MARGINAL = "marginal"


class PoleError(ZeroDivisionError):
    pass


@dataclass(frozen=True)
class HomogeneousState:
    u: float
    v: float
    branch: BranchLabel
    kinetic_stability: KineticStability
    eigenvalues: tuple

    @property
    def trace(self) -> float:
        return float(np.real(sum(self.eigenvalues)))

    @property
    def det(self) -> float:
        return float(np.real(self.eigenvalues[0] * self.eigenvalues[1]))


def classify(eigs, tol: float = EIG_TOL) -> KineticStability:
    re = max(float(np.real(e)) for e in eigs)
    if re > tol:
        return KineticStability.UNSTABLE
    if re < -tol:
        return KineticStability.STABLE
    return KineticStability.MARGINAL


def _make_state(p: ReducedParams, u: float, v: float, branch: BranchLabel) -> HomogeneousState:
    eigs = np.linalg.eigvals(jacobian_reduced(p, u, v))
    eigs = tuple(sorted((complex(e) for e in eigs), key=lambda z: (z.real, z.imag), reverse=True))
    return HomogeneousState(float(u), float(v), branch, classify(eigs), eigs)


def nullclines(p: ReducedParams, u: float) -> dict:
    """v-values of f_r = 0 (u != 0), g_r = 0, and of the f_r = g_r = 0 intersection curve."""
    if u < 0:
        raise ValueError("nullclines defined for u >= 0")
    sat = u / (1.0 + p.k * u * u)
    v_f0 = -1.0 + p.m1 * sat
    v_g0 = p.m2 * u * sat / (p.mu3 + u)
    ratio = p.m2 / p.m1
    den = p.mu3 + (1.0 - ratio) * u
    if abs(den) <= 1e-12 * (p.mu3 + abs(1.0 - ratio) * u):
        raise PoleError(f"v_fg has a pole at u = {u!r}")
    return {"v_f0": v_f0, "v_g0": v_g0, "v_fg": ratio * u / den}


def k0_intersections(p: ReducedParams) -> tuple[float, float] | None:
    """u-roots of f_r = g_r = 0 (u > 0) in the k -> 0 limit, from the intersection quadratic.

    Returns None if m1 >= m2 or the roots are not real.
    """
    if p.m2 <= p.m1:
        return None
    mid = (p.m1 * p.mu3 - 1.0) / (2.0 * (p.m2 - p.m1))
    disc = mid * mid - p.mu3 / (p.m2 - p.m1)
    if disc < 0:
        return None
    r = math.sqrt(disc)
    # product of roots is mu3/(m2-m1); avoids cancellation in the small root
    big = mid + r
    return p.mu3 / (p.m2 - p.m1) / big, big


def homogeneous_states(p: ReducedParams, npoints: int = SCAN_POINTS) -> list[HomogeneousState]:
    """All homogeneous steady states: the origin plus roots of g_r(u_branch(v), v) on (0, v_r)."""
    out = [_make_state(p, 0.0, 0.0, BranchLabel.NULL)]
    vr = v_r(p)
    if vr <= 0:
        return out
    vs = np.linspace(0.0, vr - 1e-9, npoints + 1)[1:]
    for label, fn in ((BranchLabel.MINUS, u_minus), (BranchLabel.PLUS, u_plus)):
        def g(v, fn=fn):
            return float(eval_reduced(p, fn(p, v), v)[1])

        vals = eval_reduced(p, fn(p, vs), vs)[1]
        for i in np.nonzero(np.sign(vals[:-1]) * np.sign(vals[1:]) <= 0)[0]:
            if vals[i] == 0.0:
                root = vs[i]
            elif vals[i + 1] == 0.0:
                continue
            else:
                root = brentq(g, vs[i], vs[i + 1], xtol=1e-14, rtol=4 * np.finfo(float).eps, maxiter=200)
            out.append(_make_state(p, float(fn(p, root)), root, label))
    out.sort(key=lambda s: (s.v, s.u))
    return out


def positive_states(p: ReducedParams) -> list[HomogeneousState]:
    return [s for s in homogeneous_states(p) if s.u > 0]


# --------------------------------------------------------------------------


@dataclass
class Hypothesis:
    holds: bool
    margin: float
    note: str = ""


@dataclass
class RegimeReport:
    hypotheses: dict = field(default_factory=dict)
    mu3_threshold: float = math.nan
    k_bound_closed_form: float = math.nan
    k1_star: float | None = None
    k2_star: float | None = None
    k_star_label: str = "empirical"

    @property
    def all_hold(self) -> bool:
        return all(h.holds for h in self.hypotheses.values())


def mu3_threshold(m1: float, m2: float) -> float:
    r = m2 / m1
    return (1.0 / m1) * ((2.0 * m2 - m1) / m1 + 2.0 * math.sqrt(max(r * r - r, 0.0)))


def _two_minus_states(p: ReducedParams) -> bool:
    pos = positive_states(p)
    return len(pos) == 2 and all(s.branch == BranchLabel.MINUS for s in pos)


def _kinetics_split(p: ReducedParams) -> bool:
    pos = positive_states(p)
    if len(pos) != 2:
        return False
    lo, hi = pos
    return lo.det < 0 and hi.trace < 0 and hi.det > 0


def empirical_k_threshold(p: ReducedParams, predicate, k_hi: float | None = None, iters: int = 40) -> float | None:
    """Largest k (found by bisection) below which ``predicate(p.replace(k=k))`` holds.

    Assumes the predicate holds for small k and fails beyond a single threshold,
    which is what the existence argument gives; returns None when no k in the
    search window satisfies it.
    """
    k_hi = k_hi if k_hi is not None else (p.m1 * p.m1 / 4.0)
    lo = None
    for k in np.geomspace(k_hi * 1e-6, k_hi, 25)[::-1]:
        if predicate(p.replace(k=float(k))):
            lo = float(k)
            break
    if lo is None:
        return None
    hi = k_hi * (1 - 1e-9)
    if predicate(p.replace(k=hi)):
        return hi
    for _ in range(iters):
        mid = math.sqrt(lo * hi)
        if predicate(p.replace(k=mid)):
            lo = mid
        else:
            hi = mid
    return lo


def regime_check(p: ReducedParams, search_k_star: bool = False) -> RegimeReport:
    """Signed margins of the coexistence hypotheses (positive margin = satisfied)."""
    rep = RegimeReport()
    h = rep.hypotheses
    h["m1<m2"] = Hypothesis(p.m1 < p.m2, p.m2 - p.m1)
    h["m1<sqrt(m2)"] = Hypothesis(p.m1 < math.sqrt(p.m2), math.sqrt(p.m2) - p.m1)
    if p.m1 < p.m2:
        thr = mu3_threshold(p.m1, p.m2)
        rep.mu3_threshold = thr
        h["mu3>threshold"] = Hypothesis(p.mu3 > thr, p.mu3 - thr)
        kb = min(((p.m2 - p.m1) / (p.m1 * p.mu3)) ** 2, p.m1 * p.m1 / 4.0)
    else:
        h["mu3>threshold"] = Hypothesis(False, -math.inf, "undefined: requires m1 < m2")
        kb = p.m1 * p.m1 / 4.0
    rep.k_bound_closed_form = kb
    h["k<closed_form_bound"] = Hypothesis(p.k < kb, kb - p.k)
    if search_k_star:
        rep.k1_star = empirical_k_threshold(p, _two_minus_states)
        rep.k2_star = empirical_k_threshold(p, _kinetics_split)
        for name, ks in (("k<k1*", rep.k1_star), ("k<k2*", rep.k2_star)):
            if ks is None:
                h[name] = Hypothesis(False, -math.inf, "empirical: no admissible k found")
            else:
                h[name] = Hypothesis(p.k < ks, ks - p.k, "empirical")
    return rep


# --------------------------------------------------------------------------


@dataclass(frozen=True)
class InvariantRectangle:
    """Box [0, hi] per component; ``decay`` marks the regime where everything tends to 0."""

    highs: tuple
    names: tuple
    decay: bool = False

    def contains(self, y: np.ndarray) -> bool:
        y = np.asarray(y)
        if np.any(y < 0):
            return False
        if self.decay:
            return True
        return all(np.all(y[i] <= hi) for i, hi in enumerate(self.highs))

    def sup_bound(self) -> float:
        return max(self.highs) if self.highs else math.inf

    def __getattr__(self, name):
        names = object.__getattribute__(self, "names")
        if name.endswith("_hi") and name[:-3] in names:
            return object.__getattribute__(self, "highs")[names.index(name[:-3])]
        raise AttributeError(name)


def invariant_rectangle(p) -> InvariantRectangle:
    """Closed-form attracting invariant rectangle.

    In the decay regime (m1 < 2 sqrt(k), resp. theta1 < 2 nu1 sqrt(kappa)) the
    u-bound is not defined by the formula; the returned rectangle is flagged
    ``decay=True`` and carries the still-valid v (and u2) bounds with an
    infinite u bound.
    """
    if isinstance(p, ReducedParams):
        v_hi = p.m2 / (p.k * p.mu3)
        disc = p.m1 * p.m1 - 4.0 * p.k
        if disc < 0:
            return InvariantRectangle((math.inf, v_hi), ("u", "v"), decay=True)
        return InvariantRectangle(((p.m1 + math.sqrt(disc)) / (2.0 * p.k), v_hi), ("u", "v"))
    if isinstance(p, FullParams):
        mn = min(p.nu1, p.nu2)
        u2_hi = p.theta1 / (p.kappa * p.delta * mn)
        v_hi = (p.theta2 + p.alpha * p.theta1 / (p.delta * mn)) / (p.nu3 * p.kappa)
        half = p.theta1 / (2.0 * p.nu1)
        disc = half * half - p.kappa
        if disc < 0:
            return InvariantRectangle((math.inf, u2_hi, v_hi), ("u1", "u2", "v"), decay=True)
        return InvariantRectangle(((half + math.sqrt(disc)) / p.kappa, u2_hi, v_hi), ("u1", "u2", "v"))
    raise TypeError(f"unsupported parameter type {type(p).__name__}")


def dg_minus_dv(p: ReducedParams, v):
    """d/dv g_r(u_-(v), v) via the implicit-function identity det B / b11."""
    u = u_minus(p, v)
    b = jacobian_reduced(p, u, v)
    return np.linalg.det(b) / b[..., 0, 0]


def dg_minus_dv_limit(p: ReducedParams, v):
    """k -> 0 limit of d/dv g_r(u_-(v), v): affine in v."""
    return 1.0 / p.m1 - p.mu3 + 2.0 * (p.m2 - p.m1) * (1.0 + np.asarray(v)) / p.m1**2


def state_on_branch(p: ReducedParams, label: BranchLabel, v: float) -> HomogeneousState:
    return _make_state(p, float(u_on_branch(p, label, v)), v, label)
