"""Kinetics of the receptor-ligand model and its quasi-steady-state reduction.

Reduced model (rescaled, two components)::

    u_t = f_r(u, v) = -u - u v + m1 u^2 / (1 + k u^2)
    v_t = D v_xx + g_r(u, v),   g_r = -mu3 v - u v + m2 u^2 / (1 + k u^2)

Full model (three components, original time t_hat)::

    u1_t        = -nu1 u1 - beta u1 v + theta1 u1^2/(1+kappa u1^2) + alpha u2
    delta u2_t  = -nu2 u2 + beta u1 v - alpha u2
    v_t         = gamma v_xx - nu3 v - beta u1 v + theta2 u1^2/(1+kappa u1^2) + alpha u2

All functions accept scalars or numpy arrays.
"""
from __future__ import annotations

import enum
import math
from dataclasses import asdict, dataclass, fields

import numpy as np

# distance from v_r below which both nontrivial branches collapse to the double root
BRANCH_MERGE_TOL = 1e-12


class BranchLabel(str, enum.Enum):
    NULL = "null"
    MINUS = "minus"
    PLUS = "plus"


def _check_positive(obj) -> None:
    for f in fields(obj):
        val = getattr(obj, f.name)
        if not (math.isfinite(val) and val > 0):
            raise ValueError(f"{type(obj).__name__}.{f.name} must be positive and finite, got {val!r}")


@dataclass(frozen=True)
class ReducedParams:
    m1: float
    m2: float
    k: float
    mu3: float
    D: float = 1.0

    def __post_init__(self):
        _check_positive(self)

    def replace(self, **kw) -> "ReducedParams":
        return ReducedParams(**{**asdict(self), **kw})


@dataclass(frozen=True)
class FullParams:
    nu1: float
    nu2: float
    nu3: float
    alpha: float
    beta: float
    gamma: float
    theta1: float
    theta2: float
    kappa: float
    delta: float = 1.0

    def __post_init__(self):
        _check_positive(self)

    def replace(self, **kw) -> "FullParams":
        return FullParams(**{**asdict(self), **kw})

    @property
    def beta_eff(self) -> float:
        """Effective binding rate beta*nu2/(nu2+alpha) seen after eliminating u2."""
        return self.beta * self.nu2 / (self.nu2 + self.alpha)


@dataclass(frozen=True)
class Scaling:
    """Linear map between full-model and reduced-model variables.

    ``u = c_u * u1``, ``v_reduced = c_v * v_full``, ``t = c_t * t_hat``.
    """

    c_u: float
    c_v: float
    c_t: float


# --------------------------------------------------------------------------
# reduced model


def _sat(k, u):
    return u * u / (1.0 + k * u * u)


def eval_reduced(p: ReducedParams, u, v):
    s = _sat(p.k, u)
    f = -u - u * v + p.m1 * s
    g = -p.mu3 * v - u * v + p.m2 * s
    return f, g


def jacobian_reduced(p: ReducedParams, u, v) -> np.ndarray:
    """Analytic Jacobian ``[[df/du, df/dv], [dg/du, dg/dv]]``.

    For array input the result has shape ``u.shape + (2, 2)``.
    """
    u = np.asarray(u, dtype=float)
    v = np.asarray(v, dtype=float)
    u, v = np.broadcast_arrays(u, v)
    ds = 2.0 * u / (1.0 + p.k * u * u) ** 2
    out = np.empty(u.shape + (2, 2))
    out[..., 0, 0] = -(1.0 + v) + p.m1 * ds
    out[..., 0, 1] = -u
    out[..., 1, 0] = -v + p.m2 * ds
    out[..., 1, 1] = -(p.mu3 + u)
    return out


def v_r(p: ReducedParams) -> float:
    """Largest v for which the nontrivial branches u_+- are real."""
    return p.m1 / (2.0 * math.sqrt(p.k)) - 1.0


@dataclass(frozen=True)
class Branches:
    u0: float
    u_minus: float | None
    u_plus: float | None


def _branch_pair(p: ReducedParams, v):
    """Vectorised (u_minus, u_plus); NaN where v >= v_r."""
    v = np.asarray(v, dtype=float)
    one_v = 1.0 + v
    disc = p.m1 * p.m1 - 4.0 * p.k * one_v * one_v
    vr = v_r(p)
    near = np.abs(v - vr) <= BRANCH_MERGE_TOL * max(1.0, abs(vr))
    disc = np.where(near, 0.0, disc)
    with np.errstate(invalid="ignore"):
        sq = np.sqrt(disc)
    u_plus = (p.m1 + sq) / (2.0 * p.k * one_v)
    # u_- from u_+ u_- = 1/k, free of cancellation
    u_minus = 2.0 * one_v / (p.m1 + sq)
    bad = disc < 0
    u_plus = np.where(bad, np.nan, u_plus)
    u_minus = np.where(bad, np.nan, u_minus)
    return u_minus, u_plus


def branches(p: ReducedParams, v: float) -> Branches:
    if v < 0:
        raise ValueError("branches defined for v >= 0")
    um, up = _branch_pair(p, v)
    um, up = float(um), float(up)
    if math.isnan(up):
        return Branches(0.0, None, None)
    return Branches(0.0, um, up)


def u_plus(p: ReducedParams, v):
    return _branch_pair(p, v)[1]


def u_minus(p: ReducedParams, v):
    return _branch_pair(p, v)[0]


def u_on_branch(p: ReducedParams, label: BranchLabel, v):
    if label == BranchLabel.NULL:
        return np.zeros_like(np.asarray(v, dtype=float))
    if label == BranchLabel.PLUS:
        return u_plus(p, v)
    return u_minus(p, v)


# --------------------------------------------------------------------------
# full model


def eval_full(p: FullParams, u1, u2, v):
    """Kinetic right-hand sides of the full model at delta = 1 (no diffusion)."""
    prod = _sat(p.kappa, u1)
    bind = p.beta * u1 * v
    f1 = -p.nu1 * u1 - bind + p.theta1 * prod + p.alpha * u2
    f2 = -p.nu2 * u2 + bind - p.alpha * u2
    g = -p.nu3 * v - bind + p.theta2 * prod + p.alpha * u2
    return f1, f2, g


def jacobian_full(p: FullParams, u1, u2, v) -> np.ndarray:
    """Analytic 3x3 Jacobian of :func:`eval_full` in (u1, u2, v).

    ``a22 = -(nu2 + alpha)`` is the delta = 1 value; the fast equation's
    Jacobian row is divided by delta separately (see ``delta_scaled``).
    """
    u1 = np.asarray(u1, dtype=float)
    u2 = np.asarray(u2, dtype=float)
    v = np.asarray(v, dtype=float)
    u1, u2, v = np.broadcast_arrays(u1, u2, v)
    ds = 2.0 * u1 / (1.0 + p.kappa * u1 * u1) ** 2
    a = np.zeros(u1.shape + (3, 3))
    a[..., 0, 0] = -p.nu1 - p.beta * v + p.theta1 * ds
    a[..., 0, 1] = p.alpha
    a[..., 0, 2] = -p.beta * u1
    a[..., 1, 0] = p.beta * v
    a[..., 1, 1] = -(p.nu2 + p.alpha)
    a[..., 1, 2] = p.beta * u1
    a[..., 2, 0] = -p.beta * v + p.theta2 * ds
    a[..., 2, 1] = p.alpha
    a[..., 2, 2] = -p.nu3 - p.beta * u1
    return a


def delta_scaled(a: np.ndarray, delta: float) -> np.ndarray:
    """A^delta: the fast (second) row divided by delta."""
    out = np.array(a, dtype=float, copy=True)
    out[..., 1, :] /= delta
    return out


def qss_u2(p: FullParams, u1, v):
    """Root of f2 = 0 in u2."""
    return p.beta * u1 * v / (p.nu2 + p.alpha)


def qss_jacobian(p: FullParams, u1, v) -> np.ndarray:
    """Jacobian of the quasi-steady-state reduced kinetics in full-model units."""
    u1 = np.asarray(u1, dtype=float)
    v = np.asarray(v, dtype=float)
    u1, v = np.broadcast_arrays(u1, v)
    be = p.beta_eff
    ds = 2.0 * u1 / (1.0 + p.kappa * u1 * u1) ** 2
    b = np.empty(u1.shape + (2, 2))
    b[..., 0, 0] = -p.nu1 - be * v + p.theta1 * ds
    b[..., 0, 1] = -be * u1
    b[..., 1, 0] = -be * v + p.theta2 * ds
    b[..., 1, 1] = -p.nu3 - be * u1
    return b


def reduce_params(p: FullParams) -> tuple[ReducedParams, Scaling]:
    """Map full-model parameters onto the rescaled reduced model.

    With ``beta_eff = beta nu2/(nu2+alpha)`` and ``c = beta_eff/nu1``::

        t = nu1 t_hat,  u = c u1,  v = c v_full
        m1 = theta1/beta_eff, m2 = theta2/beta_eff, mu3 = nu3/nu1,
        D = gamma/nu1, k = kappa/c^2
    """
    be = p.beta_eff
    c = be / p.nu1
    red = ReducedParams(
        m1=p.theta1 / be,
        m2=p.theta2 / be,
        k=p.kappa / (c * c),
        mu3=p.nu3 / p.nu1,
        D=p.gamma / p.nu1,
    )
    return red, Scaling(c_u=c, c_v=c, c_t=p.nu1)


def full_state_from_reduced(p: FullParams, u, v):
    """Lift a reduced state (u, v) to (u1, u2*, v_full) on the slow manifold."""
    _, sc = reduce_params(p)
    u1 = np.asarray(u, dtype=float) / sc.c_u
    vf = np.asarray(v, dtype=float) / sc.c_v
    return u1, qss_u2(p, u1, vf), vf


# --------------------------------------------------------------------------
# flat key = value serialisation

REDUCED_KEYS = ("m1", "m2", "k", "mu3", "D")
FULL_KEYS = ("nu1", "nu2", "nu3", "alpha", "beta", "gamma", "theta1", "theta2", "kappa", "delta")


def params_to_text(p: ReducedParams | FullParams) -> str:
    return "".join(f"{key} = {val!r}\n" for key, val in asdict(p).items())


def params_from_mapping(data: dict) -> ReducedParams | FullParams:
    keys = set(data)
    if keys == set(REDUCED_KEYS):
        return ReducedParams(**{k: float(data[k]) for k in REDUCED_KEYS})
    if keys == set(FULL_KEYS):
        return FullParams(**{k: float(data[k]) for k in FULL_KEYS})
    raise KeyError(f"parameter keys {sorted(keys)} match neither reduced {REDUCED_KEYS} nor full {FULL_KEYS}")
