"""Non-kernel statistical distances: exact 1-Wasserstein and phi-divergences."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional

import numpy as np
from scipy.optimize import linprog

from .core import DiscreteSupport, ValidationError, CapabilityError

__all__ = [
    "DiscreteDist",
    "PhiFamily",
    "CHI2_NEYMAN",
    "KL",
    "w1",
    "phi_divergence",
]

# DiscreteDist is structurally the same as the core sampling type; reuse it.
DiscreteDist = DiscreteSupport

_MAX_SUPPORT = 512


@dataclass(frozen=True)
class PhiFamily:
    """Convex phi with phi(1) = 0 and its conjugate, for divergence balls.

    `phi` maps the likelihood ratio t >= 0 to the divergence integrand;
    `conjugate` is phi*(s) = sup_t {s t - phi(t)}; `conjugate_argmax` returns
    the maximizing t (used for primal recovery in the dual oracle).
    """

    name: str
    phi: Callable[[float], float]
    conjugate: Callable[[float], float]
    conjugate_argmax: Optional[Callable[[float], float]] = None


def _chi2_neyman_phi(t: float) -> float:
    # Neyman orientation: integrand (t-1)^2 / t
    if t < 0:
        raise ValidationError("likelihood ratio must be nonnegative")
    if t == 0.0:
        return math.inf
    return (t - 1.0) ** 2 / t


def _chi2_neyman_conj(s: float) -> float:
    # sup_t { s t - (t-1)^2/t } = 2 - 2 sqrt(1 - s) for s <= 1, +inf above
    if s > 1.0:
        return math.inf
    return 2.0 - 2.0 * math.sqrt(1.0 - s)


def _chi2_neyman_conj_argmax(s: float) -> float:
    if s >= 1.0:
        return math.inf
    return 1.0 / math.sqrt(1.0 - s)


def _kl_phi(t: float) -> float:
    if t < 0:
        raise ValidationError("likelihood ratio must be nonnegative")
    if t == 0.0:
        return 1.0
    return t * math.log(t) - t + 1.0


def _kl_conj(s: float) -> float:
    return math.exp(s) - 1.0


CHI2_NEYMAN = PhiFamily(
    name="chi2-neyman",
    phi=_chi2_neyman_phi,
    conjugate=_chi2_neyman_conj,
    conjugate_argmax=_chi2_neyman_conj_argmax,
)

KL = PhiFamily(name="kl", phi=_kl_phi, conjugate=_kl_conj, conjugate_argmax=math.exp)


def _w1_sorted_1d(P: DiscreteDist, Q: DiscreteDist) -> float:
    """Quantile coupling for d = 1: integral of |F_P^-1 - F_Q^-1|."""
    xp = P.points[:, 0]
    xq = Q.points[:, 0]
    op, oq = np.argsort(xp, kind="stable"), np.argsort(xq, kind="stable")
    xp, pp = xp[op], P.probs[op]
    xq, pq = xq[oq], Q.probs[oq]
    total = 0.0
    i = j = 0
    rp, rq = pp[0], pq[0]
    while i < len(xp) and j < len(xq):
        step = min(rp, rq)
        total += step * abs(xp[i] - xq[j])
        rp -= step
        rq -= step
        if rp <= 1e-15:
            i += 1
            rp = pp[i] if i < len(xp) else 0.0
        if rq <= 1e-15:
            j += 1
            rq = pq[j] if j < len(xq) else 0.0
    return total


def _w1_lp(P: DiscreteDist, Q: DiscreteDist) -> float:
    """Exact transport LP with Euclidean ground cost."""
    mp, mq = P.m, Q.m
    cost = np.linalg.norm(P.points[:, None, :] - Q.points[None, :, :], axis=2)
    # marginal constraints: row sums = p, column sums = q
    A_eq = np.zeros((mp + mq, mp * mq))
    for i in range(mp):
        A_eq[i, i * mq : (i + 1) * mq] = 1.0
    for j in range(mq):
        A_eq[mp + j, j::mq] = 1.0
    b_eq = np.concatenate([P.probs, Q.probs])
    res = linprog(cost.ravel(), A_eq=A_eq[:-1], b_eq=b_eq[:-1], bounds=(0, None), method="highs")
    if not res.success:
        raise RuntimeError(f"transport LP failed: {res.message}")
    return float(res.fun)


def w1(P: DiscreteDist, Q: DiscreteDist) -> float:
    """1-Wasserstein distance between discrete distributions, solved exactly."""
    if P.d != Q.d:
        raise ValidationError("dimension mismatch")
    if P.m > _MAX_SUPPORT or Q.m > _MAX_SUPPORT:
        raise CapabilityError(f"exact solver limited to {_MAX_SUPPORT} support points")
    if P.d == 1:
        return _w1_sorted_1d(P, Q)
    return _w1_lp(P, Q)


def phi_divergence(family: PhiFamily, Q: DiscreteDist, P: DiscreteDist) -> float:
    """D_phi(Q || P) = sum_i p_i phi(q_i / p_i) on a shared support.

    Convention: a term with q_i = p_i = 0 contributes 0; q_i > 0 where
    p_i = 0 violates absolute continuity and is an error.
    """
    if Q.m != P.m or not np.array_equal(Q.points, P.points):
        raise ValidationError("divergence requires a shared support")
    total = 0.0
    for qi, pi in zip(Q.probs, P.probs):
        if pi == 0.0:
            if qi > 0.0:
                raise ValidationError("Q is not absolutely continuous w.r.t. P")
            continue
        val = family.phi(qi / pi)
        if math.isinf(val):
            return math.inf
        total += pi * val
    return total
