"""Small convex-optimization engine shared by the worst-case oracles.

Contains a golden-section line search, an exact primal active-set solver for
simplex-constrained convex QPs (optionally with extra equality constraints),
and two helpers built on top of it: minimum mean norm over an MMD ball and
linear maximization over an MMD ball. Desk-scale problems only; exactness
over speed.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Optional, Tuple

import numpy as np
from scipy.optimize import linprog

__all__ = [
    "golden_section",
    "simplex_qp",
    "QpResult",
    "zero_mean_stage",
    "min_mean_sq_in_mmd_ball",
    "max_linear_in_mmd_ball",
]

_INVPHI = (math.sqrt(5.0) - 1.0) / 2.0


def golden_section(
    g: Callable[[float], float], lo: float, hi: float, tol: float = 1e-10
) -> Tuple[float, float]:
    """Minimize a convex (unimodal) function on [lo, hi] to interval width tol."""
    if lo > hi:
        raise ValueError("need lo <= hi")
    a, b = lo, hi
    c = b - _INVPHI * (b - a)
    d = a + _INVPHI * (b - a)
    gc, gd = g(c), g(d)
    while b - a > tol:
        if gc <= gd:
            b, d, gd = d, c, gc
            c = b - _INVPHI * (b - a)
            gc = g(c)
        else:
            a, c, gc = c, d, gd
            d = a + _INVPHI * (b - a)
            gd = g(d)
    x = 0.5 * (a + b)
    return x, g(x)


@dataclass
class QpResult:
    x: np.ndarray
    value: float
    iterations: int
    converged: bool


def _initial_feasible(m: int, A_eq: Optional[np.ndarray], b_eq: Optional[np.ndarray]):
    if A_eq is None:
        return np.full(m, 1.0 / m)
    A = np.vstack([np.ones((1, m)), A_eq])
    b = np.concatenate([[1.0], b_eq])
    res = linprog(np.zeros(m), A_eq=A, b_eq=b, bounds=(0, None), method="highs")
    if not res.success:
        return None
    return np.maximum(res.x, 0.0)


def simplex_qp(
    H: np.ndarray,
    c: np.ndarray,
    A_eq: Optional[np.ndarray] = None,
    b_eq: Optional[np.ndarray] = None,
    x0: Optional[np.ndarray] = None,
    tol: float = 1e-11,
    max_iter: Optional[int] = None,
) -> Optional[QpResult]:
    """min 0.5 x'Hx + c'x  s.t.  sum(x) = 1, A_eq x = b_eq, x >= 0.

    Primal active-set method for convex H; terminates finitely at machine
    precision on nondegenerate problems. Returns None when the constraint
    set is empty.
    """
    H = np.asarray(H, dtype=float)
    c = np.asarray(c, dtype=float)
    m = c.shape[0]
    E = np.ones((1, m)) if A_eq is None else np.vstack([np.ones((1, m)), A_eq])
    e = np.array([1.0]) if A_eq is None else np.concatenate([[1.0], np.asarray(b_eq, float)])
    k = E.shape[0]

    if x0 is not None and np.all(x0 >= -1e-14) and np.linalg.norm(E @ x0 - e) < 1e-9:
        x = np.maximum(np.asarray(x0, float), 0.0)
    else:
        x = _initial_feasible(m, A_eq, b_eq)
        if x is None:
            return None

    # tiny ridge keeps the KKT systems solvable on rank-deficient H
    ridge = 1e-13 * (np.trace(H) / m + 1.0)
    if max_iter is None:
        max_iter = 50 * (m + 1)

    active = x <= tol
    for it in range(1, max_iter + 1):
        free = ~active
        nf = int(free.sum())
        if nf == 0:
            active[np.argmax(x)] = False
            continue
        idx = np.where(free)[0]
        Hff = H[np.ix_(idx, idx)] + ridge * np.eye(nf)
        Ef = E[:, idx]
        M = np.zeros((nf + k, nf + k))
        M[:nf, :nf] = Hff
        M[:nf, nf:] = Ef.T
        M[nf:, :nf] = Ef
        rhs = np.concatenate([-c[idx], e])
        try:
            sol = np.linalg.solve(M, rhs)
        except np.linalg.LinAlgError:
            sol, *_ = np.linalg.lstsq(M, rhs, rcond=None)
        xt = np.zeros(m)
        xt[idx] = sol[:nf]
        nu = sol[nf:]

        step = xt - x
        if np.max(np.abs(step)) <= 1e-13 * (1.0 + np.max(np.abs(x))):
            # stationary on the working set; check bound multipliers
            grad = H @ x + c
            # stationarity solved Hff xf + Ef' nu = -cf, so the bound
            # multiplier at an active coordinate is grad_i + (E' nu)_i
            mu = grad + E.T @ nu
            viol = np.where(active)[0]
            if viol.size == 0 or np.min(mu[viol]) >= -1e-9 * (1.0 + np.max(np.abs(grad))):
                val = 0.5 * float(x @ H @ x) + float(c @ x)
                return QpResult(x=x, value=val, iterations=it, converged=True)
            active[viol[np.argmin(mu[viol])]] = False
            continue

        # ratio test toward the equality-constrained minimizer
        alpha = 1.0
        block = -1
        for i in idx:
            if step[i] < -1e-15:
                a_i = -x[i] / step[i]
                if a_i < alpha:
                    alpha, block = a_i, i
        x = np.maximum(x + alpha * step, 0.0)
        if block >= 0:
            x[block] = 0.0
            active[block] = True

    val = 0.5 * float(x @ H @ x) + float(c @ x)
    return QpResult(x=x, value=val, iterations=max_iter, converged=False)


def _mmd_sq(q: np.ndarray, K: np.ndarray, p: np.ndarray) -> float:
    r = q - p
    return float(r @ K @ r)


def zero_mean_stage(Z: np.ndarray, K: np.ndarray, p_hat: np.ndarray):
    """MMD-closest zero-mean reweighting of the support, or None.

    Returns (q0, mmd0) minimizing (q - p_hat)' K (q - p_hat) subject to
    Z'q = 0 on the simplex; None when no zero-mean reweighting exists. This
    is independent of the ball radius, so sweeps over eta compute it once.
    """
    d = Z.shape[1]
    res0 = simplex_qp(2.0 * K, -2.0 * (K @ p_hat), A_eq=Z.T, b_eq=np.zeros(d))
    if res0 is None or not res0.converged:
        return None
    return res0.x, math.sqrt(max(_mmd_sq(res0.x, K, p_hat), 0.0))


def min_mean_sq_in_mmd_ball(
    Z: np.ndarray,
    K: np.ndarray,
    p_hat: np.ndarray,
    eta: float,
    bisect_iters: int = 80,
    stage1="unset",
) -> Tuple[np.ndarray, float]:
    """Minimize ||Z'q||^2 over the simplex intersected with an MMD ball.

    Z is the m x d support matrix, K its Gram matrix, and the ball is
    {q : (q - p_hat)' K (q - p_hat) <= eta^2}. Returns (q, ||Z'q||^2).
    A precomputed zero_mean_stage result can be passed as stage1.
    """
    eta_sq = eta * eta
    if eta_sq <= 0.0:
        return p_hat.copy(), float(np.sum((Z.T @ p_hat) ** 2))

    # Stage 1: is a zero-mean reweighting inside the ball? If so the mean
    # norm is exactly 0 and the MMD-closest such q is the natural witness.
    if stage1 == "unset":
        stage1 = zero_mean_stage(Z, K, p_hat)
    if stage1 is not None:
        q0, mmd0 = stage1
        if mmd0 * mmd0 <= eta_sq * (1.0 + 1e-9) + 1e-15:
            return q0, float(np.sum((Z.T @ q0) ** 2))

    # Stage 2: trade mean norm against MMD via the ball multiplier.
    m = Z.shape[0]
    G = Z @ Z.T
    scale_g = np.trace(G) / m + 1e-30
    scale_k = np.trace(K) / m + 1e-30

    def solve(lam: float, warm: Optional[np.ndarray]) -> np.ndarray:
        res = simplex_qp(2.0 * (G + lam * K), -2.0 * lam * (K @ p_hat), x0=warm)
        return res.x

    lam_lo = 1e-10 * scale_g / scale_k
    q = solve(lam_lo, p_hat)
    if _mmd_sq(q, K, p_hat) <= eta_sq:
        return q, float(np.sum((Z.T @ q) ** 2))
    lam_hi = max(1.0, lam_lo) * 2.0
    q_hi = solve(lam_hi, q)
    guard = 0
    while _mmd_sq(q_hi, K, p_hat) > eta_sq and guard < 200:
        lam_hi *= 4.0
        q_hi = solve(lam_hi, q_hi)
        guard += 1
    best = q_hi
    for _ in range(bisect_iters):
        lam = math.sqrt(lam_lo * lam_hi)
        q = solve(lam, best)
        if _mmd_sq(q, K, p_hat) <= eta_sq:
            lam_hi, best = lam, q
        else:
            lam_lo = lam
    return best, float(np.sum((Z.T @ best) ** 2))


def max_linear_in_mmd_ball(
    r: np.ndarray,
    K: np.ndarray,
    p_hat: np.ndarray,
    eta: float,
    bisect_iters: int = 80,
) -> Tuple[np.ndarray, float]:
    """Maximize r'q over the simplex intersected with an MMD ball."""
    m = r.shape[0]
    eta_sq = eta * eta
    if eta_sq <= 0.0 or np.max(r) - np.min(r) < 1e-15:
        return p_hat.copy(), float(r @ p_hat)

    scale_r = float(np.max(np.abs(r))) + 1e-30
    scale_k = np.trace(K) / m + 1e-30

    def solve(lam: float, warm) -> np.ndarray:
        res = simplex_qp(2.0 * lam * K, -r - 2.0 * lam * (K @ p_hat), x0=warm)
        return res.x

    lam_lo = 1e-10 * scale_r / scale_k
    q = solve(lam_lo, p_hat)
    if _mmd_sq(q, K, p_hat) <= eta_sq:
        return q, float(r @ q)
    lam_hi = max(1.0, lam_lo) * 2.0
    q_hi = solve(lam_hi, q)
    guard = 0
    while _mmd_sq(q_hi, K, p_hat) > eta_sq and guard < 200:
        lam_hi *= 4.0
        q_hi = solve(lam_hi, q_hi)
        guard += 1
    best = q_hi
    for _ in range(bisect_iters):
        lam = math.sqrt(lam_lo * lam_hi)
        q = solve(lam, best)
        if _mmd_sq(q, K, p_hat) <= eta_sq:
            lam_hi, best = lam, q
        else:
            lam_lo = lam
    return best, float(r @ best)
