"""Outer minimization: empirical risk and distributionally robust risk.

For the quadratic loss every ambiguity family admits an exact reduction, and
those paths are taken whenever they apply:

* MMD ball: by minimax exchange the robust problem over the restricted
  support equals min_q ||Z'q||^2 over the simplex-intersected ball, with
  theta* = v - Z'q*. Solved by the exact active-set engine.
* W1 ball (Lipschitz mode): the robust objective is
  0.5||b||^2 + b.zbar + eta||b|| in b = theta - v, minimized in closed form
  by soft-thresholding the empirical mean.
* chi-squared ball: if a zero-mean reweighting lies inside the ball the
  robust optimum is theta* = v exactly; otherwise quasi-Newton descent on
  the exact worst-case oracle with Danskin gradients.

Custom losses always go through the generic subgradient outer loop, which
calls the worst-case oracle for a maximizing distribution and follows the
risk gradient under it.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np
from scipy.optimize import minimize

from .core import (
    CapabilityError,
    CustomLoss,
    LossModel,
    QuadLinearLoss,
    RngStream,
    SampleSet,
    UniformBox,
    ValidationError,
)
from .distances import DiscreteDist, phi_divergence
from .qp import max_linear_in_mmd_ball, min_mean_sq_in_mmd_ball
from .robustify import (
    AmbiguitySet,
    MMDFamily,
    PhiBall,
    SolverConfig,
    W1Family,
    phi_worst_case,
    w1_worst_case,
)

__all__ = ["SolveReport", "erm_solve", "dro_solve", "restricted_worst_case"]


@dataclass(frozen=True)
class SolveReport:
    theta: np.ndarray
    objective: float
    iterations: int
    converged: bool
    method: str
    inner_reports: tuple = ()


# ---------------------------------------------------------------------------
# ERM
# ---------------------------------------------------------------------------


def erm_solve(loss: LossModel, S: SampleSet, cfg: SolverConfig = SolverConfig()) -> SolveReport:
    """Minimize the sample-average risk.

    Quadratic loss: theta = v - zbar in closed form. Custom losses need a
    gradient and are run through gradient descent with backtracking until
    the gradient norm drops below 1e-8.
    """
    if isinstance(loss, QuadLinearLoss):
        zbar = np.mean(S.data, axis=0)
        theta = loss.v - zbar
        obj = float(np.mean(loss.values(theta, S.data)))
        return SolveReport(theta=theta, objective=obj, iterations=0, converged=True, method="erm-exact")
    if not isinstance(loss, CustomLoss) or loss.grad_theta is None:
        raise CapabilityError("ERM for a custom loss needs grad_theta")

    def obj_fn(theta):
        return float(np.mean(loss.values(theta, S.data)))

    def grad_fn(theta):
        g = np.zeros_like(np.asarray(theta, float))
        for z in S.data:
            g += loss.grad_theta(theta, z)
        return g / S.n

    theta = np.zeros(S.d)
    step = 1.0
    it = 0
    f = obj_fn(theta)
    for it in range(1, cfg.max_iters + 1):
        g = grad_fn(theta)
        gn = float(np.linalg.norm(g))
        if gn <= 1e-8:
            return SolveReport(theta=theta, objective=f, iterations=it, converged=True, method="erm-gd")
        # backtracking on the Armijo condition
        while step > 1e-16:
            cand = theta - step * g
            fc = obj_fn(cand)
            if fc <= f - 0.25 * step * gn * gn:
                theta, f = cand, fc
                step *= 1.5
                break
            step *= 0.5
        else:
            break
    return SolveReport(theta=theta, objective=f, iterations=it, converged=False, method="erm-gd")


# ---------------------------------------------------------------------------
# restricted worst case (shared by the exact paths and the verifier)
# ---------------------------------------------------------------------------


def restricted_worst_case(
    aset: AmbiguitySet, loss: LossModel, theta: np.ndarray
) -> Tuple[float, np.ndarray]:
    """max_q E_q loss(theta) over distributions on the center's own support.

    This is the inner problem the exact solvers actually optimize against.
    Returns (value, q). MMD balls use the active-set engine; phi balls the
    exact dual oracle. Not defined for W1 (its maximizer leaves the support).
    """
    center = aset.center_dist()
    pts, p = center.points, center.probs
    ell = loss.values(theta, pts)
    if isinstance(aset.family, MMDFamily):
        K = aset.family.kernel.matrix(pts, pts)
        q, val = max_linear_in_mmd_ball(ell, K, p, aset.radius)
        return val, q
    if isinstance(aset.family, PhiBall):
        sub = AmbiguitySet(family=aset.family, center=center, radius=aset.radius)
        rep = phi_worst_case(sub, loss, theta)
        return rep.value, rep.certificate.worst_dist.probs
    raise CapabilityError("restricted worst case is defined for MMD and phi balls")


# ---------------------------------------------------------------------------
# DRO
# ---------------------------------------------------------------------------


def dro_solve(
    loss: LossModel,
    aset: AmbiguitySet,
    cfg: SolverConfig = SolverConfig(),
    box: Optional[UniformBox] = None,
    rng: Optional[RngStream] = None,
    theta0: Optional[np.ndarray] = None,
) -> SolveReport:
    """min_theta max_{Q in ball} E_Q loss(theta, .).

    Dispatches to an exact reduction when the loss is quadratic; otherwise
    runs a subgradient outer loop with oracle-supplied worst-case gradients.
    The reported objective is re-evaluated from scratch at the returned theta
    and must agree with the solver's internal value to 1e-6.
    """
    if isinstance(loss, QuadLinearLoss):
        report = _dro_quad(aset, loss, cfg)
    else:
        report = _dro_generic(aset, loss, cfg, box, rng, theta0)
    check = _evaluate(aset, loss, report.theta, cfg, box, rng)
    if check is not None and abs(check - report.objective) > 1e-6 * (1.0 + abs(check)):
        raise AssertionError(
            f"objective consistency check failed: solver {report.objective}, fresh {check}"
        )
    return report


def _evaluate(aset, loss, theta, cfg, box, rng) -> Optional[float]:
    if isinstance(aset.family, (MMDFamily, PhiBall)):
        val, _ = restricted_worst_case(aset, loss, theta)
        return val
    if isinstance(aset.family, W1Family):
        try:
            return w1_worst_case(aset, loss, theta, box=None, cfg=cfg).value
        except CapabilityError:
            return None
    return None


def _dro_quad(aset: AmbiguitySet, loss: QuadLinearLoss, cfg: SolverConfig) -> SolveReport:
    center = aset.center_dist()
    Z = center.points
    p = center.probs
    eta = aset.radius

    if isinstance(aset.family, MMDFamily):
        K = aset.family.kernel.matrix(Z, Z)
        q, mean_sq = min_mean_sq_in_mmd_ball(Z, K, p, eta)
        theta = loss.v - Z.T @ q
        # saddle-point value: at theta* = v - Z'q* the inner max is attained
        # at q*, giving 0.5||Z'q*||^2 - ||Z'q*||^2
        return SolveReport(
            theta=theta, objective=-0.5 * mean_sq, iterations=0, converged=True, method="mmd-exact"
        )

    if isinstance(aset.family, W1Family):
        zbar = p @ Z
        nz = float(np.linalg.norm(zbar))
        scale = max(nz - eta, 0.0) / nz if nz > 0 else 0.0
        b = -scale * zbar
        theta = loss.v + b
        obj = 0.5 * float(b @ b) + float(b @ zbar) + eta * float(np.linalg.norm(b))
        return SolveReport(theta=theta, objective=obj, iterations=0, converged=True, method="w1-exact")

    if isinstance(aset.family, PhiBall):
        return _dro_quad_phi(aset, loss, cfg)

    raise ValidationError(f"unknown ambiguity family {type(aset.family)!r}")


def _dro_quad_phi(aset: AmbiguitySet, loss: QuadLinearLoss, cfg: SolverConfig) -> SolveReport:
    center = aset.center_dist()
    Z, p = center.points, center.probs
    eta = aset.radius
    fam = aset.family.family

    # If some feasible reweighting has zero mean, the robust optimum is
    # exactly theta = v: the adversary can then force any other theta to pay
    # 0.5||theta - v||^2 while v itself pays nothing against every Q.
    q0 = _min_div_zero_mean(fam, Z, p)
    if q0 is not None and phi_divergence(
        fam, DiscreteDist(points=Z, probs=q0), center
    ) <= eta * (1.0 + 1e-9) + 1e-15:
        val, _ = restricted_worst_case(aset, loss, loss.v)
        return SolveReport(
            theta=loss.v.copy(), objective=val, iterations=0, converged=True, method="phi-exact"
        )

    # otherwise minimize the max-function; Danskin gives the gradient at the
    # inner maximizer, and the function is smooth wherever that maximizer is
    # unique, so a quasi-Newton method converges fast
    def value_and_grad(theta):
        val, q = restricted_worst_case(aset, loss, theta)
        g = (theta - loss.v) + q @ Z
        return val, g

    theta0 = loss.v - p @ Z
    res = minimize(
        value_and_grad, theta0, jac=True, method="L-BFGS-B",
        options={"maxiter": min(cfg.max_iters, 500), "ftol": 1e-14, "gtol": 1e-10},
    )
    candidates = [theta0, np.asarray(res.x, float)]
    vals = [restricted_worst_case(aset, loss, th)[0] for th in candidates]
    best = int(np.argmin(vals))
    return SolveReport(
        theta=candidates[best],
        objective=vals[best],
        iterations=int(res.nit),
        converged=True,
        method="phi-danskin",
    )


def _min_div_zero_mean(fam, Z: np.ndarray, p: np.ndarray) -> Optional[np.ndarray]:
    """Minimize D_phi(q||p) over the simplex subject to Z'q = 0, if feasible."""
    m, d = Z.shape

    def obj(q):
        total = 0.0
        for qi, pi in zip(q, p):
            if pi <= 0:
                continue
            t = max(qi, 0.0) / pi
            total += pi * fam.phi(max(t, 1e-12))
        return total

    cons = [
        {"type": "eq", "fun": lambda q: np.sum(q) - 1.0},
        {"type": "eq", "fun": lambda q: Z.T @ q},
    ]
    with warnings.catch_warnings():
        warnings.simplefilter("ignore", RuntimeWarning)
        res = minimize(
            obj,
            p.copy(),
            method="SLSQP",
            bounds=[(1e-12, 1.0)] * m,
            constraints=cons,
            options={"maxiter": 500, "ftol": 1e-14},
        )
    if not res.success:
        return None
    q = np.maximum(res.x, 0.0)
    if float(np.linalg.norm(Z.T @ q)) > 1e-7:
        return None
    return q / q.sum()


def _dro_generic(
    aset: AmbiguitySet,
    loss: LossModel,
    cfg: SolverConfig,
    box: Optional[UniformBox],
    rng: Optional[RngStream],
    theta0: Optional[np.ndarray],
) -> SolveReport:
    if not isinstance(loss, CustomLoss) or loss.grad_theta is None:
        raise CapabilityError("generic DRO needs a custom loss with grad_theta")
    center = aset.center_dist()
    d = center.d

    def oracle(theta):
        if isinstance(aset.family, (MMDFamily, PhiBall)):
            val, q = restricted_worst_case(aset, loss, theta)
            return val, DiscreteDist(points=center.points, probs=q)
        if isinstance(aset.family, W1Family):
            rep = w1_worst_case(aset, loss, theta, box=None, cfg=cfg)
            return rep.value, center  # Lipschitz mode: gradient taken at the center
        raise ValidationError(f"unknown ambiguity family {type(aset.family)!r}")

    theta = np.zeros(d) if theta0 is None else np.asarray(theta0, float).copy()
    best_theta = theta.copy()
    best_val = math.inf
    it = 0
    step0 = 1.0
    for it in range(1, min(cfg.max_iters, 5000) + 1):
        val, Q = oracle(theta)
        if val < best_val - 1e-14:
            best_val, best_theta = val, theta.copy()
        g = np.zeros(d)
        for qi, z in zip(Q.probs, Q.points):
            if qi > 0:
                g += qi * np.asarray(loss.grad_theta(theta, z), float)
        gn = float(np.linalg.norm(g))
        if gn <= 1e-9:
            break
        theta = theta - (step0 / math.sqrt(it)) * g / max(gn, 1.0)
    val, _ = oracle(best_theta)
    return SolveReport(
        theta=best_theta, objective=val, iterations=it, converged=it < cfg.max_iters, method="generic-subgrad"
    )
