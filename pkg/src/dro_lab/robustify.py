"""Worst-case expectation oracles over MMD, phi-divergence, and W1 balls."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Tuple, Union

import numpy as np

from .core import (
    CapabilityError,
    DiscreteSupport,
    LossModel,
    QuadLinearLoss,
    RngStream,
    SampleSet,
    UniformBox,
    ValidationError,
)
from .distances import DiscreteDist, PhiFamily, phi_divergence
from .kernels import GaussianKernel, KmeExpansion, rkhs_norm
from .qp import golden_section

__all__ = [
    "MMDFamily",
    "W1Family",
    "PhiBall",
    "AmbiguitySet",
    "SolverConfig",
    "DualWeights",
    "KernelDual",
    "W1Dual",
    "WorstCaseReport",
    "convex_minimize_1d",
    "mmd_worst_case",
    "phi_worst_case",
    "w1_worst_case",
    "loss_lipschitz",
]


# ---------------------------------------------------------------------------
# types
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MMDFamily:
    kernel: GaussianKernel


@dataclass(frozen=True)
class W1Family:
    pass


@dataclass(frozen=True)
class PhiBall:
    family: PhiFamily


@dataclass(frozen=True)
class AmbiguitySet:
    family: Union[MMDFamily, W1Family, PhiBall]
    center: Union[SampleSet, DiscreteDist]
    radius: float

    def __post_init__(self):
        if self.radius < 0:
            raise ValidationError("ball radius must be nonnegative")

    def center_dist(self) -> DiscreteDist:
        """The center as an explicit discrete distribution (duplicates merged)."""
        if isinstance(self.center, DiscreteSupport):
            return self.center
        data = self.center.data
        uniq, inv = np.unique(data, axis=0, return_inverse=True)
        probs = np.bincount(inv, minlength=uniq.shape[0]) / data.shape[0]
        return DiscreteDist(points=uniq, probs=probs)


@dataclass(frozen=True)
class SolverConfig:
    max_iters: int = 100_000
    tol_feasibility: float = 1e-8
    tol_value: float = 1e-6
    step_scale: Optional[float] = None  # None: auto-scaled c/sqrt(t) schedule
    constraint_sample_count: Optional[int] = None  # None: data size n
    grid_resolution: int = 201


@dataclass(frozen=True)
class DualWeights:
    worst_dist: DiscreteDist


@dataclass(frozen=True)
class KernelDual:
    coeffs: KmeExpansion
    feasibility_residual: float
    gap_estimate: float


@dataclass(frozen=True)
class W1Dual:
    lam: float
    grid_error: Optional[float] = None  # <= Lip * grid step, grid mode only


@dataclass(frozen=True)
class WorstCaseReport:
    value: float
    certificate: Union[DualWeights, KernelDual, W1Dual]
    iterations: int
    tolerance_met: bool
    empirical_mean: float = 0.0
    upper_bound: Optional[float] = None


def convex_minimize_1d(g, lo: float, hi: float, tol: float = 1e-10) -> Tuple[float, float]:
    """Golden-section minimization of a convex function on [lo, hi]."""
    if lo > hi:
        raise ValidationError("need lo <= hi")
    return golden_section(g, lo, hi, tol=tol)


def loss_lipschitz(loss: LossModel, theta: np.ndarray) -> Optional[float]:
    """Lipschitz constant of z -> loss(theta, z), if known."""
    if isinstance(loss, QuadLinearLoss):
        b = np.asarray(theta, float) - loss.v
        return float(np.linalg.norm(b))
    return loss.certificates.lipschitz_z


# ---------------------------------------------------------------------------
# MMD oracle: sampled semi-infinite dual
# ---------------------------------------------------------------------------


def _feasible_anchor(K: np.ndarray, ell: np.ndarray) -> np.ndarray:
    """A dual-feasible coefficient vector: K alpha >= ell at every center."""
    m = K.shape[0]
    if np.max(ell) <= 0.0:
        return np.zeros(m)
    margin = 0.0
    reg = K + 1e-10 * np.eye(m)
    for _ in range(60):
        alpha = np.linalg.solve(reg, ell + margin)
        viol = float(np.max(ell - K @ alpha))
        if viol <= 0.0:
            return alpha
        margin = 1.5 * (margin + viol) + 1e-12
    raise RuntimeError("could not construct a feasible dual anchor")


def mmd_worst_case(
    aset: AmbiguitySet,
    loss: LossModel,
    theta: np.ndarray,
    box: UniformBox,
    cfg: SolverConfig = SolverConfig(),
    rng: Optional[RngStream] = None,
) -> WorstCaseReport:
    """sup { E_Q loss(theta, .) : D_MMD(Q, P_hat) <= eta } via the sampled dual.

    The dual minimizes (1/n) sum_i f(z_i) + eta ||f||_H over RKHS functions
    f = sum_j alpha_j k(c_j, .) subject to f(c_j) >= loss(theta, c_j), with
    centers c_j = data + uniformly sampled constraint points (+ the loss's
    own expansion centers when it carries one). Solved by a penalty
    subgradient method; every reported iterate is repaired to exact
    feasibility, so the value always dominates the empirical mean and, when
    the loss carries an RKHS certificate, respects the Cauchy-Schwarz upper
    bound empirical_mean + eta * ||loss||_H.
    """
    if not isinstance(aset.family, MMDFamily):
        raise ValidationError("ambiguity set is not an MMD ball")
    if not isinstance(aset.center, SampleSet):
        raise ValidationError("MMD oracle needs an empirical (sample) center")
    kernel = aset.family.kernel
    eta = aset.radius
    data = aset.center.data
    n = data.shape[0]
    if rng is None:
        rng = RngStream(seed=0)

    n_extra = cfg.constraint_sample_count if cfg.constraint_sample_count is not None else n
    blocks = [data]
    if n_extra > 0:
        gen = rng.generator()
        u = gen.random((n_extra, box.d))
        blocks.append(box.lo + (box.hi - box.lo) * u)
    expansion = loss.certificates.rkhs_expansion
    if expansion is not None:
        blocks.append(expansion.centers)
    centers = np.vstack(blocks)
    m = centers.shape[0]

    K = kernel.matrix(centers, centers)
    ell = loss.values(theta, centers)
    emp_mean = float(np.mean(ell[:n]))

    if eta == 0.0:
        # the ball is {P_hat}; report the empirical mean with a feasible
        # certificate rather than running the dual machinery
        anchor = _feasible_anchor(K, ell)
        return WorstCaseReport(
            value=emp_mean,
            certificate=KernelDual(
                coeffs=KmeExpansion(centers=centers, weights=anchor),
                feasibility_residual=0.0,
                gap_estimate=0.0,
            ),
            iterations=0,
            tolerance_met=True,
            empirical_mean=emp_mean,
        )

    upper = None
    anchors = [_feasible_anchor(K, ell)]
    if expansion is not None:
        a = np.zeros(m)
        a[m - expansion.coeffs.shape[0] :] = expansion.coeffs
        anchors.append(a)
        upper = emp_mean + eta * rkhs_norm(kernel, expansion.centers, expansion.coeffs)

    def j_value(alpha: np.ndarray) -> float:
        f = K @ alpha
        norm = math.sqrt(max(float(alpha @ K @ alpha), 0.0))
        return float(np.mean(f[:n])) + eta * norm

    def repair(alpha: np.ndarray, anchor: np.ndarray) -> np.ndarray:
        """Blend toward the anchor until every constraint holds."""
        f = K @ alpha
        viol = ell - f
        mask = viol > 0
        if not np.any(mask):
            return alpha
        fa = K @ anchor
        denom = fa[mask] - f[mask]
        with np.errstate(divide="ignore", invalid="ignore"):
            ratios = np.where(denom > 0, viol[mask] / denom, 1.0)
        beta = min(1.0, float(np.max(ratios)))
        return (1.0 - beta) * alpha + beta * anchor

    anchor = min(anchors, key=j_value)
    alpha = anchor.copy()
    best_alpha = anchor.copy()
    best_val = j_value(anchor)

    rho = 10.0 * (1.0 + eta)
    grad_mean = np.mean(K[:n, :], axis=0)
    g0 = grad_mean + rho * np.mean(np.abs(K), axis=0)
    step_c = cfg.step_scale
    if step_c is None:
        step_c = (1.0 + float(np.max(np.abs(ell)))) / (float(np.linalg.norm(g0)) + 1e-12)

    stall = 0
    it = 0
    for it in range(1, cfg.max_iters + 1):
        f = K @ alpha
        quad = max(float(alpha @ K @ alpha), 0.0)
        norm = math.sqrt(quad)
        viol = ell - f
        jmax = int(np.argmax(viol))
        pen = max(viol[jmax], 0.0)
        grad = grad_mean.copy()
        if norm > 1e-14:
            grad += (eta / norm) * (K @ alpha)
        if pen > 0.0:
            grad -= rho * K[:, jmax]
        alpha = alpha - (step_c / math.sqrt(it)) * grad

        if it % 25 == 0 or it == cfg.max_iters:
            cand = repair(alpha, anchor)
            val = j_value(cand)
            if val < best_val - 1e-14:
                best_val = val
                best_alpha = cand
                stall = 0
            else:
                stall += 1
            if stall >= 80:
                break

    f_best = K @ best_alpha
    residual = max(0.0, float(np.max(ell - f_best)))
    # the empirical mean lower-bounds the primal value, so this brackets the gap
    gap_estimate = max(0.0, best_val - emp_mean)
    tolerance_met = residual <= cfg.tol_feasibility
    return WorstCaseReport(
        value=best_val,
        certificate=KernelDual(
            coeffs=KmeExpansion(centers=centers, weights=best_alpha),
            feasibility_residual=residual,
            gap_estimate=gap_estimate,
        ),
        iterations=it,
        tolerance_met=tolerance_met,
        empirical_mean=emp_mean,
        upper_bound=upper,
    )


# ---------------------------------------------------------------------------
# phi-divergence oracle: exact 2-variable dual
# ---------------------------------------------------------------------------


def phi_worst_case(
    aset: AmbiguitySet,
    loss: LossModel,
    theta: np.ndarray,
    cfg: SolverConfig = SolverConfig(),
) -> WorstCaseReport:
    """sup { sum_i q_i l_i : D_phi(Q || P_hat) <= eta, q in simplex, q << p }.

    Solved through the two-variable convex dual
        min_{lam >= 0, mu}  lam eta + mu + lam sum_i p_i phi*((l_i - mu)/lam)
    by nested golden-section, with the primal recovered from the conjugate's
    maximizer and shrunk onto the ball. The primal-dual gap is checked.
    """
    if not isinstance(aset.family, PhiBall):
        raise ValidationError("ambiguity set is not a phi-divergence ball")
    fam = aset.family.family
    center = aset.center_dist()
    p = center.probs
    pts = center.points
    eta = aset.radius
    ell = loss.values(theta, pts)
    emp_mean = float(p @ ell)
    sup_cert = loss.certificates.sup_norm
    upper = None if sup_cert is None else emp_mean + math.sqrt(max(eta, 0.0)) * sup_cert

    def report(value, q, iters, ok):
        return WorstCaseReport(
            value=value,
            certificate=DualWeights(worst_dist=DiscreteDist(points=pts, probs=q)),
            iterations=iters,
            tolerance_met=ok,
            empirical_mean=emp_mean,
            upper_bound=upper,
        )

    if center.m == 1 or eta == 0.0 or float(np.max(ell) - np.min(ell)) < 1e-15:
        return report(emp_mean if eta == 0.0 or center.m > 1 else float(ell[0]), p.copy(), 0, True)

    ell_max = float(np.max(ell))
    spread = ell_max - float(np.min(ell))

    def dual(lam: float, mu: float) -> float:
        s = (ell - mu) / lam
        vals = np.array([fam.conjugate(si) for si in s])
        if not np.all(np.isfinite(vals)):
            return math.inf
        return lam * eta + mu + lam * float(p @ vals)

    def inner_min(lam: float) -> Tuple[float, float]:
        mu_lo = ell_max - lam  # keeps (l_i - mu)/lam inside dom phi* for chi2
        width = max(spread, lam, 1e-12)
        # families with unbounded conjugate domain can have their minimizer
        # below this boundary; expand downward while it still helps
        prev_lo = dual(lam, mu_lo)
        for _ in range(200):
            cand = dual(lam, mu_lo - width)
            if not math.isfinite(cand) or cand >= prev_lo:
                break
            mu_lo -= width
            prev_lo = cand
            width *= 2.0
        mu_hi = mu_lo + width
        prev = dual(lam, mu_hi)
        for _ in range(200):
            nxt = dual(lam, mu_lo + 2.0 * (mu_hi - mu_lo))
            if nxt > prev:
                break
            mu_hi = mu_lo + 2.0 * (mu_hi - mu_lo)
            prev = nxt
        mu, val = golden_section(lambda mu: dual(lam, mu), mu_lo, mu_hi, tol=1e-13 * width + 1e-15)
        return mu, val

    def outer(lam: float) -> float:
        return inner_min(lam)[1]

    lam_scale = max(spread, 1e-9)
    lam_lo, lam_hi = 1e-9 * lam_scale, lam_scale
    prev = outer(lam_hi)
    for _ in range(200):
        nxt = outer(2.0 * lam_hi)
        if nxt > prev:
            break
        lam_hi *= 2.0
        prev = nxt
    lam_hi *= 2.0
    lam_star, dual_val = golden_section(outer, lam_lo, lam_hi, tol=1e-12 * lam_scale + 1e-15)
    mu_star, dual_val = inner_min(lam_star)

    # primal recovery: t_i maximizes s t - phi(t) at s_i = (l_i - mu*)/lam*
    s = (ell - mu_star) / lam_star
    if fam.conjugate_argmax is None:
        t = np.array([_numeric_conj_argmax(fam, si) for si in s])
    else:
        t = np.array([fam.conjugate_argmax(min(si, 1.0 - 1e-15)) for si in s])
    q = p * np.maximum(t, 0.0)
    total = q.sum()
    if total <= 0:
        q = p.copy()
    else:
        q = q / total
    # shrink toward the center until the ball constraint holds exactly
    lo_t, hi_t = 0.0, 1.0
    if _div(fam, pts, p, q) > eta:
        for _ in range(80):
            mid = 0.5 * (lo_t + hi_t)
            qm = p + mid * (q - p)
            if _div(fam, pts, p, qm) <= eta:
                lo_t = mid
            else:
                hi_t = mid
        q = p + lo_t * (q - p)
    value = float(q @ ell)

    gap = dual_val - value
    ok = gap <= 1e-7 * (1.0 + abs(dual_val))
    if upper is not None and value > upper + 1e-9:
        raise AssertionError("phi oracle exceeded its Cauchy-Schwarz upper bound")
    return report(value, q, 0, ok)


def _div(fam: PhiFamily, pts: np.ndarray, p: np.ndarray, q: np.ndarray) -> float:
    return phi_divergence(fam, DiscreteDist(points=pts, probs=q / q.sum()), DiscreteDist(points=pts, probs=p))


def _numeric_conj_argmax(fam: PhiFamily, s: float) -> float:
    t, _ = golden_section(lambda t: fam.phi(t) - s * t, 1e-12, 1e6, tol=1e-10)
    return t


# ---------------------------------------------------------------------------
# W1 oracle
# ---------------------------------------------------------------------------


def w1_worst_case(
    aset: AmbiguitySet,
    loss: LossModel,
    theta: np.ndarray,
    box: Optional[UniformBox] = None,
    cfg: SolverConfig = SolverConfig(),
) -> WorstCaseReport:
    """sup { E_Q loss : D_W1(Q, P_hat) <= eta } via the Kantorovich dual.

    Lipschitz mode (no box, certificate available): the dual optimum is
    lam = Lip and the value is E_Phat loss + eta * Lip, exact on an
    unbounded sample space. Grid mode (compact box, d <= 2): evaluates
    inf_{lam >= 0} { lam eta + (1/n) sum_i max_z [loss(z) - lam ||z - z_i||] }
    over a uniform grid.
    """
    if not isinstance(aset.family, W1Family):
        raise ValidationError("ambiguity set is not a W1 ball")
    center = aset.center_dist()
    p, pts = center.probs, center.points
    eta = aset.radius
    emp_mean = float(p @ loss.values(theta, pts))
    lip = loss_lipschitz(loss, theta)

    if box is None:
        if lip is None:
            raise CapabilityError("Lipschitz mode needs a lipschitz_z certificate")
        return WorstCaseReport(
            value=emp_mean + eta * lip,
            certificate=W1Dual(lam=lip),
            iterations=0,
            tolerance_met=True,
            empirical_mean=emp_mean,
        )

    if box.d > 2:
        raise CapabilityError("grid mode supports d <= 2 only")
    axes = [np.linspace(lo, hi, cfg.grid_resolution) for lo, hi in zip(box.lo, box.hi)]
    if box.d == 1:
        grid = axes[0][:, None]
    else:
        gx, gy = np.meshgrid(axes[0], axes[1], indexing="ij")
        grid = np.column_stack([gx.ravel(), gy.ravel()])
    lvals = loss.values(theta, grid)
    dists = np.linalg.norm(grid[:, None, :] - pts[None, :, :], axis=2)

    def inner(lam: float) -> float:
        return lam * eta + float(p @ np.max(lvals[:, None] - lam * dists, axis=0))

    if lip is not None:
        lam_hi = lip + 1e-9
    else:
        lam_hi = 1.0
        prev = inner(lam_hi)
        for _ in range(100):
            nxt = inner(2.0 * lam_hi)
            if nxt >= prev - 1e-14:
                break
            lam_hi *= 2.0
            prev = nxt
        lam_hi *= 2.0
    lam_star, value = golden_section(inner, 0.0, lam_hi, tol=1e-11 * (1.0 + lam_hi))
    step = float(max((hi - lo) / (cfg.grid_resolution - 1) for lo, hi in zip(box.lo, box.hi)))
    grid_error = None if lip is None else lip * step * math.sqrt(box.d)
    return WorstCaseReport(
        value=value,
        certificate=W1Dual(lam=lam_star, grid_error=grid_error),
        iterations=0,
        tolerance_met=True,
        empirical_mean=emp_mean,
    )
