"""Monte-Carlo checks of the coverage and decomposition properties.

Everything here is a frequency estimate over independent trials with
disjoint random streams, reported with Wilson 95% intervals. Nothing is
asserted inside this module; callers compare the reported rates against
their own tolerances.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import List, Optional, Tuple

import numpy as np

from .calibration import CalibrationInput, chi2_ball_size, chi2_min_sample, mmd_ball_size
from .core import (
    LossModel,
    RngStream,
    SampleSet,
    UniformBox,
    sample,
    true_risk,
)
from .distances import CHI2_NEYMAN, DiscreteDist, phi_divergence
from .kernels import GaussianKernel, population_mmd_to_empirical
from .robustify import AmbiguitySet, MMDFamily, PhiBall, SolverConfig, W1Family, w1_worst_case
from .solve import dro_solve, restricted_worst_case

__all__ = [
    "wilson_halfwidth",
    "CoverageReport",
    "coverage_mmd",
    "coverage_chi2",
    "DecompositionReport",
    "DecompositionSummary",
    "decomposition_check",
    "decomposition_trials",
]

_Z95 = 1.959963984540054


def wilson_halfwidth(hits: int, trials: int, z: float = _Z95) -> float:
    """Half-width of the Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise ValueError("need at least one trial")
    p = hits / trials
    denom = 1.0 + z * z / trials
    return (z / denom) * math.sqrt(p * (1.0 - p) / trials + z * z / (4.0 * trials * trials))


@dataclass(frozen=True)
class CoverageReport:
    trials: int
    hits: int
    rate: float
    target: float
    ci_halfwidth: float
    below_regime: bool = False

    def __post_init__(self):
        if self.hits > self.trials:
            raise ValueError("hits cannot exceed trials")


def _make_report(hits: int, trials: int, delta: float, below_regime: bool = False) -> CoverageReport:
    return CoverageReport(
        trials=trials,
        hits=hits,
        rate=hits / trials,
        target=1.0 - delta,
        ci_halfwidth=wilson_halfwidth(hits, trials),
        below_regime=below_regime,
    )


def coverage_mmd(
    box: UniformBox,
    kernel: GaussianKernel,
    n: int,
    delta: float,
    trials: int,
    rng: RngStream,
) -> CoverageReport:
    """Frequency of D_MMD(P, P_hat) <= eta with the concentration radius.

    P is the uniform box, P_hat the empirical measure of n draws, and the
    population-to-empirical MMD is evaluated in closed form.
    """
    eta = mmd_ball_size(CalibrationInput(n=n, delta=delta, K=kernel.bound))
    hits = 0
    for t in range(trials):
        S = sample(box, n, rng.child(t))
        if population_mmd_to_empirical(kernel, box, S) <= eta:
            hits += 1
    return _make_report(hits, trials, delta)


def coverage_chi2(
    dist: DiscreteDist,
    n: int,
    delta: float,
    trials: int,
    rng: RngStream,
) -> CoverageReport:
    """Frequency of D_chi2(P || P_hat) <= eta on a finite support.

    A trial where the empirical measure misses a support point counts as a
    miss (the true P is then not absolutely continuous with respect to
    P_hat). The report carries a flag when n sits below the regime in which
    the radius formula is proven to cover.
    """
    m = dist.m
    eta = chi2_ball_size(CalibrationInput(n=n, delta=delta, m=m))
    p_min = float(np.min(dist.probs[dist.probs > 0]))
    below = n < chi2_min_sample(CalibrationInput(n=n, delta=delta, m=m), p_min)
    hits = 0
    for t in range(trials):
        gen = rng.child(t).generator()
        idx = gen.choice(m, size=n, p=dist.probs)
        counts = np.bincount(idx, minlength=m)
        if np.any((counts == 0) & (dist.probs > 0)):
            continue
        p_hat = counts / n
        div = phi_divergence(
            CHI2_NEYMAN,
            DiscreteDist(points=dist.points, probs=dist.probs),
            DiscreteDist(points=dist.points, probs=p_hat),
        )
        if div <= eta:
            hits += 1
    return _make_report(hits, trials, delta, below_regime=below)


# ---------------------------------------------------------------------------
# Three-term decomposition of the excess risk
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class DecompositionReport:
    """Excess risk split at the robust solution theta_dro against theta_opt.

    term1 = E_P loss(theta_dro) - WC(theta_dro)
    term2 = WC(theta_dro) - WC(theta_opt)   (<= 0 when the solver is exact)
    term3 = WC(theta_opt) - E_P loss(theta_opt)
    where WC is the same worst-case functional the solver minimized.
    """

    term1: float
    term2: float
    term3: float
    excess: float
    covered: Optional[bool]
    converged: bool

    @property
    def total(self) -> float:
        return self.term1 + self.term2 + self.term3


def _wc_value(aset: AmbiguitySet, loss: LossModel, theta: np.ndarray, cfg: SolverConfig) -> float:
    if isinstance(aset.family, (MMDFamily, PhiBall)):
        val, _ = restricted_worst_case(aset, loss, theta)
        return val
    if isinstance(aset.family, W1Family):
        return w1_worst_case(aset, loss, theta, box=None, cfg=cfg).value
    raise ValueError(f"unknown ambiguity family {type(aset.family)!r}")


def decomposition_check(
    loss: LossModel,
    aset: AmbiguitySet,
    data: SampleSet,
    box: UniformBox,
    theta_opt: np.ndarray,
    cfg: SolverConfig = SolverConfig(),
    rng: Optional[RngStream] = None,
) -> DecompositionReport:
    """Solve the robust problem on `data` and split the resulting excess risk.

    The coverage indicator is computed exactly for MMD balls (closed-form
    population MMD against the box) and left undetermined otherwise.
    """
    report = dro_solve(loss, aset, cfg=cfg, box=box, rng=rng)
    theta_dro = report.theta
    wc_dro = report.objective
    wc_opt = _wc_value(aset, loss, theta_opt, cfg)
    r_dro = true_risk(loss, box, theta_dro)
    r_opt = true_risk(loss, box, theta_opt)

    covered: Optional[bool] = None
    if isinstance(aset.family, MMDFamily):
        covered = bool(
            population_mmd_to_empirical(aset.family.kernel, box, data) <= aset.radius
        )
    return DecompositionReport(
        term1=r_dro - wc_dro,
        term2=wc_dro - wc_opt,
        term3=wc_opt - r_opt,
        excess=r_dro - r_opt,
        covered=covered,
        converged=report.converged,
    )


@dataclass(frozen=True)
class DecompositionSummary:
    trials: int
    used: int
    excluded: int
    term2_ok: int
    term1_ok_given_covered: int
    covered: int
    excess_violations: int
    reports: Tuple[DecompositionReport, ...] = field(repr=False, default=())

    @property
    def term2_rate(self) -> float:
        return self.term2_ok / self.used if self.used else float("nan")


def decomposition_trials(
    make_instance,
    trials: int,
    rng: RngStream,
    cfg: SolverConfig = SolverConfig(),
    tol: float = 1e-5,
    excess_bound: Optional[float] = None,
) -> DecompositionSummary:
    """Aggregate decomposition_check over independent trials.

    `make_instance(stream)` returns (loss, aset, data, box, theta_opt) for
    one trial. Non-converged solves are excluded from the rates and counted;
    more than 1% exclusions should fail the caller's run.
    """
    used = excluded = t2 = t1c = cov = viol = 0
    reports: List[DecompositionReport] = []
    for t in range(trials):
        stream = rng.child(t)
        loss, aset, data, box, theta_opt = make_instance(stream)
        rep = decomposition_check(loss, aset, data, box, theta_opt, cfg=cfg, rng=stream.child(10**6))
        reports.append(rep)
        if not rep.converged:
            excluded += 1
            continue
        used += 1
        if rep.term2 <= tol:
            t2 += 1
        if rep.covered:
            cov += 1
            if rep.term1 <= tol:
                t1c += 1
        if excess_bound is not None and rep.excess > excess_bound:
            viol += 1
    return DecompositionSummary(
        trials=trials,
        used=used,
        excluded=excluded,
        term2_ok=t2,
        term1_ok_given_covered=t1c,
        covered=cov,
        excess_violations=viol,
        reports=tuple(reports),
    )
