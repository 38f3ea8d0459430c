"""Ball-size formulas and excess-risk bound evaluators.

These transcribe the concentration-driven radius choices for the MMD,
1-Wasserstein, and chi-squared ambiguity sets, plus the Sobolev-space bound
for losses outside the RKHS. The Wasserstein constants c1, c2 are
nonconstructive; they default to 1 and are echoed in every result so the
convention is visible downstream.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional, Sequence, Tuple

__all__ = [
    "CalibrationError",
    "CalibrationInput",
    "mmd_ball_size",
    "w1_ball_size",
    "chi2_ball_size",
    "chi2_min_sample",
    "sobolev_bound",
    "rkhs_excess_bound",
]


class CalibrationError(ValueError):
    pass


@dataclass(frozen=True)
class CalibrationInput:
    n: int
    delta: float
    K: float = 1.0
    m: Optional[int] = None
    d: Optional[int] = None
    c1: float = 1.0
    c2: float = 1.0
    shift: Optional[float] = None

    def __post_init__(self):
        if self.n < 1:
            raise CalibrationError("need n >= 1")
        if not 0.0 < self.delta < 1.0:
            raise CalibrationError("delta must lie in (0, 1)")
        if self.c1 <= 0 or self.c2 <= 0:
            raise CalibrationError("c1 and c2 must be positive")


def mmd_ball_size(inp: CalibrationInput) -> float:
    """eta = (K / sqrt(n)) (1 + sqrt(2 log(1/delta))), plus any shift term."""
    if inp.K <= 0:
        raise CalibrationError("kernel bound K must be positive")
    eta = (inp.K / math.sqrt(inp.n)) * (1.0 + math.sqrt(2.0 * math.log(1.0 / inp.delta)))
    if inp.shift is not None:
        eta += inp.shift
    return eta


def w1_ball_size(inp: CalibrationInput) -> float:
    """eta = (log(c1/delta) / (c2 n))^(1/max(d,2)), plus any shift term.

    Requires the sample-size condition n >= log(c1/delta)/c2.
    """
    if inp.d is None:
        raise CalibrationError("w1 ball size needs the dimension d")
    need = math.log(inp.c1 / inp.delta) / inp.c2
    if inp.n < need:
        raise CalibrationError(
            f"sample-size condition violated: need n >= {math.ceil(need)} (got {inp.n})"
        )
    eta = (math.log(inp.c1 / inp.delta) / (inp.c2 * inp.n)) ** (1.0 / max(inp.d, 2))
    if inp.shift is not None:
        eta += inp.shift
    return eta


def chi2_ball_size(inp: CalibrationInput) -> float:
    """eta = (1/n) (m + 2 log(4/delta) + 2 sqrt(m log(4/delta)))."""
    if inp.m is None or inp.m < 1:
        raise CalibrationError("chi2 ball size needs the support count m >= 1")
    log_term = math.log(4.0 / inp.delta)
    return (inp.m + 2.0 * log_term + 2.0 * math.sqrt(inp.m * log_term)) / inp.n


def chi2_min_sample(inp: CalibrationInput, p_min: float) -> int:
    """Smallest n in the chi-squared coverage regime: ceil(1e6 m^2 / (p_min^3 delta^2))."""
    if inp.m is None or inp.m < 1:
        raise CalibrationError("need the support count m >= 1")
    if p_min <= 0:
        raise CalibrationError("p_min must be positive")
    return math.ceil(1e6 * inp.m**2 / (p_min**3 * inp.delta**2))


def sobolev_bound(
    C: float,
    d: int,
    n: int,
    delta: float,
    R_grid: Optional[Sequence[float]] = None,
) -> Tuple[float, float]:
    """2 inf_{R >= 1} { C (log R)^(-d/16) + (R/sqrt(n)) (1 + sqrt(2 log(1/delta))) }.

    The approximation constant C must be supplied by the caller; it is never
    fabricated here. Minimization is over the supplied grid (default
    log-spaced on [1, n^2]); returns (bound, minimizing R).
    """
    if C <= 0:
        raise CalibrationError("approximation constant C must be positive")
    if not 0.0 < delta < 1.0:
        raise CalibrationError("delta must lie in (0, 1)")
    if R_grid is None:
        R_grid = [float(x) for x in _logspace(1.0, float(n) ** 2, 400)]
    grid = [float(R) for R in R_grid if R >= 1.0]
    if not grid:
        raise CalibrationError("empty R grid")
    conc = (1.0 + math.sqrt(2.0 * math.log(1.0 / delta))) / math.sqrt(n)

    # R = 1 makes log R = 0, so the approximation term blows up there; it is
    # kept in the grid only to realize the C -> 0 limit.
    best_R, best_val = None, math.inf
    for R in grid:
        val = math.inf if R <= 1.0 else C * math.log(R) ** (-d / 16.0) + R * conc
        if val < best_val:
            best_val, best_R = val, R
    if best_R is None:
        raise CalibrationError("no usable grid point (grid collapses to R = 1)")
    return 2.0 * best_val, best_R


def _logspace(lo: float, hi: float, count: int):
    if hi <= lo:
        return [lo]
    la, lb = math.log(lo if lo > 0 else 1e-12), math.log(hi)
    return [math.exp(la + (lb - la) * i / (count - 1)) for i in range(count)]


def rkhs_excess_bound(inp: CalibrationInput, M: float) -> float:
    """(2 K M / sqrt(n)) (1 + sqrt(2 log(1/delta))); M is the RKHS norm of the true loss."""
    if M < 0:
        raise CalibrationError("RKHS norm certificate M must be nonnegative")
    base = CalibrationInput(
        n=inp.n, delta=inp.delta, K=inp.K, m=inp.m, d=inp.d, c1=inp.c1, c2=inp.c2, shift=None
    )
    return 2.0 * M * mmd_ball_size(base)
