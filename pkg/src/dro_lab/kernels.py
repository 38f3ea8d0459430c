"""Positive-definite kernels, Gram matrices, and MMD arithmetic."""

from __future__ import annotations

import csv
from dataclasses import dataclass
import numpy as np
from scipy.special import erf

from . import backend
from .core import SampleSet, UniformBox, ValidationError, CapabilityError

__all__ = [
    "GaussianKernel",
    "GramMatrix",
    "KmeExpansion",
    "gram",
    "median_heuristic",
    "mmd",
    "rkhs_norm",
    "population_mmd_to_empirical",
]


@dataclass(frozen=True)
class GaussianKernel:
    """k(z, z') = exp(-||z - z'||^2 / sigma^2).

    Note the sigma^2 (not 2 sigma^2) in the denominator. sup_z sqrt(k(z, z))
    is exactly 1, which is the kernel bound used by the MMD ball-size formula.
    """

    sigma: float

    def __post_init__(self):
        if not self.sigma > 0:
            raise ValidationError("kernel bandwidth must be positive")

    @property
    def bound(self) -> float:
        """sup_z sqrt(k(z, z))."""
        return 1.0

    def matrix(self, X: np.ndarray, Y: np.ndarray) -> np.ndarray:
        """Raw Gram block between two point arrays."""
        X = np.atleast_2d(X)
        Y = np.atleast_2d(Y)
        if X.shape[1] != Y.shape[1]:
            raise ValidationError("dimension mismatch between point sets")
        return backend.gaussian_gram(X, Y, 1.0 / self.sigma**2)


@dataclass(frozen=True)
class GramMatrix:
    values: np.ndarray
    left: SampleSet
    right: SampleSet

    def to_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            for row in self.values:
                w.writerow([repr(x) for x in row])


@dataclass(frozen=True)
class KmeExpansion:
    """Weighted kernel expansion sum_j w_j k(c_j, .).

    Weights sum to 1 when the expansion embeds a distribution, but the
    arithmetic below works for arbitrary finite coefficients.
    """

    centers: np.ndarray
    weights: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "centers", np.atleast_2d(np.asarray(self.centers, dtype=float)))
        object.__setattr__(self, "weights", np.atleast_1d(np.asarray(self.weights, dtype=float)))
        if self.centers.shape[0] != self.weights.shape[0]:
            raise ValidationError("centers/weights length mismatch")
        if not np.all(np.isfinite(self.weights)):
            raise ValidationError("weights must be finite")

    @staticmethod
    def empirical(S: SampleSet) -> "KmeExpansion":
        return KmeExpansion(centers=S.data, weights=np.full(S.n, 1.0 / S.n))


def gram(kernel: GaussianKernel, A: SampleSet, B: SampleSet) -> GramMatrix:
    if A.d != B.d:
        raise ValidationError("dimension mismatch between sample sets")
    return GramMatrix(values=kernel.matrix(A.data, B.data), left=A, right=B)


def median_heuristic(A: SampleSet) -> float:
    """Median of the pairwise distances ||z_i - z_j||, i < j.

    Even pair counts take the lower-middle element so the result is a
    deterministic function of the data. All-identical points give a zero
    bandwidth, which is rejected.
    """
    if A.n < 2:
        raise ValidationError("median heuristic needs at least 2 points")
    dists = np.sort(backend.pairwise_dists_condensed(A.data))
    sigma = float(dists[(len(dists) - 1) // 2])
    if sigma == 0.0:
        raise ValidationError("degenerate sample: median pairwise distance is 0")
    return sigma


def mmd(kernel: GaussianKernel, P: KmeExpansion, Q: KmeExpansion) -> float:
    """RKHS norm of the embedding difference, clamped at 0 for round-off."""
    if P.centers.shape[1] != Q.centers.shape[1]:
        raise ValidationError("dimension mismatch between expansions")
    w, v = P.weights, Q.weights
    Kpp = kernel.matrix(P.centers, P.centers)
    Kqq = kernel.matrix(Q.centers, Q.centers)
    Kpq = kernel.matrix(P.centers, Q.centers)
    sq = float(w @ Kpp @ w + v @ Kqq @ v - 2.0 * (w @ Kpq @ v))
    return float(np.sqrt(max(sq, 0.0)))


def rkhs_norm(kernel: GaussianKernel, centers: np.ndarray, coeffs: np.ndarray) -> float:
    """||sum_j c_j k(z_j, .)||_H = sqrt(c' K c)."""
    centers = np.atleast_2d(np.asarray(centers, dtype=float))
    coeffs = np.atleast_1d(np.asarray(coeffs, dtype=float))
    K = kernel.matrix(centers, centers)
    return float(np.sqrt(max(float(coeffs @ K @ coeffs), 0.0)))


def _box_kernel_double_integral(kernel: GaussianKernel, box: UniformBox) -> float:
    """E_{z, z' ~ box} k(z, z'), factored into per-coordinate 1-D integrals."""
    s = kernel.sigma
    total = 1.0
    for lo, hi in zip(box.lo, box.hi):
        w = hi - lo
        # int_0^w int_0^w exp(-(x-y)^2/s^2) dx dy, divided by w^2
        val = s * np.sqrt(np.pi) * w * erf(w / s) + s * s * (np.exp(-((w / s) ** 2)) - 1.0)
        total *= val / (w * w)
    return float(total)


def _box_kernel_means(kernel: GaussianKernel, box: UniformBox, Z: np.ndarray) -> np.ndarray:
    """E_{z ~ box} k(z, z_i) for each row z_i, via the Gauss error function."""
    s = kernel.sigma
    lo, hi = box.lo, box.hi
    w = hi - lo
    # per-coordinate: (s sqrt(pi)/2) [erf((hi-a)/s) - erf((lo-a)/s)] / w
    per = 0.5 * s * np.sqrt(np.pi) * (erf((hi - Z) / s) - erf((lo - Z) / s)) / w
    return np.prod(per, axis=1)


def population_mmd_to_empirical(kernel: GaussianKernel, box: UniformBox, S: SampleSet) -> float:
    """Exact D_MMD(P, P_hat) for P uniform on a box and P_hat empirical on S.

    The two expectations over the box factor per coordinate into closed-form
    error-function integrals, so the result is accurate to ~1e-10 absolute.
    """
    if not isinstance(box, UniformBox):
        raise CapabilityError("population MMD is only exact against a uniform box")
    if S.d != box.d:
        raise ValidationError("dimension mismatch")
    term_pp = _box_kernel_double_integral(kernel, box)
    K = kernel.matrix(S.data, S.data)
    term_hh = float(np.mean(K))
    term_ph = float(np.mean(_box_kernel_means(kernel, box, S.data)))
    sq = term_pp + term_hh - 2.0 * term_ph
    return float(np.sqrt(max(sq, 0.0)))
