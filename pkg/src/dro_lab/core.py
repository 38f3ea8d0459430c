"""Domain types shared by the whole laboratory.

Sample-space distributions, parametric losses, deterministic counter-based
randomness, and the exact risk functionals they support.
"""

from __future__ import annotations

import dataclasses
import json
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np

__all__ = [
    "ValidationError",
    "CapabilityError",
    "UniformBox",
    "DiscreteSupport",
    "ShiftedPair",
    "DistributionSpec",
    "LossCertificates",
    "RkhsExpansion",
    "QuadLinearLoss",
    "CustomLoss",
    "LossModel",
    "RngStream",
    "SampleSet",
    "sample",
    "true_risk",
    "excess_risk",
    "true_optimum",
    "monte_carlo_risk",
    "spec_to_json",
    "spec_from_json",
    "loss_to_json",
    "loss_from_json",
]


class ValidationError(ValueError):
    """Raised when a distribution or loss specification is malformed."""


class CapabilityError(RuntimeError):
    """Raised when an exact computation is requested outside its contract."""


# ---------------------------------------------------------------------------
# distributions
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class UniformBox:
    """Product of uniform distributions on [lo_j, hi_j]."""

    lo: np.ndarray
    hi: np.ndarray

    def __post_init__(self):
        lo = np.atleast_1d(np.asarray(self.lo, dtype=float))
        hi = np.atleast_1d(np.asarray(self.hi, dtype=float))
        object.__setattr__(self, "lo", lo)
        object.__setattr__(self, "hi", hi)
        if lo.ndim != 1 or hi.shape != lo.shape:
            raise ValidationError("lo and hi must be vectors of equal length")
        if not (np.all(np.isfinite(lo)) and np.all(np.isfinite(hi))):
            raise ValidationError("box bounds must be finite")
        if not np.all(lo < hi):
            raise ValidationError("need lo < hi componentwise")

    @staticmethod
    def symmetric(B: float, d: int) -> "UniformBox":
        return UniformBox(lo=-B * np.ones(d), hi=B * np.ones(d))

    @property
    def d(self) -> int:
        return self.lo.shape[0]

    @property
    def mean(self) -> np.ndarray:
        return 0.5 * (self.lo + self.hi)


@dataclass(frozen=True)
class DiscreteSupport:
    """Finitely supported distribution: m points with probabilities."""

    points: np.ndarray
    probs: np.ndarray

    def __post_init__(self):
        pts = np.atleast_2d(np.asarray(self.points, dtype=float))
        pr = np.atleast_1d(np.asarray(self.probs, dtype=float))
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "probs", pr)
        if pts.shape[0] != pr.shape[0]:
            raise ValidationError("points and probs length mismatch")
        if np.any(pr < 0):
            raise ValidationError("probs must be nonnegative")
        if abs(pr.sum() - 1.0) > 1e-12:
            raise ValidationError("probs must sum to 1 within 1e-12")
        # pairwise distinct support points
        if np.unique(pts, axis=0).shape[0] != pts.shape[0]:
            raise ValidationError("support points must be distinct")

    @property
    def d(self) -> int:
        return self.points.shape[1]

    @property
    def m(self) -> int:
        return self.points.shape[0]

    @property
    def mean(self) -> np.ndarray:
        return self.probs @ self.points


@dataclass(frozen=True)
class ShiftedPair:
    """Train/test pair for the distribution-shift scenarios."""

    train: "DistributionSpec"
    test: "DistributionSpec"

    @property
    def d(self) -> int:
        return self.train.d


DistributionSpec = Union[UniformBox, DiscreteSupport, ShiftedPair]


# ---------------------------------------------------------------------------
# losses
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class RkhsExpansion:
    """Finite kernel expansion sum_j coeffs_j k(centers_j, .)."""

    centers: np.ndarray
    coeffs: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "centers", np.atleast_2d(np.asarray(self.centers, dtype=float)))
        object.__setattr__(self, "coeffs", np.atleast_1d(np.asarray(self.coeffs, dtype=float)))
        if self.centers.shape[0] != self.coeffs.shape[0]:
            raise ValidationError("expansion centers/coeffs length mismatch")


@dataclass(frozen=True)
class LossCertificates:
    """Optional norm certificates for the loss as a function of z."""

    lipschitz_z: Optional[float] = None
    sup_norm: Optional[float] = None
    rkhs_expansion: Optional[RkhsExpansion] = None


@dataclass(frozen=True)
class QuadLinearLoss:
    """l(theta, z) = 0.5 ||theta - v||^2 + z . (theta - v)."""

    v: np.ndarray
    certificates: LossCertificates = field(default_factory=LossCertificates)

    def __post_init__(self):
        object.__setattr__(self, "v", np.atleast_1d(np.asarray(self.v, dtype=float)))

    @property
    def d(self) -> int:
        return self.v.shape[0]

    def value(self, theta: np.ndarray, z: np.ndarray) -> float:
        b = np.asarray(theta, float) - self.v
        return 0.5 * float(b @ b) + float(np.asarray(z, float) @ b)

    def values(self, theta: np.ndarray, Z: np.ndarray) -> np.ndarray:
        """Vectorized loss over the rows of an n x d sample matrix."""
        b = np.asarray(theta, float) - self.v
        return 0.5 * float(b @ b) + np.atleast_2d(Z) @ b

    def grad_theta(self, theta: np.ndarray, z: np.ndarray) -> np.ndarray:
        return (np.asarray(theta, float) - self.v) + np.asarray(z, float)


@dataclass(frozen=True)
class CustomLoss:
    """Black-box loss with caller-supplied value and theta-gradient."""

    eval: Callable[[np.ndarray, np.ndarray], float]
    grad_theta: Optional[Callable[[np.ndarray, np.ndarray], np.ndarray]] = None
    certificates: LossCertificates = field(default_factory=LossCertificates)

    def value(self, theta, z) -> float:
        return float(self.eval(theta, z))

    def values(self, theta, Z) -> np.ndarray:
        Z = np.atleast_2d(Z)
        return np.array([self.eval(theta, z) for z in Z], dtype=float)


LossModel = Union[QuadLinearLoss, CustomLoss]


# ---------------------------------------------------------------------------
# randomness
# ---------------------------------------------------------------------------


_MASK64 = (1 << 64) - 1


def _splitmix64(x: int) -> int:
    # standard splitmix64 finalizer; used to derive child stream ids
    x = (x + 0x9E3779B97F4A7C15) & _MASK64
    x = ((x ^ (x >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    x = ((x ^ (x >> 27)) * 0x94D049BB133111EB) & _MASK64
    return x ^ (x >> 31)


@dataclass(frozen=True)
class RngStream:
    """Counter-based random stream: pure value, no hidden global state.

    Disjoint (seed, stream_id) pairs index statistically independent Philox
    streams, so trials can run in any order or in parallel and still
    reproduce bit-identically.
    """

    seed: int
    stream_id: int = 0

    def generator(self) -> np.random.Generator:
        key = ((self.seed & _MASK64) << 64) | (self.stream_id & _MASK64)
        return np.random.Generator(np.random.Philox(key=key))

    def child(self, index: int) -> "RngStream":
        new_id = _splitmix64((self.stream_id * 0x100000001B3 + index + 1) & _MASK64)
        return RngStream(seed=self.seed, stream_id=new_id)


# ---------------------------------------------------------------------------
# samples
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class SampleSet:
    """n x d sample matrix with its generating provenance."""

    data: np.ndarray
    source: Optional[DistributionSpec] = None
    rng: Optional[RngStream] = None

    def __post_init__(self):
        data = np.atleast_2d(np.asarray(self.data, dtype=float))
        object.__setattr__(self, "data", data)
        if data.shape[0] < 1 or data.shape[1] < 1:
            raise ValidationError("need n >= 1 and d >= 1")
        if not np.all(np.isfinite(data)):
            raise ValidationError("sample entries must be finite")

    @property
    def n(self) -> int:
        return self.data.shape[0]

    @property
    def d(self) -> int:
        return self.data.shape[1]


def sample(spec: DistributionSpec, n: int, rng: RngStream) -> SampleSet:
    """Draw n iid rows from spec; deterministic in (spec, n, rng)."""
    if n < 1:
        raise ValidationError("need n >= 1")
    if isinstance(spec, ShiftedPair):
        inner = sample(spec.train, n, rng)
        return SampleSet(data=inner.data, source=spec, rng=rng)
    gen = rng.generator()
    if isinstance(spec, UniformBox):
        u = gen.random((n, spec.d))
        data = spec.lo + (spec.hi - spec.lo) * u
    elif isinstance(spec, DiscreteSupport):
        idx = gen.choice(spec.m, size=n, p=spec.probs)
        data = spec.points[idx]
    else:
        raise ValidationError(f"unknown distribution spec {type(spec)!r}")
    return SampleSet(data=data, source=spec, rng=rng)


# ---------------------------------------------------------------------------
# risk functionals
# ---------------------------------------------------------------------------


def true_risk(loss: LossModel, spec: DistributionSpec, theta: np.ndarray) -> float:
    """Exact expected loss under spec.

    Supported: QuadLinear under UniformBox/DiscreteSupport, and Custom under
    DiscreteSupport (finite summation). Anything else raises CapabilityError.
    """
    if isinstance(spec, ShiftedPair):
        raise ValidationError("true_risk needs a concrete train or test spec, not a pair")
    theta = np.atleast_1d(np.asarray(theta, dtype=float))
    if isinstance(loss, QuadLinearLoss):
        b = theta - loss.v
        if isinstance(spec, UniformBox):
            return 0.5 * float(b @ b) + float(spec.mean @ b)
        if isinstance(spec, DiscreteSupport):
            return float(spec.probs @ loss.values(theta, spec.points))
        raise CapabilityError(f"unsupported spec {type(spec)!r}")
    if isinstance(loss, CustomLoss):
        if isinstance(spec, DiscreteSupport):
            return float(spec.probs @ loss.values(theta, spec.points))
        raise CapabilityError(
            "exact true_risk for a custom loss needs a discrete distribution; "
            "use monte_carlo_risk for continuous ones"
        )
    raise ValidationError(f"unknown loss model {type(loss)!r}")


def true_optimum(loss: LossModel, spec: DistributionSpec) -> np.ndarray:
    """Minimizer of the true risk; closed form for the quadratic loss."""
    if isinstance(spec, ShiftedPair):
        raise ValidationError("true_optimum needs a concrete spec")
    if isinstance(loss, QuadLinearLoss):
        if isinstance(spec, (UniformBox, DiscreteSupport)):
            # stationarity of 0.5||b||^2 + E[z].b  =>  b = -E[z]
            return loss.v - spec.mean
        raise CapabilityError(f"unsupported spec {type(spec)!r}")
    raise CapabilityError("true optimum only available for the quadratic loss")


def excess_risk(loss: LossModel, spec: DistributionSpec, theta: np.ndarray) -> float:
    """true_risk(theta) minus the optimal true risk; >= -1e-12 by construction."""
    theta_star = true_optimum(loss, spec)
    gap = true_risk(loss, spec, theta) - true_risk(loss, spec, theta_star)
    if gap < -1e-12:
        raise AssertionError(f"negative excess risk {gap}; optimum is wrong")
    return gap


def monte_carlo_risk(
    loss: LossModel, spec: DistributionSpec, theta: np.ndarray, rng: RngStream, n: int = 10**6
) -> float:
    """Monte-Carlo risk estimate; the fallback when true_risk is out of contract."""
    s = sample(spec, n, rng)
    return float(np.mean(loss.values(theta, s.data)))


# ---------------------------------------------------------------------------
# JSON serialization (keys: "variant", "params", "certificates")
# ---------------------------------------------------------------------------


def spec_to_json(spec: DistributionSpec) -> dict:
    if isinstance(spec, UniformBox):
        return {"variant": "UniformBox", "params": {"lo": spec.lo.tolist(), "hi": spec.hi.tolist()}}
    if isinstance(spec, DiscreteSupport):
        return {
            "variant": "DiscreteSupport",
            "params": {"points": spec.points.tolist(), "probs": spec.probs.tolist()},
        }
    if isinstance(spec, ShiftedPair):
        return {
            "variant": "ShiftedPair",
            "params": {"train": spec_to_json(spec.train), "test": spec_to_json(spec.test)},
        }
    raise ValidationError(f"cannot serialize {type(spec)!r}")


def spec_from_json(obj: dict) -> DistributionSpec:
    variant, params = obj["variant"], obj["params"]
    if variant == "UniformBox":
        return UniformBox(lo=np.asarray(params["lo"]), hi=np.asarray(params["hi"]))
    if variant == "DiscreteSupport":
        return DiscreteSupport(points=np.asarray(params["points"]), probs=np.asarray(params["probs"]))
    if variant == "ShiftedPair":
        return ShiftedPair(train=spec_from_json(params["train"]), test=spec_from_json(params["test"]))
    raise ValidationError(f"unknown distribution variant {variant!r}")


def _certs_to_json(c: LossCertificates) -> dict:
    out = {}
    if c.lipschitz_z is not None:
        out["lipschitz_z"] = c.lipschitz_z
    if c.sup_norm is not None:
        out["sup_norm"] = c.sup_norm
    if c.rkhs_expansion is not None:
        out["rkhs_expansion"] = {
            "centers": c.rkhs_expansion.centers.tolist(),
            "coeffs": c.rkhs_expansion.coeffs.tolist(),
        }
    return out


def _certs_from_json(obj: dict) -> LossCertificates:
    exp = obj.get("rkhs_expansion")
    return LossCertificates(
        lipschitz_z=obj.get("lipschitz_z"),
        sup_norm=obj.get("sup_norm"),
        rkhs_expansion=None
        if exp is None
        else RkhsExpansion(centers=np.asarray(exp["centers"]), coeffs=np.asarray(exp["coeffs"])),
    )


def loss_to_json(loss: LossModel) -> dict:
    if isinstance(loss, QuadLinearLoss):
        return {
            "variant": "QuadLinear",
            "params": {"v": loss.v.tolist()},
            "certificates": _certs_to_json(loss.certificates),
        }
    raise CapabilityError("only the quadratic loss serializes to JSON")


def loss_from_json(obj: dict) -> LossModel:
    if obj["variant"] != "QuadLinear":
        raise ValidationError(f"unknown loss variant {obj['variant']!r}")
    return QuadLinearLoss(
        v=np.asarray(obj["params"]["v"]),
        certificates=_certs_from_json(obj.get("certificates", {})),
    )
