"""Hierarchical prior: model-size distribution, uniform pattern choice
given size, rescaling-level density, and prior path sampling.

The rescaling level A is the random variable for which
A^d log^(d+1)(A) is exponentially distributed, truncated below so that
the map is both monotone and respects the design-variance floor.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .eigen import (
    DesignSpec,
    SeriesFunction,
    SparsityPattern,
    compute_constants,
    enumerate_spectrum,
    sample_path,
)

__all__ = [
    "SparsityPriorConfig",
    "RescalingPriorConfig",
    "ConstantFunction",
    "size_prior_pmf",
    "sample_gamma",
    "rescaling_log_density",
    "sample_rescaling",
    "sample_prior_function",
]

# The transform a -> a^d log^(d+1)(a) is only monotone above 1; sampling and
# density evaluation are restricted to a > max(1/xi, MONOTONE_FLOOR).  The
# excluded sliver (1/xi, 1.1] carries negligible mass under the target law.
MONOTONE_FLOOR = 1.1


@dataclass(frozen=True)
class SparsityPriorConfig:
    """Model-size prior q_n: the capped-uniform or penalized family."""

    kind: str  # "cap" or "penalized"
    d_n: int
    n: int
    k: float = 1.0

    def __post_init__(self):
        if self.kind not in ("cap", "penalized"):
            raise ValueError(f"unknown size-prior kind {self.kind!r}")
        if self.d_n < 1:
            raise ValueError("d_n must be >= 1")
        if self.n < 3:
            raise ValueError("n must be >= 3 for log log n to be defined")
        if self.kind == "penalized" and self.k <= 0:
            raise ValueError("k must be positive")


def size_prior_pmf(cfg: SparsityPriorConfig) -> np.ndarray:
    """Normalized pmf of the model size over 0..d_n."""
    loglog_n = math.log(math.log(cfg.n))
    d = np.arange(cfg.d_n + 1)
    if cfg.kind == "cap":
        cap = cfg.n ** (1.0 / loglog_n)
        logw = np.where(d < cap, 0.0, -np.inf)
    else:
        e = cfg.k * loglog_n
        with np.errstate(divide="ignore"):
            logw = np.where(d > 0, (e - 1.0) * np.log(np.maximum(d, 1)) - d**e, -np.inf)
    m = logw.max()
    if not np.isfinite(m):
        raise ValueError("size prior has empty support")
    w = np.exp(logw - m)
    pmf = w / w.sum()
    if pmf[-1] >= 1.0:
        raise ValueError("q_n(d_n) must be < 1")
    return pmf


def sample_gamma(cfg: SparsityPriorConfig, seed) -> SparsityPattern:
    """Draw a size from q_n, then a uniform subset of that size."""
    rng = np.random.default_rng(seed)
    pmf = size_prior_pmf(cfg)
    size = int(rng.choice(len(pmf), p=pmf))
    idx = rng.choice(cfg.d_n, size=size, replace=False)
    return SparsityPattern.from_indices(cfg.d_n, idx.tolist())


@dataclass(frozen=True)
class RescalingPriorConfig:
    """Exponential-transform rescaling law, truncated below at 1/xi."""

    rate: float = 1.0
    xi: float = 1.0

    def __post_init__(self):
        if self.rate <= 0 or self.xi <= 0:
            raise ValueError("rate and xi must be positive")

    @property
    def floor(self) -> float:
        return max(1.0 / self.xi, MONOTONE_FLOOR)


def _transform(a: float, d: int) -> float:
    return a**d * math.log(a) ** (d + 1)


def _transform_deriv(a: float, d: int) -> float:
    la = math.log(a)
    return a ** (d - 1) * la**d * (d * la + d + 1)


def rescaling_log_density(cfg: RescalingPriorConfig, d: int, a: float) -> float:
    """Log density of the truncated exponential-transform law at a.

    Includes the Jacobian of a -> a^d log^(d+1)(a); -inf at or below the
    truncation point.
    """
    if d < 1:
        raise ValueError("d must be >= 1")
    t0 = cfg.floor
    if a <= t0:
        return -math.inf
    return (
        math.log(cfg.rate)
        - cfg.rate * (_transform(a, d) - _transform(t0, d))
        + math.log(_transform_deriv(a, d))
    )


def _invert_transform(value: float, d: int, lo: float) -> float:
    """Solve a^d log^(d+1)(a) = value on the monotone branch a >= lo > 1."""
    if value <= _transform(lo, d):
        return lo
    hi = max(2.0 * lo, 2.0)
    while _transform(hi, d) < value:
        hi *= 2.0
        if hi > 1e12:
            raise ArithmeticError("rescaling inverse transform out of range")
    a = 0.5 * (lo + hi)
    for _ in range(200):
        f = _transform(a, d) - value
        if abs(f) <= 1e-13 * max(abs(value), 1.0):
            return a
        if f < 0:
            lo = a
        else:
            hi = a
        df = _transform_deriv(a, d)
        cand = a - f / df if df > 0 else a
        a = cand if lo < cand < hi else 0.5 * (lo + hi)
    raise ArithmeticError("rescaling inverse transform did not converge")


def sample_rescaling(cfg: RescalingPriorConfig, d: int, seed) -> float:
    """Inverse-transform draw of the truncated rescaling level."""
    if d < 1:
        raise ValueError("d must be >= 1")
    rng = np.random.default_rng(seed)
    t0 = cfg.floor
    # truncation in a-space is truncation in transform-space (monotone map)
    shift = _transform(t0, d)
    e = shift + rng.exponential(1.0 / cfg.rate)
    return _invert_transform(e, d, t0)


@dataclass(frozen=True)
class ConstantFunction:
    """Constant prior draw used for the empty pattern."""

    value: float

    def __call__(self, x) -> np.ndarray | float:
        x_arr = np.asarray(x, dtype=float)
        if x_arr.ndim <= 1:
            return self.value
        return np.full(x_arr.shape[0], self.value)


def sample_prior_function(
    sp_cfg: SparsityPriorConfig,
    rs_cfg: RescalingPriorConfig,
    design: DesignSpec,
    budget: int,
    seed,
) -> tuple[SparsityPattern, float | None, SeriesFunction | ConstantFunction]:
    """Hierarchical draw: pattern, rescaling level, then a truncated path.

    The empty pattern carries the standard-normal constant-function prior
    and no rescaling level.
    """
    rng = np.random.default_rng(seed)
    gamma = sample_gamma(sp_cfg, rng)
    if gamma.cardinality == 0:
        return gamma, None, ConstantFunction(float(rng.standard_normal()))
    a = sample_rescaling(rs_cfg, gamma.cardinality, rng)
    constants = compute_constants(design.xi, a)
    spectrum = enumerate_spectrum(gamma, constants, budget)
    return gamma, a, sample_path(spectrum, rng)
