"""Karhunen-Loeve expansion of the rescaled squared-exponential kernel
under a Gaussian design measure.

The univariate kernel exp(-a^2 (s-t)^2) paired with the design measure
N(0, xi^2) admits a closed-form eigen-expansion (Mercer series) with
geometric eigenvalues and Hermite-type eigenfunctions.  The multivariate
kernel restricted to a sparsity pattern is a tensor product of univariate
factors, so its spectrum is enumerated from integer multi-indices.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Iterator, Sequence

import numpy as np

__all__ = [
    "DesignSpec",
    "EigenConstants",
    "SparsityPattern",
    "EigenSpectrum",
    "SeriesFunction",
    "EigenfunctionOverflow",
    "compute_constants",
    "univariate_eigenvalue",
    "eigenfunction_eval",
    "enumerate_spectrum",
    "truncation_budget",
    "kernel_eval",
    "sample_path",
]

# Hermite recurrence values are renormalized past this magnitude.
_RESCALE_THRESHOLD = 1e120
_MAX_HERMITE_DEGREE = 512


class EigenfunctionOverflow(ArithmeticError):
    """Eigenfunction magnitude exceeds float range; never returned as inf."""


@dataclass(frozen=True)
class DesignSpec:
    """Gaussian design N(0, xi^2 I_dim); xi^2 > 2/e unless unsafe=True."""

    dim: int
    xi: float
    unsafe: bool = False

    def __post_init__(self):
        if self.dim < 1:
            raise ValueError(f"dim must be >= 1, got {self.dim}")
        if self.xi <= 0:
            raise ValueError(f"xi must be positive, got {self.xi}")
        if not self.unsafe and self.xi**2 <= 2.0 / math.e:
            raise ValueError(
                f"xi^2 = {self.xi ** 2:.6g} <= 2/e; pass unsafe=True to override"
            )


@dataclass(frozen=True)
class EigenConstants:
    """Derived constants of the univariate eigen-expansion."""

    v1: float
    v2: float
    v3: float
    V: float
    B: float
    a: float
    xi: float


def compute_constants(xi: float, a: float) -> EigenConstants:
    """Constants of the SE-kernel eigen-expansion for design sd ``xi``
    and rescaling level ``a``."""
    if xi <= 0:
        raise ValueError(f"xi must be positive, got {xi}")
    if a <= 0:
        raise ValueError(f"a must be positive, got {a}")
    v1 = 1.0 / (4.0 * xi * xi)
    v2 = a * a
    v3 = math.sqrt(v1 * v1 + 2.0 * v1 * v2)
    V = v1 + v2 + v3
    B = v2 / V
    return EigenConstants(v1=v1, v2=v2, v3=v3, V=V, B=B, a=a, xi=xi)


def univariate_eigenvalue(c: EigenConstants, j: int) -> float:
    """j-th eigenvalue sqrt(2 v1 / V) * B^j of the univariate expansion."""
    if j < 0:
        raise ValueError(f"j must be non-negative, got {j}")
    return math.sqrt(2.0 * c.v1 / c.V) * c.B**j


def _log_norm_const(c: EigenConstants, j: int) -> float:
    # N_j chosen so that the eigenfunctions are orthonormal in L2(N(0, xi^2)):
    # N_j = (v3/v1)^(1/4) / sqrt(2^j j!)
    return 0.25 * math.log(c.v3 / c.v1) - 0.5 * (
        j * math.log(2.0) + math.lgamma(j + 1)
    )


def eigenfunction_eval(c: EigenConstants, j: int, x) -> np.ndarray | float:
    """Orthonormalized eigenfunction phi_j at x (scalar or array).

    phi_j(x) = N_j exp(-(v3 - v1) x^2) H_j(sqrt(2 v3) x) with physicists'
    Hermite H_j via the three-term recurrence.  The recurrence carries a
    per-element log-scale factor so large j*x saturates into an explicit
    error rather than a silent infinity.
    """
    if j < 0:
        raise ValueError(f"j must be non-negative, got {j}")
    if j > _MAX_HERMITE_DEGREE:
        raise ValueError(f"Hermite degree capped at {_MAX_HERMITE_DEGREE}")
    x_arr = np.asarray(x, dtype=float)
    scalar = x_arr.ndim == 0
    x_arr = np.atleast_1d(x_arr)

    y = math.sqrt(2.0 * c.v3) * x_arr
    h_prev = np.ones_like(y)  # H_0
    h_curr = 2.0 * y if j >= 1 else h_prev
    log_scale = np.zeros_like(y)
    for k in range(1, j):
        h_next = 2.0 * y * h_curr - 2.0 * k * h_prev
        h_prev, h_curr = h_curr, h_next
        big = np.abs(h_curr) > _RESCALE_THRESHOLD
        if np.any(big):
            h_prev[big] /= _RESCALE_THRESHOLD
            h_curr[big] /= _RESCALE_THRESHOLD
            log_scale[big] += math.log(_RESCALE_THRESHOLD)
    h = h_prev if j == 0 else h_curr

    log_mag = (
        np.log(np.abs(h), out=np.full_like(h, -np.inf), where=h != 0)
        + log_scale
        - (c.v3 - c.v1) * x_arr**2
        + _log_norm_const(c, j)
    )
    if np.any(log_mag > 700.0):
        raise EigenfunctionOverflow(
            f"eigenfunction j={j} overflows at |x| up to {np.max(np.abs(x_arr)):.3g}"
        )
    out = np.sign(h) * np.exp(log_mag)
    return float(out[0]) if scalar else out


@dataclass(frozen=True)
class SparsityPattern:
    """Binary inclusion vector with cached cardinality."""

    bits: tuple[int, ...]
    cardinality: int = field(init=False)

    def __post_init__(self):
        if any(b not in (0, 1) for b in self.bits):
            raise ValueError("bits must be 0/1")
        object.__setattr__(self, "cardinality", sum(self.bits))

    @classmethod
    def from_indices(cls, dim: int, indices: Sequence[int]) -> "SparsityPattern":
        bits = [0] * dim
        for i in indices:
            bits[i] = 1
        return cls(tuple(bits))

    @classmethod
    def full(cls, dim: int) -> "SparsityPattern":
        return cls((1,) * dim)

    @classmethod
    def empty(cls, dim: int) -> "SparsityPattern":
        return cls((0,) * dim)

    @property
    def dim(self) -> int:
        return len(self.bits)

    @property
    def indices(self) -> tuple[int, ...]:
        return tuple(i for i, b in enumerate(self.bits) if b)

    def __le__(self, other: "SparsityPattern") -> bool:
        return all(a <= b for a, b in zip(self.bits, other.bits))


def _compositions(total: int, parts: int) -> Iterator[tuple[int, ...]]:
    """Multi-indices of given total degree, lexicographically ascending."""
    if parts == 1:
        yield (total,)
        return
    for first in range(total + 1):
        for rest in _compositions(total - first, parts - 1):
            yield (first,) + rest


def degree_multiplicity(gamma_size: int, m: int) -> int:
    """Number of multi-indices of total degree m in gamma_size factors."""
    return math.comb(gamma_size + m - 1, m)


@dataclass(frozen=True)
class EigenSpectrum:
    """Ordered eigenvalues/multi-indices of the tensor-product kernel."""

    gamma: SparsityPattern
    constants: EigenConstants
    multi_indices: tuple[tuple[int, ...], ...]
    eigenvalues: np.ndarray

    def __len__(self) -> int:
        return len(self.multi_indices)

    @property
    def order(self) -> list[tuple[tuple[int, ...], float]]:
        return list(zip(self.multi_indices, self.eigenvalues.tolist()))

    @property
    def tail_bound(self) -> float:
        """1 - sum of retained eigenvalues (full trace is exactly 1)."""
        return max(0.0, 1.0 - float(self.eigenvalues.sum()))

    def eigenfunction(self, k: int, x) -> np.ndarray | float:
        """Tensor eigenfunction psi_k over the selected coordinates of x."""
        x_arr = np.atleast_2d(np.asarray(x, dtype=float))
        idx = self.gamma.indices
        mi = self.multi_indices[k]
        out = np.ones(x_arr.shape[0])
        for coord, j in zip(idx, mi):
            out = out * eigenfunction_eval(self.constants, j, x_arr[:, coord])
        return float(out[0]) if np.asarray(x).ndim == 1 else out


def enumerate_spectrum(
    gamma: SparsityPattern, c: EigenConstants, budget: int
) -> EigenSpectrum:
    """First >= budget spectrum entries in canonical order, rounded up so
    every included total degree is fully covered."""
    g = gamma.cardinality
    if g == 0:
        raise ValueError("empty pattern has no tensor spectrum")
    if budget < 1:
        raise ValueError(f"budget must be >= 1, got {budget}")
    mu0 = (2.0 * c.v1 / c.V) ** (g / 2.0)
    indices: list[tuple[int, ...]] = []
    values: list[float] = []
    m = 0
    while len(indices) < budget:
        block = sorted(_compositions(m, g))
        val = mu0 * c.B**m
        indices.extend(block)
        values.extend([val] * len(block))
        m += 1
    return EigenSpectrum(
        gamma=gamma,
        constants=c,
        multi_indices=tuple(indices),
        eigenvalues=np.asarray(values),
    )


def truncation_budget(gamma_size: int, c: EigenConstants, tol: float) -> int:
    """Smallest degree-complete truncation with eigenvalue tail <= tol."""
    if tol <= 0:
        raise ValueError("tol must be positive")
    mu0 = (2.0 * c.v1 / c.V) ** (gamma_size / 2.0)
    total = 0.0
    count = 0
    m = 0
    while True:
        mult = degree_multiplicity(gamma_size, m)
        total += mult * mu0 * c.B**m
        count += mult
        if 1.0 - total <= tol:
            return count
        m += 1
        if m > 100_000:
            raise RuntimeError("tail tolerance not reachable")


def kernel_eval(gamma: SparsityPattern, a: float, s, t) -> np.ndarray | float:
    """exp(-a^2 ||s_gamma - t_gamma||^2); norm over selected coordinates."""
    s_arr = np.asarray(s, dtype=float)
    t_arr = np.asarray(t, dtype=float)
    idx = list(gamma.indices)
    if not idx:
        return np.ones(np.broadcast(s_arr[..., 0], t_arr[..., 0]).shape) if (
            s_arr.ndim > 1 or t_arr.ndim > 1
        ) else 1.0
    diff = s_arr[..., idx] - t_arr[..., idx]
    sq = np.sum(diff**2, axis=-1)
    out = np.exp(-(a**2) * sq)
    return float(out) if np.ndim(out) == 0 else out


@dataclass(frozen=True)
class SeriesFunction:
    """Function given by coefficients in the tensor eigenbasis."""

    spectrum: EigenSpectrum
    coeffs: np.ndarray

    def __post_init__(self):
        if len(self.coeffs) != len(self.spectrum):
            raise ValueError("coefficient length must match spectrum truncation")

    @property
    def truncation(self) -> int:
        return len(self.coeffs)

    def l2_norm_sq(self) -> float:
        """Squared L2(Q) norm; equals sum of squared coefficients (Parseval)."""
        return float(np.dot(self.coeffs, self.coeffs))

    def __call__(self, x) -> np.ndarray | float:
        x_arr = np.atleast_2d(np.asarray(x, dtype=float))
        out = np.zeros(x_arr.shape[0])
        for k, coef in enumerate(self.coeffs):
            if coef != 0.0:
                out += coef * self.spectrum.eigenfunction(k, x_arr)
        return float(out[0]) if np.asarray(x).ndim == 1 else out


def sample_path(spectrum: EigenSpectrum, seed) -> SeriesFunction:
    """Truncated prior draw: coefficient j is Z_j sqrt(mu_j), Z iid N(0,1)."""
    rng = np.random.default_rng(seed)
    z = rng.standard_normal(len(spectrum))
    return SeriesFunction(spectrum=spectrum, coeffs=z * np.sqrt(spectrum.eigenvalues))
