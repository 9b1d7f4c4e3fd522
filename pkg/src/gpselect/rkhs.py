"""RKHS-as-ellipsoid toolkit: metric entropy of the unit ball, the
decentering functional, and closed-form bound evaluation.

The RKHS unit ball of the expanded kernel is isometric to the l2
ellipsoid with axes mu_j.  Entropy bounds come from a volume argument
on the truncated ellipsoid; the truncation index tau is driven by the
real solution m* of mu(m) = eps^2.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .eigen import EigenSpectrum, SeriesFunction, enumerate_spectrum

__all__ = [
    "Ellipsoid",
    "EntropyEstimate",
    "HypothesisViolation",
    "DecenteringResult",
    "SmoothnessSpec",
    "BoundValue",
    "lambert_w",
    "entropy_bounds",
    "decentering",
    "decentering_upper_bound",
    "decentering_lower_bound",
]

#: Published constant used in the entropy-bound hypothesis regime eps^-2 >= C_H (a xi)^|g|.
C_H = 1.0


def lambert_w(y: float) -> float:
    """Principal-branch Lambert W: solves w e^w = y for y >= 0.

    Halley iteration from a log-based initial guess; converges to
    relative residual 1e-12 in a handful of steps.
    """
    if y < 0:
        raise ValueError(f"principal branch requires y >= 0, got {y}")
    if y == 0.0:
        return 0.0
    if y > math.e:
        lg = math.log(y)
        w = lg - math.log(lg)
    else:
        w = y / math.e if y < 1.0 else math.log1p(y)
        w = max(w, 1e-300)
    for _ in range(100):
        ew = math.exp(w)
        f = w * ew - y
        if abs(f) <= 1e-12 * max(abs(y), 1e-300):
            break
        denom = ew * (w + 1.0) - (w + 2.0) * f / (2.0 * w + 2.0)
        w -= f / denom
    return w


@dataclass(frozen=True)
class Ellipsoid:
    """l2 ellipsoid isometric to the RKHS unit ball; axes are eigenvalues."""

    spectrum: EigenSpectrum

    def __post_init__(self):
        mu = self.spectrum.eigenvalues
        if np.any(mu <= 0) or np.any(np.diff(mu) > 0):
            raise ValueError("axes must be positive and weakly decreasing")

    @property
    def axes(self) -> np.ndarray:
        return self.spectrum.eigenvalues

    @property
    def truncation(self) -> int:
        return len(self.spectrum)


@dataclass(frozen=True)
class HypothesisViolation:
    """Report returned when the entropy-bound hypotheses fail."""

    epsilon: float
    reason: str


@dataclass(frozen=True)
class EntropyEstimate:
    epsilon: float
    m_star: float
    tau: int
    log_upper: float
    log_lower: float


def _floor_strict(x: float) -> int:
    """Greatest integer strictly less than x."""
    f = math.floor(x)
    return f - 1 if f == x else f


def entropy_bounds(
    ell: Ellipsoid, epsilon: float, c_h: float = C_H
) -> EntropyEstimate | HypothesisViolation:
    """Volume-argument bounds on log N(eps) of the RKHS unit ball.

    Returns a HypothesisViolation report (never raises) when the regime
    hypotheses on (a, xi, |gamma|, eps) do not hold.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    c = ell.spectrum.constants
    g = ell.spectrum.gamma.cardinality
    axi = c.a * c.xi
    log_inv_eps = math.log(1.0 / epsilon)
    if epsilon**-2 < c_h * axi**g:
        return HypothesisViolation(epsilon, f"eps^-2 < C_H (a xi)^{g}")
    if axi * log_inv_eps <= g:
        return HypothesisViolation(epsilon, "a xi log(1/eps) <= |gamma|")
    ratio_num = log_inv_eps - (g / 4.0) * math.log(c.V / (2.0 * c.v1))
    if not (0.5 <= ratio_num / log_inv_eps <= 2.0):
        return HypothesisViolation(
            epsilon, "log(1/eps) not comparable to its |gamma|-adjusted form"
        )

    m_star = (2.0 * log_inv_eps - (g / 2.0) * math.log(c.V / (2.0 * c.v1))) / math.log(
        1.0 / c.B
    )
    if m_star <= 0:
        return HypothesisViolation(epsilon, "m* <= 0")
    tau = math.comb(_floor_strict(m_star) + g, g)

    spectrum = ell.spectrum
    if len(spectrum) < tau + 1:
        spectrum = enumerate_spectrum(spectrum.gamma, c, tau + 1)
    log_mu = np.log(spectrum.eigenvalues[: tau + 1])
    log_upper = (
        2.0 * (tau + 1) * math.log(2.0)
        + (tau + 1) * log_inv_eps
        + 0.5 * float(log_mu.sum())
    )
    log_lower = (tau + 1) * math.log(2.0)
    return EntropyEstimate(
        epsilon=epsilon,
        m_star=m_star,
        tau=tau,
        log_upper=log_upper,
        log_lower=log_lower,
    )


@dataclass(frozen=True)
class DecenteringResult:
    epsilon: float
    inf_sq_norm: float
    multiplier: float
    coeffs: np.ndarray

    def residual_sq(self, target: np.ndarray) -> float:
        d = self.coeffs - target
        return float(np.dot(d, d))


def decentering(
    ell: Ellipsoid, target: SeriesFunction, epsilon: float
) -> DecenteringResult:
    """Exact minimum of sum(theta^2/mu) over the eps-ball around the target.

    Lagrange stationarity gives theta_j = f_j mu_j / (mu_j + nu); the
    multiplier nu solves the monotone constraint equation by bisection
    with a Newton polish.
    """
    if epsilon <= 0:
        raise ValueError("epsilon must be positive")
    if target.spectrum is not ell.spectrum and len(target.coeffs) != ell.truncation:
        raise ValueError("target must live in the ellipsoid's basis")
    mu = ell.axes
    f = np.asarray(target.coeffs, dtype=float)
    norm = math.sqrt(float(np.dot(f, f)))
    if norm <= epsilon:
        return DecenteringResult(epsilon, 0.0, 0.0, np.zeros_like(f))

    eps2 = epsilon * epsilon

    def constraint(nu: float) -> float:
        # squared distance of the optimal theta(nu) from f; increasing in nu
        r = nu / (mu + nu)
        return float(np.dot(f * f, r * r))

    r = epsilon / norm
    hi = float(mu.max()) * r / (1.0 - r)
    lo = 0.0
    # constraint(hi) >= eps2 by the one-coefficient bound
    nu = 0.5 * (lo + hi)
    for _ in range(200):
        val = constraint(nu)
        if abs(val - eps2) <= 1e-14 * eps2:
            break
        if val < eps2:
            lo = nu
        else:
            hi = nu
        # Newton step on the bracketed root, fall back to bisection
        grad = float(np.dot(f * f, 2.0 * nu * mu**2 / (mu + nu) ** 3))
        if grad > 0:
            cand = nu - (val - eps2) / grad
            nu = cand if lo < cand < hi else 0.5 * (lo + hi)
        else:
            nu = 0.5 * (lo + hi)
    else:
        raise ArithmeticError(
            f"decentering root-find did not converge; bracket [{lo:.3e}, {hi:.3e}]"
        )

    theta = f * mu / (mu + nu)
    inf_sq = float(np.dot(theta * theta, 1.0 / mu))
    return DecenteringResult(epsilon, inf_sq, nu, theta)


@dataclass(frozen=True)
class SmoothnessSpec:
    """Sobolev order beta with regularity cap alpha in (beta, beta(1+1/d0))."""

    beta: float
    alpha: float
    d0: int

    def __post_init__(self):
        if self.d0 < 1:
            raise ValueError("d0 must be a positive integer")
        if self.beta <= self.d0 / 2.0:
            raise ValueError(f"beta must exceed d0/2 = {self.d0 / 2}")
        if not (self.beta < self.alpha < self.beta * (1.0 + 1.0 / self.d0)):
            raise ValueError(
                f"alpha must lie in ({self.beta}, {self.beta * (1 + 1 / self.d0)})"
            )


@dataclass(frozen=True)
class BoundValue:
    """A bound reported in log scale plus the Fourier cutoff used."""

    log_value: float
    fourier_cutoff: float


def decentering_upper_bound(
    a: float,
    spec: SmoothnessSpec,
    sobolev_norm: float,
    epsilon: float,
    C: float | None = None,
) -> BoundValue:
    """Upper bound C (2 sqrt(pi))^d0 a^d0 exp(C eps^(-2/beta) / a^2), log scale.

    Defaults C to the squared Sobolev norm of the truth.
    """
    if a <= 0 or epsilon <= 0 or sobolev_norm <= 0:
        raise ValueError("a, sobolev_norm, epsilon must be positive")
    big_c = sobolev_norm**2 if C is None else C
    cutoff = epsilon ** (-1.0 / spec.beta)
    log_val = (
        math.log(big_c)
        + spec.d0 * math.log(2.0 * math.sqrt(math.pi))
        + spec.d0 * math.log(a)
        + big_c * epsilon ** (-2.0 / spec.beta) / (a * a)
    )
    return BoundValue(log_value=log_val, fourier_cutoff=cutoff)


def decentering_lower_bound(
    a: float,
    gamma_size: int,
    spec: SmoothnessSpec,
    xi: float,
    epsilon: float,
    C: float = 1.0,
    C_prime: float = 1.0,
) -> BoundValue:
    """Lower bound C eps^2 (c_xi a)^|g| exp(C' eps^(-2/alpha) min(xi^2, a^-2)),
    log scale, with c_xi = xi / sqrt(2)."""
    if a <= 0 or epsilon <= 0 or xi <= 0:
        raise ValueError("a, xi, epsilon must be positive")
    if gamma_size <= spec.d0:
        raise ValueError("gamma_size must exceed d0 (false positive pattern)")
    c_xi = xi / math.sqrt(2.0)
    cutoff = epsilon ** (-1.0 / spec.alpha)
    log_val = (
        math.log(C)
        + 2.0 * math.log(epsilon)
        + gamma_size * math.log(c_xi * a)
        + C_prime * epsilon ** (-2.0 / spec.alpha) * min(xi * xi, a**-2)
    )
    return BoundValue(log_value=log_val, fourier_cutoff=cutoff)
