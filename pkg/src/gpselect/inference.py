"""Posterior computation: exact Gaussian marginal likelihood by
conjugacy, Metropolis-within-Gibbs over (pattern, log rescaling),
posterior summaries, and the decoupled Bayes selector.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Sequence

import numpy as np
from scipy.linalg import cho_factor, cho_solve, solve_triangular

from .eigen import SparsityPattern
from .prior import (
    RescalingPriorConfig,
    SparsityPriorConfig,
    rescaling_log_density,
    size_prior_pmf,
)

__all__ = [
    "Dataset",
    "ChainState",
    "ChainTrace",
    "PosteriorSummary",
    "log_marginal_likelihood",
    "MarginalCache",
    "metropolis_chain",
    "mcmc_run",
    "merge_traces",
    "summarize",
    "posterior_mean_predict",
    "decoupled_select",
]

_JITTERS = (0.0, 1e-10, 1e-8, 1e-6)
_MAX_N = 2000

DEFAULT_MOVE_PROBS = {"add": 0.25, "delete": 0.25, "swap": 0.2, "rescale": 0.3}
DEFAULT_RESCALE_STEP = 0.3


@dataclass(frozen=True)
class Dataset:
    """Regression data with known noise standard deviation."""

    X: np.ndarray
    y: np.ndarray
    sigma: float

    def __post_init__(self):
        X = np.asarray(self.X, dtype=float)
        y = np.asarray(self.y, dtype=float)
        object.__setattr__(self, "X", X)
        object.__setattr__(self, "y", y)
        if X.ndim != 2 or y.ndim != 1 or X.shape[0] != y.shape[0]:
            raise ValueError("X must be n x d and y length n")
        if X.shape[0] < 1:
            raise ValueError("need at least one observation")
        if X.shape[0] > _MAX_N:
            raise ValueError(f"n capped at {_MAX_N} (dense Cholesky)")
        if not (np.isfinite(X).all() and np.isfinite(y).all()):
            raise ValueError("non-finite entries in data")
        if self.sigma <= 0:
            raise ValueError("sigma must be positive")

    @property
    def n(self) -> int:
        return self.X.shape[0]

    @property
    def dim(self) -> int:
        return self.X.shape[1]


def _gram(data: Dataset, gamma: SparsityPattern, a: float) -> np.ndarray:
    idx = list(gamma.indices)
    if not idx:
        return np.ones((data.n, data.n))
    Xs = data.X[:, idx]
    sq = (
        np.sum(Xs**2, axis=1)[:, None]
        + np.sum(Xs**2, axis=1)[None, :]
        - 2.0 * Xs @ Xs.T
    )
    np.maximum(sq, 0.0, out=sq)
    return np.exp(-(a * a) * sq)


def _log_mvn_zero(K: np.ndarray, y: np.ndarray, sigma: float) -> float:
    """log N(y; 0, K + sigma^2 I) with jitter escalation on failure."""
    n = len(y)
    base = K + sigma * sigma * np.eye(n)
    for jit in _JITTERS:
        try:
            L = np.linalg.cholesky(base + jit * np.eye(n))
        except np.linalg.LinAlgError:
            continue
        alpha = solve_triangular(L, y, lower=True)
        return float(
            -0.5 * np.dot(alpha, alpha)
            - np.log(np.diag(L)).sum()
            - 0.5 * n * math.log(2.0 * math.pi)
        )
    raise np.linalg.LinAlgError(
        f"covariance not PD even with jitter {_JITTERS[-1]:g}; "
        "kernel matrix is numerically singular"
    )


def log_marginal_likelihood(
    data: Dataset, gamma: SparsityPattern, a: float
) -> float:
    """Exact log marginal of the data under the GP with pattern gamma and
    rescaling a; the empty pattern uses the rank-one constant-function
    prior."""
    return _log_mvn_zero(_gram(data, gamma, a), data.y, data.sigma)


class MarginalCache:
    """Marginal-likelihood evaluations memoized per dataset.

    Per-coordinate squared-distance matrices are precomputed once, the
    selected-coordinate sums are cached per pattern, and full marginals
    are cached keyed by (pattern, log a quantized at 1e-12).
    """

    def __init__(self, data: Dataset):
        self.data = data
        n = data.n
        self._coord_sq = [
            (data.X[:, i][:, None] - data.X[:, i][None, :]) ** 2
            for i in range(data.dim)
        ]
        self._ones = np.ones((n, n))
        self._sq_by_gamma: dict[tuple[int, ...], np.ndarray] = {}
        self._marginal: dict[tuple[tuple[int, ...], float], float] = {}

    def _sq_dist(self, gamma: SparsityPattern) -> np.ndarray:
        key = gamma.bits
        out = self._sq_by_gamma.get(key)
        if out is None:
            idx = gamma.indices
            if not idx:
                out = None
            else:
                out = self._coord_sq[idx[0]].copy()
                for i in idx[1:]:
                    out += self._coord_sq[i]
            self._sq_by_gamma[key] = out
        return out

    def log_marginal(self, gamma: SparsityPattern, log_a: float) -> float:
        key = (gamma.bits, round(log_a, 12))
        val = self._marginal.get(key)
        if val is None:
            sq = self._sq_dist(gamma)
            if sq is None:
                K = self._ones
            else:
                a = math.exp(log_a)
                K = np.exp(-(a * a) * sq)
            val = _log_mvn_zero(K, self.data.y, self.data.sigma)
            self._marginal[key] = val
        return val


@dataclass(frozen=True)
class ChainState:
    gamma: SparsityPattern
    log_a: float
    log_marginal: float
    log_prior: float


@dataclass
class ChainTrace:
    """Recorded MCMC states (every iteration, including repeats)."""

    states: list[ChainState] = field(default_factory=list)
    n_proposed: int = 0
    n_accepted: int = 0

    def __len__(self) -> int:
        return len(self.states)

    @property
    def acceptance_rate(self) -> float:
        return self.n_accepted / max(self.n_proposed, 1)


def metropolis_chain(
    rng: np.random.Generator,
    initial,
    log_target: Callable,
    propose: Callable,
    iters: int,
):
    """Generic Metropolis-Hastings driver.

    ``propose(rng, state) -> (candidate, log_hastings)`` where
    log_hastings = log q(state|candidate) - log q(candidate|state);
    a None candidate is an auto-reject.  Yields every visited state.
    """
    state = initial
    lp = log_target(state)
    chain = [state]
    accepted = 0
    for _ in range(iters):
        cand, log_h = propose(rng, state)
        if cand is not None:
            lp_cand = log_target(cand)
            log_ratio = lp_cand - lp + log_h
            if log_ratio >= 0.0 or math.log(rng.random()) < log_ratio:
                state, lp = cand, lp_cand
                accepted += 1
        chain.append(state)
    return chain, accepted


def _log_prior(
    gamma: SparsityPattern,
    log_a: float,
    log_size_prior: np.ndarray,
    rs_cfg: RescalingPriorConfig,
    d_n: int,
) -> float:
    g = gamma.cardinality
    lp = log_size_prior[g] - math.lgamma(d_n + 1) + math.lgamma(g + 1) + math.lgamma(
        d_n - g + 1
    )
    a = math.exp(log_a)
    # the empty model has no kernel; keep the joint density proper by
    # carrying the d=1 rescaling law for its inert level
    lp_a = rescaling_log_density(rs_cfg, max(g, 1), a)
    if lp_a == -math.inf:
        return -math.inf
    # density of log a includes the Jacobian a
    return lp + lp_a + log_a


def mcmc_run(
    data: Dataset,
    sp_cfg: SparsityPriorConfig,
    rs_cfg: RescalingPriorConfig,
    iters: int,
    seed,
    init: tuple[SparsityPattern, float] | None = None,
    move_probs: dict[str, float] | None = None,
    rescale_step: float = DEFAULT_RESCALE_STEP,
    cache: MarginalCache | None = None,
) -> ChainTrace:
    """Metropolis-Hastings over (gamma, log a)."""
    if iters < 1:
        raise ValueError("iters must be >= 1")
    if sp_cfg.d_n != data.dim:
        raise ValueError("size prior dimension must match data")
    moves = dict(DEFAULT_MOVE_PROBS if move_probs is None else move_probs)
    names = sorted(moves)
    probs = np.array([moves[k] for k in names], dtype=float)
    probs /= probs.sum()

    rng = np.random.default_rng(seed)
    cache = cache or MarginalCache(data)
    with np.errstate(divide="ignore"):
        log_q = np.log(size_prior_pmf(sp_cfg))
    d_n = data.dim

    if init is None:
        g0 = SparsityPattern.empty(d_n)
        if not math.isfinite(log_q[0]):
            # size law excludes the empty pattern; start from a singleton
            g0 = SparsityPattern.from_indices(d_n, [int(rng.integers(d_n))])
        a0 = rs_cfg.floor * 1.5
        init = (g0, math.log(a0))
    gamma, log_a = init

    def make_state(g: SparsityPattern, la: float) -> ChainState | None:
        lp = _log_prior(g, la, log_q, rs_cfg, d_n)
        if lp == -math.inf:
            return None
        return ChainState(g, la, cache.log_marginal(g, la), lp)

    state = make_state(gamma, log_a)
    if state is None:
        raise ValueError("initial state has zero prior probability")

    def log_target(s: ChainState) -> float:
        return s.log_marginal + s.log_prior

    def propose(r: np.random.Generator, s: ChainState):
        move = names[r.choice(len(names), p=probs)]
        bits = s.gamma.bits
        ones = [i for i, b in enumerate(bits) if b]
        zeros = [i for i, b in enumerate(bits) if not b]
        if move == "add":
            if not zeros:
                return None, 0.0
            i = zeros[r.integers(len(zeros))]
            new = list(bits)
            new[i] = 1
            g = SparsityPattern(tuple(new))
            log_h = math.log(len(zeros)) - math.log(len(ones) + 1)
            cand = make_state(g, s.log_a)
            return cand, log_h
        if move == "delete":
            if not ones:
                return None, 0.0
            i = ones[r.integers(len(ones))]
            new = list(bits)
            new[i] = 0
            g = SparsityPattern(tuple(new))
            log_h = math.log(len(ones)) - math.log(len(zeros) + 1)
            cand = make_state(g, s.log_a)
            return cand, log_h
        if move == "swap":
            if not ones or not zeros:
                return None, 0.0
            i = ones[r.integers(len(ones))]
            j = zeros[r.integers(len(zeros))]
            new = list(bits)
            new[i], new[j] = 0, 1
            cand = make_state(SparsityPattern(tuple(new)), s.log_a)
            return cand, 0.0
        # rescale: symmetric Gaussian walk on log a
        la = s.log_a + rescale_step * r.standard_normal()
        return make_state(s.gamma, la), 0.0

    states, accepted = metropolis_chain(rng, state, log_target, propose, iters)
    return ChainTrace(states=states, n_proposed=iters, n_accepted=accepted)


def merge_traces(traces: Sequence[ChainTrace], burn_in: int) -> list[ChainState]:
    """Post-burn-in states pooled across chains."""
    out: list[ChainState] = []
    for t in traces:
        if burn_in >= len(t):
            raise ValueError("burn_in must be smaller than trace length")
        out.extend(t.states[burn_in:])
    return out


@dataclass(frozen=True)
class PosteriorSummary:
    inclusion_probs: np.ndarray
    top_models: list[tuple[tuple[int, ...], float]]
    prob_true_model: float | None = None
    fp_mass: float | None = None
    fn_mass: float | None = None
    other_mass: float | None = None
    l2_error_of_mean: float | None = None


def classify_pattern(
    bits: tuple[int, ...], truth_bits: tuple[int, ...]
) -> str:
    """'true', 'fp' (strict superset), or 'fn' (misses a true coordinate)."""
    if bits == truth_bits:
        return "true"
    if all(t <= b for t, b in zip(truth_bits, bits)):
        return "fp"
    return "fn"


def summarize(
    states: Sequence[ChainState] | Sequence[ChainTrace],
    data: Dataset | None = None,
    truth: tuple[SparsityPattern, Callable] | None = None,
    burn_in: int = 0,
    xi: float = 1.0,
    n_fresh: int = 10_000,
    seed=0,
    max_predict_states: int = 200,
) -> PosteriorSummary:
    """Frequencies over post-burn-in states, FP/FN masses relative to the
    truth, and the L2(Q) error of the posterior mean on fresh design
    draws."""
    if states and isinstance(states[0], ChainTrace):
        pool = merge_traces(states, burn_in)
    else:
        if burn_in >= len(states):
            raise ValueError("burn_in must be smaller than trace length")
        pool = list(states[burn_in:])
    if not pool:
        raise ValueError("no states to summarize")

    d_n = pool[0].gamma.dim
    counts: dict[tuple[int, ...], int] = {}
    incl = np.zeros(d_n)
    for s in pool:
        counts[s.gamma.bits] = counts.get(s.gamma.bits, 0) + 1
        incl += np.asarray(s.gamma.bits)
    total = len(pool)
    incl /= total
    top = sorted(counts.items(), key=lambda kv: -kv[1])
    top_models = [(bits, cnt / total) for bits, cnt in top[:10]]

    if truth is None:
        return PosteriorSummary(inclusion_probs=incl, top_models=top_models)

    gamma_star, f_star = truth
    masses = {"true": 0.0, "fp": 0.0, "fn": 0.0}
    for bits, cnt in counts.items():
        masses[classify_pattern(bits, gamma_star.bits)] += cnt / total
    other = 1.0 - sum(masses.values())

    l2_err = None
    if data is not None:
        rng = np.random.default_rng(seed)
        x_new = rng.standard_normal((n_fresh, d_n)) * xi
        pred = posterior_mean_predict(
            pool, data, x_new, max_states=max_predict_states
        )
        l2_err = float(np.sqrt(np.mean((pred - f_star(x_new)) ** 2)))

    return PosteriorSummary(
        inclusion_probs=incl,
        top_models=top_models,
        prob_true_model=masses["true"],
        fp_mass=masses["fp"],
        fn_mass=masses["fn"],
        other_mass=other,
        l2_error_of_mean=l2_err,
    )


def _conditional_mean(
    data: Dataset, gamma: SparsityPattern, a: float, x_new: np.ndarray
) -> np.ndarray:
    K = _gram(data, gamma, a) + data.sigma**2 * np.eye(data.n)
    cf = cho_factor(K, lower=True)
    alpha = cho_solve(cf, data.y)
    idx = list(gamma.indices)
    if not idx:
        k_x = np.ones((x_new.shape[0], data.n))
    else:
        Xn = x_new[:, idx]
        Xs = data.X[:, idx]
        sq = (
            np.sum(Xn**2, axis=1)[:, None]
            + np.sum(Xs**2, axis=1)[None, :]
            - 2.0 * Xn @ Xs.T
        )
        np.maximum(sq, 0.0, out=sq)
        k_x = np.exp(-(a * a) * sq)
    return k_x @ alpha


def posterior_mean_predict(
    states: Sequence[ChainState],
    data: Dataset,
    x_new,
    burn_in: int = 0,
    max_states: int = 200,
) -> np.ndarray:
    """Trace-averaged GP conditional mean at the new points.

    Distinct (gamma, a) values are weighted by visit frequency; at most
    ``max_states`` of the most-visited distinct states are used.
    """
    pool = list(states[burn_in:])
    if not pool:
        raise ValueError("empty trace")
    x_arr = np.atleast_2d(np.asarray(x_new, dtype=float))
    weights: dict[tuple[tuple[int, ...], float], int] = {}
    reps: dict[tuple[tuple[int, ...], float], ChainState] = {}
    for s in pool:
        key = (s.gamma.bits, round(s.log_a, 12))
        weights[key] = weights.get(key, 0) + 1
        reps[key] = s
    items = sorted(weights.items(), key=lambda kv: -kv[1])[:max_states]
    total = sum(cnt for _, cnt in items)
    out = np.zeros(x_arr.shape[0])
    for key, cnt in items:
        s = reps[key]
        out += (cnt / total) * _conditional_mean(
            data, s.gamma, math.exp(s.log_a), x_arr
        )
    return out


def decoupled_select(
    f_bar: Callable,
    design_sample: np.ndarray,
    lam: float,
    candidates: Sequence[SparsityPattern],
    penalty: Callable[[int], float] = lambda k: float(k),
    xi: float = 1.0,
    n_mc: int = 64,
    seed=0,
) -> SparsityPattern:
    """Formal Bayes selector: argmin of the projection loss plus a
    complexity penalty.

    The projection of the posterior mean onto a pattern integrates out
    the excluded coordinates with fresh Gaussian draws; ties break
    toward smaller patterns, then lexicographically.
    """
    if not candidates:
        raise ValueError("candidate set must be non-empty")
    rng = np.random.default_rng(seed)
    x = np.atleast_2d(np.asarray(design_sample, dtype=float))
    n, d = x.shape
    base = np.asarray(f_bar(x), dtype=float)

    scored = []
    for gamma in candidates:
        excluded = [i for i in range(d) if not gamma.bits[i]]
        if not excluded:
            proj = base
        else:
            acc = np.zeros(n)
            for _ in range(n_mc):
                xm = x.copy()
                xm[:, excluded] = rng.standard_normal((n, len(excluded))) * xi
                acc += np.asarray(f_bar(xm), dtype=float)
            proj = acc / n_mc
        loss = float(np.mean((base - proj) ** 2)) + lam * penalty(gamma.cardinality)
        scored.append((loss, gamma.cardinality, gamma.bits, gamma))
    scored.sort(key=lambda t: (t[0], t[1], t[2]))
    return scored[0][3]
