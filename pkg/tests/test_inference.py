"""Marginal likelihood, MH engine, posterior summaries, decoupled selection."""

import math

import numpy as np
import pytest
from scipy.linalg import cho_factor, cho_solve
from sklearn.base import clone
from sklearn.utils.estimator_checks import check_estimator

from gpselect.eigen import SparsityPattern, kernel_eval
from gpselect.estimator import SparseGPRegressor
from gpselect.inference import (
    Dataset,
    MarginalCache,
    RescalingPriorConfig,
    SparsityPriorConfig,
    classify_pattern,
    decoupled_select,
    log_marginal_likelihood,
    mcmc_run,
    merge_traces,
    metropolis_chain,
    posterior_mean_predict,
    summarize,
)


def toy_data(n=20, d=2, seed=0, sigma=0.5):
    rng = np.random.default_rng(seed)
    X = rng.normal(size=(n, d))
    y = np.cos(X[:, 0]) + sigma * rng.normal(size=n)
    return Dataset(X=X, y=y, sigma=sigma)


class TestMarginalLikelihood:
    def test_single_point_closed_form(self):
        data = Dataset(X=np.zeros((1, 1)), y=np.array([0.0]), sigma=1.0)
        g = SparsityPattern.from_indices(1, [0])
        # y ~ N(0, k(0,0) + 1) = N(0, 2)
        expect = -0.5 * math.log(2.0 * math.pi * 2.0)
        assert log_marginal_likelihood(data, g, 1.0) == pytest.approx(expect, rel=1e-12)

    def test_against_direct_dense_formula(self):
        data = toy_data(n=15)
        g = SparsityPattern.from_indices(2, [0])
        a = 1.7
        K = np.empty((15, 15))
        for i in range(15):
            for j in range(15):
                K[i, j] = kernel_eval(g, a, data.X[i], data.X[j])
        C = K + data.sigma**2 * np.eye(15)
        sign, logdet = np.linalg.slogdet(C)
        expect = -0.5 * (
            data.y @ np.linalg.solve(C, data.y) + logdet + 15 * math.log(2 * math.pi)
        )
        assert log_marginal_likelihood(data, g, a) == pytest.approx(expect, rel=1e-10)

    def test_permutation_invariance(self):
        data = toy_data(n=12)
        g = SparsityPattern.full(2)
        perm = np.random.default_rng(1).permutation(12)
        data_p = Dataset(X=data.X[perm], y=data.y[perm], sigma=data.sigma)
        assert log_marginal_likelihood(data, g, 2.0) == pytest.approx(
            log_marginal_likelihood(data_p, g, 2.0), rel=1e-10
        )

    def test_empty_pattern_constant_prior(self):
        # empty pattern: f is a single N(0,1) constant, so y ~ N(0, J + sigma^2 I)
        data = toy_data(n=8)
        g = SparsityPattern.empty(2)
        C = np.ones((8, 8)) + data.sigma**2 * np.eye(8)
        sign, logdet = np.linalg.slogdet(C)
        expect = -0.5 * (
            data.y @ np.linalg.solve(C, data.y) + logdet + 8 * math.log(2 * math.pi)
        )
        assert log_marginal_likelihood(data, g, 1.0) == pytest.approx(expect, rel=1e-10)

    def test_continuity_in_a(self):
        data = toy_data(n=10)
        g = SparsityPattern.full(2)
        v = [log_marginal_likelihood(data, g, a) for a in (1.0, 1.0 + 1e-7)]
        assert abs(v[1] - v[0]) < 1e-4

    def test_dataset_validation(self):
        with pytest.raises(ValueError):
            Dataset(X=np.array([[np.nan]]), y=np.array([1.0]), sigma=0.5)
        with pytest.raises(ValueError):
            Dataset(X=np.zeros((2, 1)), y=np.zeros(3), sigma=0.5)
        with pytest.raises(ValueError):
            Dataset(X=np.zeros((2, 1)), y=np.zeros(2), sigma=0.0)

    def test_cache_hits(self):
        data = toy_data(n=10)
        cache = MarginalCache(data)
        g = SparsityPattern.full(2)
        v1 = cache.log_marginal(g, math.log(2.0))
        v2 = cache.log_marginal(g, math.log(2.0))
        assert v1 == v2
        assert v1 == pytest.approx(log_marginal_likelihood(data, g, 2.0), rel=1e-12)


class TestMHEngine:
    def test_three_state_stationary(self):
        target = np.array([0.5, 0.3, 0.2])
        log_t = np.log(target)
        rng = np.random.default_rng(42)

        def propose(rng_, s):
            return (s + rng_.integers(1, 3)) % 3, 0.0

        states, n_acc = metropolis_chain(
            rng, 0, lambda s: log_t[s], propose, 200_000
        )
        freqs = np.bincount(states, minlength=3) / len(states)
        assert np.max(np.abs(freqs - target)) < 1e-2

    def test_self_proposal_always_accepted(self):
        rng = np.random.default_rng(0)
        states, n_acc = metropolis_chain(
            rng, 7, lambda s: 0.0, lambda r, s: (s, 0.0), 500
        )
        assert n_acc == 500

    def test_none_proposal_rejected(self):
        rng = np.random.default_rng(0)
        states, n_acc = metropolis_chain(
            rng, 7, lambda s: 0.0, lambda r, s: (None, 0.0), 100
        )
        assert n_acc == 0
        assert all(s == 7 for s in states)


class TestSamplerEndToEnd:
    def make_cfgs(self, d=2, n=40):
        sp = SparsityPriorConfig(kind="cap", d_n=d, n=n)
        rs = RescalingPriorConfig(rate=1.0, xi=1.0)
        return sp, rs

    def test_finds_active_variable(self):
        rng = np.random.default_rng(3)
        n = 60
        X = rng.normal(size=(n, 2))
        y = np.sin(2.0 * X[:, 0]) + 0.1 * rng.normal(size=n)
        data = Dataset(X=X, y=y, sigma=0.1)
        sp, rs = self.make_cfgs(2, n)
        trace = mcmc_run(data, sp, rs, iters=4000, seed=0)
        summ = summarize(
            [trace], burn_in=1000, truth=(SparsityPattern.from_indices(2, [0]), None)
        )
        assert summ.inclusion_probs[0] > 0.95
        assert summ.inclusion_probs[1] < 0.5
        assert summ.prob_true_model + summ.fp_mass > 0.5

    def test_deterministic_given_seed(self):
        data = toy_data(n=25)
        sp, rs = self.make_cfgs(2, 25)
        t1 = mcmc_run(data, sp, rs, iters=300, seed=5)
        t2 = mcmc_run(data, sp, rs, iters=300, seed=5)
        assert [s.gamma for s in t1.states] == [s.gamma for s in t2.states]
        assert [s.log_a for s in t1.states] == [s.log_a for s in t2.states]

    def test_rescaling_stays_above_floor(self):
        data = toy_data(n=25)
        sp, rs = self.make_cfgs(2, 25)
        trace = mcmc_run(data, sp, rs, iters=1500, seed=9)
        floor = rs.floor
        for s in trace.states:
            assert math.exp(s.log_a) >= floor * (1.0 - 1e-12)

    def test_penalized_family_starts_off_empty(self):
        # the penalized size law excludes |gamma| = 0, so the default start
        # must be a valid singleton
        data = toy_data(n=25)
        sp = SparsityPriorConfig(kind="penalized", d_n=2, n=25)
        rs = RescalingPriorConfig(rate=1.0, xi=1.0)
        trace = mcmc_run(data, sp, rs, iters=400, seed=2)
        assert all(s.gamma.cardinality >= 1 for s in trace.states)
        assert all(math.isfinite(s.log_prior) for s in trace.states)

    def test_merge_traces(self):
        data = toy_data(n=20)
        sp, rs = self.make_cfgs(2, 20)
        t1 = mcmc_run(data, sp, rs, iters=200, seed=1)
        t2 = mcmc_run(data, sp, rs, iters=200, seed=2)
        merged = merge_traces([t1, t2], burn_in=50)
        # each trace holds iters + 1 states including the start
        assert len(merged) == 2 * (201 - 50)


class TestSummaries:
    def test_classify(self):
        truth = (1, 1, 0, 0)
        assert classify_pattern((1, 1, 0, 0), truth) == "true"
        assert classify_pattern((1, 1, 1, 0), truth) == "fp"
        assert classify_pattern((1, 0, 0, 0), truth) == "fn"
        assert classify_pattern((1, 0, 1, 0), truth) == "fn"

    def test_classify_brute_force_partition(self):
        # every pattern is exactly one of true/fp/fn; fp iff strict superset
        import itertools

        truth = (0, 1, 1, 0)
        for bits in itertools.product((0, 1), repeat=4):
            cls = classify_pattern(bits, truth)
            superset = all(b >= t for b, t in zip(bits, truth))
            if bits == truth:
                assert cls == "true"
            elif superset:
                assert cls == "fp"
            else:
                assert cls == "fn"

    def test_masses_partition_unity(self):
        data = toy_data(n=30)
        sp = SparsityPriorConfig(kind="cap", d_n=2, n=30)
        rs = RescalingPriorConfig(rate=1.0, xi=1.0)
        trace = mcmc_run(data, sp, rs, iters=800, seed=4)
        summ = summarize(
            [trace], burn_in=200, truth=(SparsityPattern.from_indices(2, [0]), None)
        )
        total = summ.prob_true_model + summ.fp_mass + summ.fn_mass + summ.other_mass
        assert total == pytest.approx(1.0, abs=1e-12)
        assert sum(m for _, m in summ.top_models) <= 1.0 + 1e-12


class TestPrediction:
    def test_zero_observations_zero_mean(self):
        n = 10
        X = np.random.default_rng(0).normal(size=(n, 2))
        data = Dataset(X=X, y=np.zeros(n), sigma=0.5)
        from gpselect.inference import ChainState

        g = SparsityPattern.full(2)
        st = ChainState(gamma=g, log_a=0.0, log_marginal=0.0, log_prior=0.0)
        pred = posterior_mean_predict([st], data, X)
        assert np.allclose(pred, 0.0, atol=1e-12)

    def test_single_state_matches_direct_formula(self):
        data = toy_data(n=18)
        from gpselect.inference import ChainState

        g = SparsityPattern.from_indices(2, [0])
        a = 1.3
        st = ChainState(gamma=g, log_a=math.log(a), log_marginal=0.0, log_prior=0.0)
        x_new = np.random.default_rng(2).normal(size=(6, 2))
        pred = posterior_mean_predict([st], data, x_new)
        n = len(data.y)
        K = np.empty((n, n))
        for i in range(n):
            for j in range(n):
                K[i, j] = kernel_eval(g, a, data.X[i], data.X[j])
        Kx = np.empty((6, n))
        for i in range(6):
            for j in range(n):
                Kx[i, j] = kernel_eval(g, a, x_new[i], data.X[j])
        expect = Kx @ cho_solve(cho_factor(K + data.sigma**2 * np.eye(n)), data.y)
        assert np.allclose(pred, expect, rtol=1e-9)

    def test_near_interpolation_at_tiny_noise(self):
        rng = np.random.default_rng(5)
        n = 25
        X = rng.normal(size=(n, 1))
        y = np.sin(X[:, 0])
        data = Dataset(X=X, y=y, sigma=1e-4)
        from gpselect.inference import ChainState

        st = ChainState(
            gamma=SparsityPattern.full(1), log_a=0.0, log_marginal=0.0, log_prior=0.0
        )
        pred = posterior_mean_predict([st], data, X)
        assert np.max(np.abs(pred - y)) < 1e-2


class TestDecoupledSelection:
    def test_zero_penalty_keeps_full_model(self):
        rng = np.random.default_rng(0)
        design = rng.normal(size=(300, 3))

        def f_bar(x):
            return np.cos(x[:, 0]) + 0.5 * x[:, 1]

        cands = [
            SparsityPattern.full(3),
            SparsityPattern.from_indices(3, [0]),
            SparsityPattern.empty(3),
        ]
        pick = decoupled_select(f_bar, design, 0.0, cands, seed=1)
        assert pick == SparsityPattern.full(3)

    def test_huge_penalty_empties_model(self):
        rng = np.random.default_rng(0)
        design = rng.normal(size=(200, 3))
        cands = [SparsityPattern.full(3), SparsityPattern.empty(3)]
        pick = decoupled_select(
            lambda x: np.cos(x[:, 0]), design, 1e9, cands, seed=1
        )
        assert pick == SparsityPattern.empty(3)

    def test_recovers_relevant_coordinate(self):
        rng = np.random.default_rng(0)
        design = rng.normal(size=(400, 2))
        cands = [
            SparsityPattern.empty(2),
            SparsityPattern.from_indices(2, [0]),
            SparsityPattern.from_indices(2, [1]),
            SparsityPattern.full(2),
        ]
        pick = decoupled_select(
            lambda x: np.sin(1.5 * x[:, 1]), design, 0.05, cands, seed=3
        )
        assert pick == SparsityPattern.from_indices(2, [1])


class TestEstimator:
    def test_fit_predict_roundtrip(self):
        rng = np.random.default_rng(8)
        X = rng.normal(size=(50, 3))
        y = np.sin(2.0 * X[:, 0]) + 0.1 * rng.normal(size=50)
        est = SparseGPRegressor(sigma=0.1, iters=1500, burn_in=400, chains=2, seed=0)
        est.fit(X, y)
        assert est.n_features_in_ == 3
        assert est.inclusion_probs_[0] > 0.9
        pred = est.predict(X)
        assert pred.shape == (50,)
        assert np.mean((pred - np.sin(2.0 * X[:, 0])) ** 2) < 0.1

    def test_sklearn_protocol(self):
        est = SparseGPRegressor(iters=50, burn_in=10, chains=1)
        params = est.get_params()
        assert params["iters"] == 50
        cloned = clone(est)
        assert cloned.get_params() == params

    def test_rejects_bad_input(self):
        est = SparseGPRegressor(iters=50, burn_in=10, chains=1)
        with pytest.raises(ValueError):
            est.fit(np.array([[np.inf, 0.0]]), np.array([1.0]))
