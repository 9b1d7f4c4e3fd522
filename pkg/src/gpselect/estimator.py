"""scikit-learn style estimator wrapping the variable-selecting GP."""

from __future__ import annotations

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin
from sklearn.utils.validation import check_array, check_is_fitted, check_X_y

from .inference import (
    Dataset,
    MarginalCache,
    mcmc_run,
    merge_traces,
    posterior_mean_predict,
    summarize,
)
from .prior import RescalingPriorConfig, SparsityPriorConfig

__all__ = ["SparseGPRegressor"]


class SparseGPRegressor(BaseEstimator, RegressorMixin):
    """GP regression with stochastic variable selection.

    Fits by MCMC over (inclusion pattern, rescaling level); prediction
    averages GP conditional means over the posterior trace.

    Parameters
    ----------
    xi : design standard deviation assumed by the prior.
    sigma : known noise standard deviation.
    size_prior : "cap" or "penalized" model-size prior family.
    k : penalization strength for the "penalized" family.
    rate : exponential rate of the rescaling law.
    iters, burn_in, chains : MCMC budget.
    seed : base seed; chains derive independent streams.
    """

    def __init__(
        self,
        xi: float = 1.0,
        sigma: float = 0.5,
        size_prior: str = "cap",
        k: float = 1.0,
        rate: float = 1.0,
        iters: int = 2000,
        burn_in: int = 500,
        chains: int = 2,
        seed: int = 0,
    ):
        self.xi = xi
        self.sigma = sigma
        self.size_prior = size_prior
        self.k = k
        self.rate = rate
        self.iters = iters
        self.burn_in = burn_in
        self.chains = chains
        self.seed = seed

    def fit(self, X, y):
        X, y = check_X_y(X, y, y_numeric=True)
        data = Dataset(X=X, y=y, sigma=self.sigma)
        sp_cfg = SparsityPriorConfig(
            kind=self.size_prior, d_n=data.dim, n=max(data.n, 3), k=self.k
        )
        rs_cfg = RescalingPriorConfig(rate=self.rate, xi=self.xi)
        cache = MarginalCache(data)
        seeds = np.random.SeedSequence(self.seed).spawn(self.chains)
        self.traces_ = [
            mcmc_run(data, sp_cfg, rs_cfg, self.iters, s, cache=cache)
            for s in seeds
        ]
        self.data_ = data
        self.states_ = merge_traces(self.traces_, self.burn_in)
        summary = summarize(self.states_, xi=self.xi)
        self.inclusion_probs_ = summary.inclusion_probs
        self.top_models_ = summary.top_models
        self.n_features_in_ = data.dim
        return self

    def predict(self, X):
        check_is_fitted(self, "states_")
        X = check_array(X)
        return posterior_mean_predict(self.states_, self.data_, X)
