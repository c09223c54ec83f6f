"""Estimator wrapper around the sampler with the usual fit/transform API."""

import numpy as np
from scipy.special import ndtr
from sklearn.base import BaseEstimator, TransformerMixin
from sklearn.utils.validation import check_array, check_is_fitted

from .copula import build_pseudodata, normal_quantile
from .errors import DataError
from .gibbs import run_chain
from .model import Hyperparams
from .postprocess import FitResult
from .rngdist import RngStream


def _truncated_mean(mu, sigma, lo, hi):
    # posterior mean of a normal restricted to (lo, hi); adequate in the
    # central region where the estimator operates
    a = (lo - mu) / sigma
    b = (hi - mu) / sigma
    pdf = lambda x: np.exp(-0.5 * x * x) / np.sqrt(2.0 * np.pi)
    num = pdf(a) - pdf(b)
    den = np.maximum(ndtr(b) - ndtr(a), 1e-300)
    out = mu + sigma * num / den
    return np.clip(out, np.where(np.isfinite(lo), lo, -np.inf),
                   np.where(np.isfinite(hi), hi, np.inf))


class SegmentedCopulaFactorModel(BaseEstimator, TransformerMixin):
    """Gaussian copula factor model for counts with inflated low values.

    Counts at or below `m` are treated as censored intervals of a latent
    Gaussian; larger counts enter through their empirical quantiles. A
    Dirichlet-Laplace prior shrinks surplus loading columns so the number of
    active factors is estimated rather than fixed.

    Parameters
    ----------
    k_max : int
        Upper bound on the number of factors.
    m : int
        Inflation cap; counts 0..m are modeled as latent intervals.
    alpha : float
        Dirichlet-Laplace concentration; smaller shrinks harder.
    a_sigma, b_sigma : float
        Inverse-gamma prior on the noise variances.
    iterations, burn_in, thin : int
        Sweep budget and thinning of the sampler.
    seed : int
        Stream key; fits are bit-reproducible for a fixed key.
    dl_mode : str
        'elementwise' (default) or the experimental 'columnwise' shrinkage.
    save_scores : bool
        Keep every stored score draw (memory heavy) instead of the mean.
    progress_every : int
        Sweeps between progress lines on stderr; 0 silences them.
    refine_passes : int
        Fixed-point passes used by transform on new data.

    Attributes
    ----------
    loadings_ : (p, k_max) posterior-mean loadings on the correlation scale;
        each row satisfies ||row||^2 + noise share = 1.
    noise_variance_ : (p,) posterior-mean noise share on the same scale.
    scores_ : (n, k_max) posterior-mean factor scores of the training cells.
    thresholds_ : (p, m+1) posterior-mean segmentation thresholds.
    k_hat_ : selected factor count.
    significant_factors_ : column indices of the active factors.
    chain_ : stored draws (a Chain).
    """

    def __init__(self, k_max=8, m=1, alpha=0.5, a_sigma=0.1, b_sigma=0.1,
                 iterations=10000, burn_in=5000, thin=1, seed=0,
                 dl_mode="elementwise", save_scores=False, progress_every=0,
                 refine_passes=2):
        self.k_max = k_max
        self.m = m
        self.alpha = alpha
        self.a_sigma = a_sigma
        self.b_sigma = b_sigma
        self.iterations = iterations
        self.burn_in = burn_in
        self.thin = thin
        self.seed = seed
        self.dl_mode = dl_mode
        self.save_scores = save_scores
        self.progress_every = progress_every
        self.refine_passes = refine_passes

    def _hyperparams(self):
        return Hyperparams(
            k_max=self.k_max, m=self.m, alpha=self.alpha,
            a_sigma=self.a_sigma, b_sigma=self.b_sigma,
            iterations=self.iterations, burn_in=self.burn_in,
            thin=self.thin, seed=self.seed, dl_mode=self.dl_mode,
        )

    def fit(self, X, y=None):
        X = check_array(X, dtype=float)
        if np.any(X < 0):
            raise DataError("counts must be nonnegative")
        hp = self._hyperparams()
        pd = build_pseudodata(X, hp.m)
        chain = run_chain(
            pd, hp, RngStream(hp.seed),
            save_scores=self.save_scores,
            progress_every=self.progress_every,
        )
        result = FitResult.from_chain(chain)
        self.n_features_in_ = X.shape[1]
        self.pseudodata_ = pd
        self.chain_ = chain
        self.fit_result_ = result
        self.loadings_ = result.lambda_mean
        self.noise_variance_ = result.sigma2_mean
        self.scores_ = result.scores_mean
        self.thresholds_ = result.delta_mean
        self.psi_ = result.psi_mean
        self.k_hat_ = result.k_hat
        self.significant_factors_ = result.significant_factors
        return self

    def transform(self, X):
        """Conditional-mean factor scores of X under the posterior-mean
        parameters, restricted to the significant factors."""
        check_is_fitted(self, "loadings_")
        X = check_array(X, dtype=float)
        if X.shape[1] != self.n_features_in_:
            raise DataError(
                f"expected {self.n_features_in_} genes, got {X.shape[1]}"
            )
        if np.any(X < 0):
            raise DataError("counts must be nonnegative")

        # loadings_ and noise_variance_ live on the correlation scale, so the
        # factor relation z = loadings @ u + noise holds for the latent z
        # directly; no working-scale rescale is needed here
        lam = self.loadings_
        sigma2 = self.noise_variance_
        delta = self.thresholds_
        p = lam.shape[0]
        m = int(self.m)

        low = X <= m
        if np.any(X[low] != np.round(X[low])):
            raise DataError("low counts must be integers")
        z = np.empty_like(X)
        for j in range(p):
            obs = ~low[:, j]
            if np.any(obs):
                u = self.pseudodata_.cdfs[j].evaluate(X[obs, j])
                z[obs, j] = normal_quantile(u)
        dl = np.concatenate([np.full((p, 1), -np.inf), delta], axis=1)
        rows, cols = np.nonzero(low)
        lev = X[rows, cols].astype(int)
        z[rows, cols] = np.where(
            lev == 0, delta[cols, 0] - 1.0, 0.5 * (dl[cols, lev] + dl[cols, lev + 1])
        )

        k = lam.shape[1]
        lam_over_sig = lam / sigma2[:, None]
        v = np.linalg.inv(lam.T @ lam_over_sig + np.eye(k))
        proj = lam_over_sig @ v
        scores = z @ proj
        for _ in range(int(self.refine_passes)):
            mean = scores @ lam.T
            z[rows, cols] = _truncated_mean(
                mean[rows, cols], np.sqrt(sigma2[cols]),
                dl[cols, lev], dl[cols, lev + 1],
            )
            scores = z @ proj
        return scores[:, self.significant_factors_]
