"""Posterior summaries: factor-count selection, fit results, the
distance-based rank metric, and posterior predictive draws.

Factor scores and loadings are only identified up to rotation and sign, so
accuracy is measured on row-distance matrices, which rotations leave alone.
"""

import warnings
from dataclasses import dataclass, field

import numpy as np
from scipy.spatial.distance import pdist
from scipy.special import ndtr
from scipy.stats import rankdata

from .errors import ArgumentError
from .model import compute_correlation, compute_psi
from .rngdist import sample_std_normal

# ============================================================
# Factor-count selection
# ============================================================

# below this spread the norms are considered indistinguishable
_NORM_SPREAD_TOL = 1e-8


def khat_one_iteration(Lambda_draw):
    """Count active columns in one loadings draw.

    Two-means on the column norms, centroids seeded at the extremes and
    iterated to convergence; the active count is the size of the cluster
    with the larger centroid. Degenerate spreads count every column.
    """
    Lambda_draw = np.asarray(Lambda_draw, dtype=float)
    norms = np.sqrt((Lambda_draw * Lambda_draw).sum(axis=0))
    k_max = norms.size
    if k_max == 1:
        return 1
    if norms.max() - norms.min() < _NORM_SPREAD_TOL:
        return k_max

    c_lo, c_hi = norms.min(), norms.max()
    assign = None
    for _ in range(1000):
        new_assign = np.abs(norms - c_hi) <= np.abs(norms - c_lo)
        if assign is not None and np.array_equal(new_assign, assign):
            break
        assign = new_assign
        if assign.all() or not assign.any():
            break
        c_hi = norms[assign].mean()
        c_lo = norms[~assign].mean()
    return int(assign.sum())


def estimate_k(chain):
    """Mode of the per-draw active-column counts, ties toward fewer."""
    counts = np.bincount(np.asarray(chain.k_hat_per_iter, dtype=int))
    return int(counts.argmax())


def select_factors(lambda_mean, k_hat):
    """Indices of the k_hat largest-norm columns, descending norm, ties
    toward the lower index."""
    lambda_mean = np.asarray(lambda_mean, dtype=float)
    if not (1 <= k_hat <= lambda_mean.shape[1]):
        raise ArgumentError("k_hat out of range")
    norms = np.sqrt((lambda_mean * lambda_mean).sum(axis=0))
    order = np.argsort(-norms, kind="stable")
    return np.array(order[:k_hat], dtype=int)


# ============================================================
# Fit summary
# ============================================================


@dataclass
class FitResult:
    """Posterior means on the identified correlation scale.

    The likelihood pins only z = W / sqrt(psi), so each gene's raw loading
    row carries an arbitrary scale that drifts over the chain. Every draw is
    therefore row-normalized by sqrt(psi) before averaging: lambda_mean rows
    and sigma2_mean (the residual share) satisfy ||row||^2 + share = 1, and
    together they reproduce the latent correlation matrix. psi_mean keeps
    the raw working-scale variances as a diagnostic.
    """

    lambda_mean: np.ndarray
    sigma2_mean: np.ndarray
    scores_mean: np.ndarray
    delta_mean: np.ndarray
    psi_mean: np.ndarray
    k_hat: int
    significant_factors: np.ndarray
    warnings: list = field(default_factory=list)

    @classmethod
    def from_chain(cls, chain):
        k_hat = estimate_k(chain)
        notes = _chain_health(chain)
        for msg in notes:
            warnings.warn(msg, RuntimeWarning, stacklevel=2)
        psi_draws = (chain.Lambda_draws**2).sum(axis=2) + chain.sigma2_draws
        lam_norm = chain.Lambda_draws / np.sqrt(psi_draws)[:, :, None]
        lambda_mean = lam_norm.mean(axis=0)
        return cls(
            lambda_mean=lambda_mean,
            sigma2_mean=(chain.sigma2_draws / psi_draws).mean(axis=0),
            scores_mean=chain.scores_mean,
            delta_mean=chain.delta_draws.mean(axis=0),
            psi_mean=psi_draws.mean(axis=0),
            k_hat=k_hat,
            significant_factors=select_factors(lambda_mean, k_hat),
            warnings=notes,
        )


def _chain_health(chain):
    # a column whose leading loading keeps flipping sign averages toward
    # zero and poisons the posterior-mean summaries
    notes = []
    s, p, k = chain.Lambda_draws.shape
    if s < 2:
        return notes
    lead = np.abs(chain.Lambda_draws.mean(axis=0)).argmax(axis=0)
    for h in range(k):
        seq = np.sign(chain.Lambda_draws[:, lead[h], h])
        seq = seq[seq != 0]
        if seq.size < 2:
            continue
        flips = np.mean(seq[1:] != seq[:-1])
        if flips > 0.10:
            notes.append(
                f"column {h}: leading loading changed sign in {flips:.0%} of "
                "stored draws; posterior-mean summaries may be unreliable"
            )
    return notes


# ============================================================
# Rotation-invariant accuracy
# ============================================================


def distance_spearman(a, b):
    """Spearman correlation between the row-distance profiles of two
    configurations with matching row counts."""
    a = np.asarray(a, dtype=float)
    b = np.asarray(b, dtype=float)
    if a.ndim == 1:
        a = a[:, None]
    if b.ndim == 1:
        b = b[:, None]
    if a.shape[0] != b.shape[0]:
        raise ArgumentError("row counts must match")
    if a.shape[0] < 3:
        raise ArgumentError("need at least three rows")
    da = pdist(a)
    db = pdist(b)
    ra = rankdata(da)
    rb = rankdata(db)
    if ra.std() == 0 or rb.std() == 0:
        raise ArgumentError("distance ranks are constant; correlation undefined")
    return float(np.corrcoef(ra, rb)[0, 1])


# ============================================================
# Posterior predictive
# ============================================================


def ppc_sample(draw, cdfs, m, rng):
    """One synthetic cell from one stored draw.

    draw is (Lambda, sigma2, delta, tau) as returned by Chain.get_draw; the
    latent vector comes from the implied correlation matrix and maps through
    the thresholds and the per-gene empirical quantiles.
    """
    lam, sigma2, delta = draw[0], draw[1], draw[2]
    p = lam.shape[0]
    if len(cdfs) != p:
        raise ArgumentError("need one marginal per gene")
    omega = compute_correlation(lam, sigma2)
    chol = np.linalg.cholesky(omega)
    z = chol @ sample_std_normal(rng, size=p)

    out = np.empty(p)
    for j in range(p):
        idx = int(np.searchsorted(delta[j], z[j], side="left"))
        if idx <= m:
            out[j] = idx
        else:
            u = min(ndtr(z[j]), np.nextafter(1.0, 0.0))
            out[j] = cdfs[j].pseudo_inverse(u)
    return out


def ppc_replicates(chain, cdfs, rng):
    """One replicate per stored draw; rows are draws, columns genes."""
    s = chain.n_draws
    m = chain.hyperparams.m
    out = np.empty((s, len(cdfs)))
    for i in range(s):
        out[i] = ppc_sample(chain.get_draw(i), cdfs, m, rng)
    return out


def qq_table(observed, predictive, n_quantiles):
    """Paired quantiles of two samples at probabilities i/(Q+1)."""
    if n_quantiles < 1:
        raise ArgumentError("n_quantiles must be at least 1")
    observed = np.asarray(observed, dtype=float)
    predictive = np.asarray(predictive, dtype=float)
    if observed.size == 0 or predictive.size == 0:
        raise ArgumentError("both samples must be non-empty")
    probs = np.arange(1, n_quantiles + 1) / (n_quantiles + 1.0)
    return np.column_stack([np.quantile(observed, probs),
                            np.quantile(predictive, probs)])


def ks_distance(sample_a, sample_b):
    """Two-sample KS statistic: the largest gap between the empirical CDFs."""
    a = np.sort(np.asarray(sample_a, dtype=float))
    b = np.sort(np.asarray(sample_b, dtype=float))
    if a.size == 0 or b.size == 0:
        raise ArgumentError("both samples must be non-empty")
    grid = np.concatenate([a, b])
    fa = np.searchsorted(a, grid, side="right") / a.size
    fb = np.searchsorted(b, grid, side="right") / b.size
    return float(np.abs(fa - fb).max())
