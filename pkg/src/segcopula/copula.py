"""Copula-scale transforms: empirical CDFs, pseudodata, and segmentation.

Counts at or below the inflation cap m are modeled as latent Gaussian
intervals between per-gene thresholds; larger counts map through the scaled
empirical CDF onto fixed Gaussian pseudodata values.
"""

from dataclasses import dataclass, field

import numpy as np
from scipy.special import ndtri

from .errors import ArgumentError, DataError

# arguments to the normal quantile are clamped away from 0 and 1
QUANTILE_CLAMP = 1e-12


def normal_quantile(u):
    """Standard normal quantile with the argument clamped to [1e-12, 1-1e-12]."""
    u = np.clip(np.asarray(u, dtype=float), QUANTILE_CLAMP, 1.0 - QUANTILE_CLAMP)
    return ndtri(u)


# ============================================================
# Empirical CDF with the n/(n+1) shrink
# ============================================================


@dataclass
class EmpiricalCdf:
    """Scaled empirical CDF F(x) = (n/(n+1)) * #{x_i <= x} / n.

    support holds the distinct observed values in increasing order and
    cum_prob the CDF evaluated at each; the shrink keeps the top value off 1
    so its normal quantile stays finite.
    """

    support: np.ndarray
    cum_prob: np.ndarray
    n: int

    def evaluate(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.support, x, side="right")
        probs = np.concatenate([[0.0], self.cum_prob])
        out = probs[idx]
        return out if x.ndim else out.item()

    def pseudo_inverse(self, u):
        """Smallest support value v with F(v) >= u; top of support past the max."""
        u = np.asarray(u, dtype=float)
        if np.any(u < 0) or np.any(u >= 1):
            raise ArgumentError("pseudo-inverse argument must lie in [0, 1)")
        idx = np.searchsorted(self.cum_prob, u, side="left")
        idx = np.minimum(idx, len(self.support) - 1)
        out = self.support[idx]
        return out if u.ndim else out.item()


def fit_empirical_cdf(values):
    """Fit the scaled empirical CDF of a 1-d sample."""
    v = np.asarray(values, dtype=float)
    if v.ndim != 1 or v.size == 0:
        raise ArgumentError("need a non-empty 1-d sample")
    if np.any(~np.isfinite(v)):
        raise DataError("sample contains non-finite values")
    support, counts = np.unique(v, return_counts=True)
    n = v.size
    cum = np.cumsum(counts) / n * (n / (n + 1.0))
    return EmpiricalCdf(support=support, cum_prob=cum, n=n)


def cdf_pseudo_inverse(cdf, u):
    return cdf.pseudo_inverse(u)


# ============================================================
# Segmentation
# ============================================================


@dataclass
class SegmentationScheme:
    """Inflation cap m: counts 0..m are latent-interval coded, larger counts
    pass through the empirical CDF."""

    m: int = 1

    def __post_init__(self):
        if int(self.m) != self.m or self.m < 0:
            raise ArgumentError("m must be a nonnegative integer")
        self.m = int(self.m)


def segment(x_star, deltas, z, m):
    """Map latent values to counts: level d where delta_d < z <= delta_{d+1}
    (delta_0 = -inf), or x_star once z clears the top threshold.

    z and x_star may be scalars or matching arrays; deltas is the single
    gene's ordered threshold vector of length m + 1.
    """
    deltas = np.asarray(deltas, dtype=float)
    if deltas.shape != (m + 1,):
        raise ArgumentError(f"expected {m + 1} thresholds, got {deltas.shape}")
    z_arr = np.asarray(z, dtype=float)
    idx = np.searchsorted(deltas, z_arr, side="left")
    out = np.where(idx == m + 1, np.asarray(x_star, dtype=float), idx)
    if z_arr.ndim == 0:
        return out.item()
    return out


# ============================================================
# Pseudodata
# ============================================================


@dataclass
class PseudoData:
    """The sampler's view of a count matrix.

    zhat holds the fixed Gaussian pseudodata at observed entries (NaN where
    the entry is a low count); levels holds the low-count level (-1 where
    observed). cdfs are the fitted per-gene marginals, kept for simulation
    and posterior predictive draws.
    """

    zhat: np.ndarray
    levels: np.ndarray
    cdfs: list
    m: int
    low_mask: np.ndarray = field(init=False)
    obs_mask: np.ndarray = field(init=False)
    min_zhat: np.ndarray = field(init=False)

    def __post_init__(self):
        self.zhat = np.asarray(self.zhat, dtype=float)
        self.levels = np.asarray(self.levels, dtype=int)
        if self.zhat.shape != self.levels.shape or self.zhat.ndim != 2:
            raise ArgumentError("zhat and levels must be matching 2-d arrays")
        self.low_mask = self.levels >= 0
        self.obs_mask = ~self.low_mask
        if np.any(np.isnan(self.zhat[self.obs_mask])):
            raise ArgumentError("observed entries must carry finite pseudodata")
        if np.any(self.levels > self.m):
            raise ArgumentError("level exceeds the inflation cap")
        # per-gene smallest observed pseudo-value; +inf when a gene has none
        masked = np.where(self.obs_mask, self.zhat, np.inf)
        self.min_zhat = masked.min(axis=0)

    @property
    def n(self):
        return self.zhat.shape[0]

    @property
    def p(self):
        return self.zhat.shape[1]


def build_pseudodata(counts, seg):
    """Transform a count matrix into sampler pseudodata.

    counts may be a CountMatrix or a plain n x p array; seg is a
    SegmentationScheme or a bare integer m. Low counts (<= m) must be
    integers; observed entries get z = quantile(F(x)).
    """
    if isinstance(seg, int):
        seg = SegmentationScheme(m=seg)
    values = np.asarray(getattr(counts, "values", counts), dtype=float)
    if values.ndim != 2:
        raise DataError("count matrix must be 2-d")
    n, p = values.shape
    if n < 2:
        raise DataError("need at least two rows")
    if np.any(~np.isfinite(values)) or np.any(values < 0):
        raise DataError("counts must be finite and nonnegative")

    m = seg.m
    low = values <= m
    low_vals = values[low]
    if np.any(low_vals != np.round(low_vals)):
        bad = np.argwhere(low & (values != np.round(values)))[0]
        raise DataError(
            f"entry at row {bad[0]}, column {bad[1]} is a non-integer low count"
        )

    zhat = np.full((n, p), np.nan)
    levels = np.full((n, p), -1, dtype=int)
    levels[low] = values[low].astype(int)
    cdfs = []
    for j in range(p):
        cdf = fit_empirical_cdf(values[:, j])
        cdfs.append(cdf)
        obs_j = ~low[:, j]
        if np.any(obs_j):
            zhat[obs_j, j] = normal_quantile(cdf.evaluate(values[obs_j, j]))
    return PseudoData(zhat=zhat, levels=levels, cdfs=cdfs, m=m)
