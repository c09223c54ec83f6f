"""Seeded random streams and the distribution samplers the Gibbs kernel needs.

Everything draws through an explicit RngStream so that a run is a pure
function of (seed, stream_id). Streams are counter-based (Philox), so child
streams are independent without coordination.

The two non-library samplers live here: a region-adaptive truncated normal
(inverse CDF in the bulk, survival-scale inversion and exponential-proposal
rejection in far tails) and a generalized-inverse-Gaussian sampler using a
mode-shifted two-sided exponential envelope on the log scale, valid for all
proper parameter triples including negative order.
"""

import numpy as np
from scipy.special import ndtr, ndtri

from .errors import ArgumentError, NumericalError

# ============================================================
# Streams
# ============================================================


class RngStream:
    """Deterministic random stream keyed by (seed, stream_id).

    Identical keys give bit-identical draw sequences. `child` derives an
    independent stream for parallel work (one per chain, for instance).
    """

    def __init__(self, seed, stream_id=0):
        seed = int(seed)
        stream_id = int(stream_id)
        if not (0 <= seed < 2**64) or not (0 <= stream_id < 2**64):
            raise ArgumentError("seed and stream_id must be in [0, 2^64)")
        self.seed = seed
        self.stream_id = stream_id
        key = np.array([seed, stream_id], dtype=np.uint64)
        self.gen = np.random.Generator(np.random.Philox(key=key))

    def child(self, stream_id):
        return RngStream(self.seed, stream_id)

    # thin passthroughs so call sites read naturally
    def uniform(self, size=None):
        return self.gen.uniform(size=size)

    def standard_normal(self, size=None):
        return self.gen.standard_normal(size=size)

    def __repr__(self):
        return f"RngStream(seed={self.seed}, stream_id={self.stream_id})"


# ============================================================
# Elementary draws
# ============================================================


def sample_std_normal(rng, size=None):
    return rng.gen.standard_normal(size=size)


def sample_gamma(shape, rate, rng, size=None):
    """Gamma with the given shape and RATE (mean shape/rate)."""
    if np.any(np.asarray(shape) <= 0) or np.any(np.asarray(rate) <= 0):
        raise ArgumentError("gamma shape and rate must be positive")
    return rng.gen.gamma(shape, 1.0 / np.asarray(rate, dtype=float), size=size)


def sample_inverse_gamma(shape, scale, rng, size=None):
    """Inverse gamma: density prop to y^-(a+1) exp(-b/y); mean b/(a-1) for a>1."""
    if np.any(np.asarray(shape) <= 0) or np.any(np.asarray(scale) <= 0):
        raise ArgumentError("inverse-gamma shape and scale must be positive")
    return 1.0 / rng.gen.gamma(shape, 1.0 / np.asarray(scale, dtype=float), size=size)


def sample_exponential(rate, rng, size=None):
    if np.any(np.asarray(rate) <= 0):
        raise ArgumentError("exponential rate must be positive")
    return rng.gen.exponential(1.0 / np.asarray(rate, dtype=float), size=size)


# ============================================================
# Truncated normal
# ============================================================

# beyond this standardized bound the central inverse-CDF loses precision
_TAIL_BOUND = 5.0


def _robert_tail(a, b, gen):
    # one-sided exponential-proposal rejection on [a, b), a >= _TAIL_BOUND;
    # used only when the survival probabilities underflow (a > ~38)
    alpha = 0.5 * (a + np.sqrt(a * a + 4.0))
    for _ in range(100000):
        z = a - np.log(gen.uniform()) / alpha
        if z > b:
            continue
        if gen.uniform() <= np.exp(-0.5 * (z - alpha) ** 2):
            return z
    raise NumericalError("truncated-normal tail rejection failed to accept")


def sample_truncated_normal(mu, sigma, lo, hi, rng, size=None):
    """Normal(mu, sigma^2) conditioned on (lo, hi]. Vectorized.

    Every returned value satisfies lo < draw <= hi. lo may be -inf and hi
    may be +inf, but not both degenerate (lo < hi required elementwise).
    """
    mu = np.asarray(mu, dtype=float)
    sigma = np.asarray(sigma, dtype=float)
    lo = np.asarray(lo, dtype=float)
    hi = np.asarray(hi, dtype=float)
    if np.any(~np.isfinite(mu)) or np.any(~np.isfinite(sigma)):
        raise ArgumentError("mu and sigma must be finite")
    if np.any(sigma <= 0):
        raise ArgumentError("sigma must be positive")
    if np.any(~(lo < hi)):
        raise ArgumentError("require lo < hi elementwise")

    scalar_in = size is None and all(np.ndim(v) == 0 for v in (mu, sigma, lo, hi))
    shape = np.broadcast_shapes(mu.shape, sigma.shape, lo.shape, hi.shape)
    if size is not None:
        shape = (size,) if np.ndim(size) == 0 else tuple(size)
    a = np.broadcast_to((lo - mu) / sigma, shape).ravel()
    b = np.broadcast_to((hi - mu) / sigma, shape).ravel()

    u = rng.gen.uniform(size=a.shape)
    x = np.empty_like(a)

    upper = a >= _TAIL_BOUND          # whole interval in the far right tail
    lower = b <= -_TAIL_BOUND         # far left tail
    central = ~(upper | lower)

    if np.any(central):
        pa = ndtr(a[central])
        pb = ndtr(b[central])
        x[central] = ndtri(pa + u[central] * (pb - pa))
    if np.any(upper):
        # invert on the survival scale, which stays accurate out to ~38 sd
        sa = ndtr(-a[upper])
        sb = ndtr(-b[upper])
        x[upper] = -ndtri(sb + u[upper] * (sa - sb))
    if np.any(lower):
        sa = ndtr(a[lower])
        sb = ndtr(b[lower])
        x[lower] = ndtri(sb + u[lower] * (sa - sb))

    # survival probabilities underflow past ~38 sd: fall back to rejection
    bad = ~np.isfinite(x) | (x <= a) | (x > b)
    if np.any(bad):
        for i in np.nonzero(bad)[0]:
            ai, bi = a[i], b[i]
            if ai >= _TAIL_BOUND:
                x[i] = _robert_tail(ai, bi, rng.gen)
            elif bi <= -_TAIL_BOUND:
                x[i] = -_robert_tail(-bi, -ai, rng.gen)
            else:
                # numerically degenerate central interval: clamp to midpoint
                x[i] = 0.5 * (max(ai, -_TAIL_BOUND) + min(bi, _TAIL_BOUND))

    out = np.broadcast_to(mu, shape) + np.broadcast_to(sigma, shape) * x.reshape(shape)
    # keep draws strictly inside (lo, hi] even after float rounding
    lo_b = np.broadcast_to(lo, shape)
    hi_b = np.broadcast_to(hi, shape)
    out = np.minimum(np.maximum(out, np.nextafter(lo_b, np.inf)), hi_b)
    if scalar_in:
        return out.item()
    return out


# ============================================================
# Generalized inverse Gaussian
# ============================================================


def _gig_two_param(lam, omega, rng):
    # density prop to x^(lam-1) exp(-omega (x + 1/x) / 2), lam >= 0, omega > 0;
    # mode-shifted rejection with uniform center and exponential tails on the
    # log scale (the envelope is exact because psi is concave with psi(0)=0)
    lam = np.asarray(lam, dtype=float).ravel()
    omega = np.asarray(omega, dtype=float).ravel()
    n = lam.shape[0]

    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        alpha = omega * omega / (np.sqrt(lam * lam + omega * omega) + lam)

        def psi(x):
            return -alpha * (np.cosh(x) - 1.0) - lam * (np.expm1(x) - x)

        def dpsi(x):
            return -alpha * np.sinh(x) - lam * np.expm1(x)

        xt = -psi(np.ones(n))
        t = np.where(
            (xt >= 0.5) & (xt <= 2.0),
            1.0,
            np.where(xt > 2.0, np.sqrt(2.0 / (alpha + lam)), np.log(4.0 / (alpha + 2.0 * lam))),
        )
        xs = -psi(-np.ones(n))
        inv_a = 1.0 / alpha
        s_small = np.minimum(1.0 / lam, np.log1p(inv_a + np.sqrt(inv_a * inv_a + 2.0 * inv_a)))
        s = np.where(
            (xs >= 0.5) & (xs <= 2.0),
            1.0,
            np.where(xs > 2.0, np.sqrt(4.0 / (alpha * np.cosh(1.0) + lam)), s_small),
        )

        eta = -psi(t)
        zeta = -dpsi(t)
        theta = -psi(-s)
        xi = dpsi(-s)
        p = 1.0 / xi
        r = 1.0 / zeta
        td = t - r * eta
        sd = s - p * theta
        q = td + sd

    out = np.empty(n)
    pending = np.arange(n)
    for _ in range(1000):
        k = pending.shape[0]
        uu = rng.gen.uniform(size=k)
        vv = rng.gen.uniform(size=k)
        ww = rng.gen.uniform(size=k)
        pi, qi, ri = p[pending], q[pending], r[pending]
        tdi, sdi = td[pending], sd[pending]
        with np.errstate(divide="ignore", over="ignore", invalid="ignore"):
            tot = pi + qi + ri
            rnd = np.where(
                uu * tot < qi,
                -sdi + qi * vv,
                np.where(uu * tot < qi + ri, tdi - ri * np.log(vv), -sdi + pi * np.log(vv)),
            )
            lam_i = lam[pending]
            alpha_i = alpha[pending]
            ps = -alpha_i * (np.cosh(rnd) - 1.0) - lam_i * (np.expm1(rnd) - rnd)
            env = np.where(
                rnd > tdi,
                -eta[pending] - zeta[pending] * (rnd - t[pending]),
                np.where(rnd < -sdi, -theta[pending] + xi[pending] * (rnd + s[pending]), 0.0),
            )
            acc = np.isfinite(rnd) & (np.log(ww) + env <= ps)
        out[pending[acc]] = rnd[acc]
        pending = pending[~acc]
        if pending.shape[0] == 0:
            break
    else:
        raise NumericalError("giG rejection sampler failed to accept after 1000 rounds")

    with np.errstate(over="ignore"):
        scale = (lam + np.sqrt(lam * lam + omega * omega)) / omega
    return np.exp(out) * scale


def sample_gig(kappa, rho, chi, rng, size=None):
    """giG(kappa, rho, chi): density prop to y^(kappa-1) exp(-(rho*y + chi/y)/2).

    chi = 0 requires kappa > 0 (the draw reduces to Gamma(kappa, rate rho/2)).
    Negative kappa is handled through the reciprocal identity.
    """
    kappa = np.asarray(kappa, dtype=float)
    rho = np.asarray(rho, dtype=float)
    chi = np.asarray(chi, dtype=float)
    if np.any(rho <= 0):
        raise ArgumentError("giG rho must be positive")
    if np.any(chi < 0):
        raise ArgumentError("giG chi must be nonnegative")
    if np.any((chi == 0) & (kappa <= 0)):
        raise ArgumentError("giG with chi = 0 requires kappa > 0")

    scalar_in = size is None and all(np.ndim(v) == 0 for v in (kappa, rho, chi))
    shape = np.broadcast_shapes(kappa.shape, rho.shape, chi.shape)
    if size is not None:
        shape = (size,) if np.ndim(size) == 0 else tuple(size)
    kappa_f = np.broadcast_to(kappa, shape).ravel()
    rho_f = np.broadcast_to(rho, shape).ravel()
    chi_f = np.broadcast_to(chi, shape).ravel()

    out = np.empty(kappa_f.shape)
    gamma_mask = chi_f == 0
    if np.any(gamma_mask):
        out[gamma_mask] = rng.gen.gamma(kappa_f[gamma_mask], 2.0 / rho_f[gamma_mask])
    gen_mask = ~gamma_mask
    if np.any(gen_mask):
        lam = np.abs(kappa_f[gen_mask])
        omega = np.sqrt(rho_f[gen_mask] * chi_f[gen_mask])
        y = _gig_two_param(lam, omega, rng)
        neg = kappa_f[gen_mask] < 0
        y = np.where(neg, 1.0 / y, y)
        out[gen_mask] = np.sqrt(chi_f[gen_mask] / rho_f[gen_mask]) * y

    if not np.all(np.isfinite(out) & (out > 0)):
        raise NumericalError("giG sampler produced a non-finite or non-positive draw")
    if scalar_in:
        return out.item()
    return out.reshape(shape)


# ============================================================
# Normalized giG vector (simplex draw for the shrinkage weights)
# ============================================================

# degenerate weights are floored before entering the giG so chi stays proper
WEIGHT_FLOOR = 1e-10


def sample_dirichlet_like_phi(weights, alpha, rng):
    """Draw a simplex vector from normalized giG(alpha-1, 1, 2*|w|) coordinates.

    `weights` is any-shaped array of magnitudes (absolute loadings); the
    result has the same shape, positive entries, and sums to 1.
    """
    w = np.abs(np.asarray(weights, dtype=float))
    if w.size == 0:
        raise ArgumentError("weights must be non-empty")
    w = np.maximum(w, WEIGHT_FLOOR)
    if w.size == 1:
        return np.ones_like(w)
    raw = sample_gig(alpha - 1.0, 1.0, 2.0 * w, rng)
    raw = np.maximum(raw, 1e-300)
    return raw / raw.sum()
