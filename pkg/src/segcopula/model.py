"""Model containers: hyperparameters, sampler state, and stored chains.

The latent working matrix W lives on the factor scale (W_i = loadings @ u_i
+ noise); dividing each column by sqrt(psi_j) recovers the correlation-scale
latent z. psi is the implied per-gene marginal variance.
"""

import json
import os
from dataclasses import dataclass, field, asdict

import numpy as np

from .errors import ArgumentError, DataError

DL_MODES = ("elementwise", "columnwise")


@dataclass
class Hyperparams:
    """Sampler configuration. Defaults follow common single-cell practice:
    m = 1 treats zeros and ones as latent, alpha = 0.5 gives aggressive
    column shrinkage."""

    k_max: int = 8
    m: int = 1
    alpha: float = 0.5
    a_sigma: float = 0.1
    b_sigma: float = 0.1
    iterations: int = 10000
    burn_in: int = 5000
    thin: int = 1
    seed: int = 0
    dl_mode: str = "elementwise"

    def __post_init__(self):
        if int(self.k_max) != self.k_max or not (1 <= self.k_max <= 64):
            raise ArgumentError("k_max must be an integer in [1, 64]")
        if int(self.m) != self.m or self.m < 0:
            raise ArgumentError("m must be a nonnegative integer")
        if self.alpha <= 0:
            raise ArgumentError("alpha must be positive")
        if self.a_sigma <= 0 or self.b_sigma <= 0:
            raise ArgumentError("a_sigma and b_sigma must be positive")
        if int(self.iterations) != self.iterations or self.iterations < 1:
            raise ArgumentError("iterations must be a positive integer")
        if int(self.burn_in) != self.burn_in or self.burn_in < 0:
            raise ArgumentError("burn_in must be a nonnegative integer")
        if self.burn_in >= self.iterations:
            raise ArgumentError("burn_in must be smaller than iterations")
        if int(self.thin) != self.thin or self.thin < 1:
            raise ArgumentError("thin must be a positive integer")
        if int(self.seed) != self.seed or not (0 <= self.seed < 2**64):
            raise ArgumentError("seed must be an integer in [0, 2^64)")
        if self.dl_mode not in DL_MODES:
            raise ArgumentError(f"dl_mode must be one of {DL_MODES}")
        self.k_max = int(self.k_max)
        self.m = int(self.m)
        self.iterations = int(self.iterations)
        self.burn_in = int(self.burn_in)
        self.thin = int(self.thin)
        self.seed = int(self.seed)

    @property
    def n_draws(self):
        return (self.iterations - self.burn_in) // self.thin


@dataclass
class ModelState:
    """One full set of sampler unknowns.

    Lambda: p x k loadings; sigma2: p noise variances; U: n x k scores;
    delta: p x (m+1) increasing thresholds on the correlation scale;
    phi/tau/xi: shrinkage locals; W: n x p working-scale latent matrix.
    """

    Lambda: np.ndarray
    sigma2: np.ndarray
    U: np.ndarray
    delta: np.ndarray
    phi: np.ndarray
    tau: float
    xi: np.ndarray
    W: np.ndarray


def compute_psi(Lambda, sigma2):
    """Per-gene marginal variance: row norms of the loadings plus noise."""
    Lambda = np.asarray(Lambda, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    return (Lambda * Lambda).sum(axis=1) + sigma2


def compute_correlation(Lambda, sigma2):
    """Correlation matrix implied by the factor decomposition."""
    Lambda = np.asarray(Lambda, dtype=float)
    sigma2 = np.asarray(sigma2, dtype=float)
    cov = Lambda @ Lambda.T + np.diag(sigma2)
    inv_root = 1.0 / np.sqrt(compute_psi(Lambda, sigma2))
    return inv_root[:, None] * cov * inv_root[None, :]


# ============================================================
# Stored draws
# ============================================================


@dataclass
class Chain:
    """Thinned post-burn-in draws plus per-draw factor-count statistics.

    scores_mean is accumulated online; full score draws are kept only when
    the run asked for them (they dominate memory otherwise).
    """

    hyperparams: Hyperparams
    Lambda_draws: np.ndarray          # S x p x k
    sigma2_draws: np.ndarray          # S x p
    delta_draws: np.ndarray           # S x p x (m+1)
    tau_draws: np.ndarray             # S
    k_hat_per_iter: np.ndarray        # S ints
    scores_mean: np.ndarray           # n x k
    U_draws: np.ndarray = None        # S x n x k, optional
    meta: dict = field(default_factory=dict)

    @property
    def n_draws(self):
        return self.Lambda_draws.shape[0]

    def get_draw(self, s):
        return (
            self.Lambda_draws[s],
            self.sigma2_draws[s],
            self.delta_draws[s],
            float(self.tau_draws[s]),
        )

    # -------- serialization: directory of CSVs plus a JSON sidecar --------

    def save(self, out_dir):
        os.makedirs(out_dir, exist_ok=True)
        s, p, k = self.Lambda_draws.shape
        m1 = self.delta_draws.shape[2]
        _save_matrix(os.path.join(out_dir, "lambda_draws.csv"),
                     self.Lambda_draws.reshape(s, p * k))
        _save_matrix(os.path.join(out_dir, "sigma2_draws.csv"), self.sigma2_draws)
        _save_matrix(os.path.join(out_dir, "delta_draws.csv"),
                     self.delta_draws.reshape(s, p * m1))
        _save_matrix(os.path.join(out_dir, "tau_draws.csv"), self.tau_draws[:, None])
        _save_matrix(os.path.join(out_dir, "k_hat_per_iter.csv"),
                     self.k_hat_per_iter[:, None].astype(float))
        _save_matrix(os.path.join(out_dir, "scores_mean.csv"), self.scores_mean)
        if self.U_draws is not None:
            n = self.U_draws.shape[1]
            _save_matrix(os.path.join(out_dir, "u_draws.csv"),
                         self.U_draws.reshape(s, n * k))
        meta = {
            "hyperparams": asdict(self.hyperparams),
            "seed": self.hyperparams.seed,
            "n_draws": int(s),
            "shape": {"p": int(p), "k_max": int(k), "m": int(m1 - 1),
                      "n": int(self.scores_mean.shape[0])},
        }
        meta.update({key: val for key, val in self.meta.items()
                     if key not in ("wall_clock_seconds",)})
        with open(os.path.join(out_dir, "meta.json"), "wt", encoding="utf-8") as fh:
            json.dump(meta, fh, indent=2, sort_keys=True)
            fh.write("\n")

    @classmethod
    def load(cls, in_dir):
        meta_path = os.path.join(in_dir, "meta.json")
        if not os.path.isfile(meta_path):
            raise DataError(f"{in_dir}: missing meta.json (not a chain directory)")
        with open(meta_path, "rt", encoding="utf-8") as fh:
            meta = json.load(fh)
        hp = Hyperparams(**meta["hyperparams"])
        shape = meta["shape"]
        p, k, m1 = shape["p"], shape["k_max"], shape["m"] + 1
        s = meta["n_draws"]
        lam = _load_matrix(os.path.join(in_dir, "lambda_draws.csv")).reshape(s, p, k)
        sig = _load_matrix(os.path.join(in_dir, "sigma2_draws.csv")).reshape(s, p)
        dlt = _load_matrix(os.path.join(in_dir, "delta_draws.csv")).reshape(s, p, m1)
        tau = _load_matrix(os.path.join(in_dir, "tau_draws.csv")).reshape(s)
        khat = _load_matrix(os.path.join(in_dir, "k_hat_per_iter.csv")).reshape(s)
        scores = _load_matrix(os.path.join(in_dir, "scores_mean.csv"))
        u_path = os.path.join(in_dir, "u_draws.csv")
        u_draws = None
        if os.path.isfile(u_path):
            u_draws = _load_matrix(u_path).reshape(s, shape["n"], k)
        extra = {key: val for key, val in meta.items()
                 if key not in ("hyperparams", "seed", "n_draws", "shape")}
        return cls(
            hyperparams=hp,
            Lambda_draws=lam,
            sigma2_draws=sig,
            delta_draws=dlt,
            tau_draws=tau,
            k_hat_per_iter=khat.astype(int),
            scores_mean=scores,
            U_draws=u_draws,
            meta=extra,
        )


def pool_chains(chains):
    """Concatenate draws from independent chains run with the same
    hyperparameters; score means are averaged with draw-count weights.

    Chains may differ in seed (that is the point of running several) but in
    nothing else.
    """
    if not chains:
        raise ArgumentError("need at least one chain")
    hp = chains[0].hyperparams

    def key(c):
        d = asdict(c.hyperparams)
        d.pop("seed")
        return d

    for c in chains[1:]:
        if key(c) != key(chains[0]):
            raise ArgumentError("cannot pool chains with different hyperparameters")
    weights = np.array([c.n_draws for c in chains], dtype=float)
    scores = sum(w * c.scores_mean for w, c in zip(weights, chains)) / weights.sum()
    u_draws = None
    if all(c.U_draws is not None for c in chains):
        u_draws = np.concatenate([c.U_draws for c in chains], axis=0)
    return Chain(
        hyperparams=hp,
        Lambda_draws=np.concatenate([c.Lambda_draws for c in chains], axis=0),
        sigma2_draws=np.concatenate([c.sigma2_draws for c in chains], axis=0),
        delta_draws=np.concatenate([c.delta_draws for c in chains], axis=0),
        tau_draws=np.concatenate([c.tau_draws for c in chains], axis=0),
        k_hat_per_iter=np.concatenate([c.k_hat_per_iter for c in chains], axis=0),
        scores_mean=scores,
        U_draws=u_draws,
        meta={"pooled_from": len(chains)},
    )


def _save_matrix(path, arr):
    np.savetxt(path, np.asarray(arr, dtype=float), fmt="%.17g", delimiter=",")


def _load_matrix(path):
    out = np.loadtxt(path, delimiter=",", ndmin=2)
    return out
