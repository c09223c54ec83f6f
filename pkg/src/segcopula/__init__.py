"""Segmented Gaussian copula factor model for skewed counts.

Counts with inflated low values are linked to a latent Gaussian vector
through per-gene segmented transforms: low counts map to intervals between
free threshold parameters, higher counts map through the empirical CDF. A
sparse factor decomposition of the latent correlation matrix is sampled by
a blocked Gibbs sampler with a Dirichlet-Laplace prior on the loadings, and
the number of active factors is read off the loading norms afterwards.
"""

__version__ = "0.1.0"

from .copula import (
    EmpiricalCdf,
    PseudoData,
    SegmentationScheme,
    build_pseudodata,
    cdf_pseudo_inverse,
    fit_empirical_cdf,
    normal_quantile,
    segment,
)
from .errors import ArgumentError, DataError, InvariantViolation, NumericalError
from .estimator import SegmentedCopulaFactorModel
from .gibbs import init_state, run_chain
from .ingest import (
    CountMatrix,
    filter_genes_by_zero_fraction,
    read_csv,
    read_matrix_market,
    select_top_variable_genes,
    write_csv,
)
from .model import (
    Chain,
    Hyperparams,
    ModelState,
    compute_correlation,
    compute_psi,
    pool_chains,
)
from .postprocess import (
    FitResult,
    distance_spearman,
    estimate_k,
    khat_one_iteration,
    ks_distance,
    ppc_replicates,
    ppc_sample,
    qq_table,
    select_factors,
)
from .rngdist import (
    RngStream,
    sample_dirichlet_like_phi,
    sample_gig,
    sample_inverse_gamma,
    sample_truncated_normal,
)
from .simulate import SimTruth, gen_data, gen_truth, synthetic_marginals

__all__ = [
    "ArgumentError",
    "Chain",
    "CountMatrix",
    "DataError",
    "EmpiricalCdf",
    "FitResult",
    "Hyperparams",
    "InvariantViolation",
    "ModelState",
    "NumericalError",
    "PseudoData",
    "RngStream",
    "SegmentationScheme",
    "SegmentedCopulaFactorModel",
    "SimTruth",
    "build_pseudodata",
    "cdf_pseudo_inverse",
    "compute_correlation",
    "compute_psi",
    "distance_spearman",
    "estimate_k",
    "filter_genes_by_zero_fraction",
    "fit_empirical_cdf",
    "gen_data",
    "gen_truth",
    "init_state",
    "khat_one_iteration",
    "ks_distance",
    "normal_quantile",
    "pool_chains",
    "ppc_replicates",
    "ppc_sample",
    "qq_table",
    "read_csv",
    "read_matrix_market",
    "run_chain",
    "sample_dirichlet_like_phi",
    "sample_gig",
    "sample_inverse_gamma",
    "sample_truncated_normal",
    "segment",
    "select_factors",
    "select_top_variable_genes",
    "synthetic_marginals",
    "write_csv",
]
