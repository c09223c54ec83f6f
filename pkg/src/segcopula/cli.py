"""Command-line pipeline: simulate, select-genes, fit, evaluate, ppc.

Option precedence is CLI flag > --config JSON > built-in default. Every
output directory gets a meta.json echoing the resolved configuration, and
runs with the same seed produce byte-identical files.

Exit codes: 0 success, 2 argument error, 3 data error, 4 numerical failure.
"""

import argparse
import concurrent.futures
import json
import os
import sys

import numpy as np

from . import __version__
from .copula import build_pseudodata, fit_empirical_cdf
from .errors import ArgumentError, DataError, NumericalError
from .gibbs import run_chain
from .ingest import (
    CountMatrix,
    filter_genes_by_zero_fraction,
    read_csv,
    read_matrix_market,
    select_top_variable_genes,
    write_csv,
)
from .model import Chain, Hyperparams, compute_psi, pool_chains
from .postprocess import (
    FitResult,
    distance_spearman,
    ks_distance,
    ppc_replicates,
    qq_table,
)
from .rngdist import RngStream
from .simulate import gen_data, gen_truth, synthetic_marginals

_DEFAULTS = {
    "simulate": {
        "n": 500, "p": 25, "k": 4, "seed": 0, "zero_frac": 0.56,
        "one_frac": 0.15, "tail_shape": 1.0, "marginals_from": None,
    },
    "select-genes": {
        "format": "csv", "genes_are": "columns", "has_header": True,
        "max_zero_frac": 0.9, "top_genes": None, "variance_on": "raw",
    },
    "fit": {
        "k_max": 8, "m": 1, "alpha": 0.5, "a_sigma": 0.1, "b_sigma": 0.1,
        "iterations": 10000, "burn_in": 5000, "thin": 1, "seed": 0,
        "dl_mode": "elementwise", "chains": 1, "save_scores": False,
        "progress_every": 0,
    },
    "evaluate": {"all_factors": False},
    "ppc": {"n_quantiles": 50, "seed": 0},
}


# ============================================================
# Option plumbing
# ============================================================


def _resolve(command, args):
    """Merge defaults, config file, and explicit flags (in that order)."""
    resolved = dict(_DEFAULTS[command])
    config_path = getattr(args, "config", None)
    if config_path:
        try:
            with open(config_path, "rt", encoding="utf-8") as fh:
                loaded = json.load(fh)
        except FileNotFoundError:
            raise ArgumentError(f"config file not found: {config_path}") from None
        except json.JSONDecodeError as err:
            raise ArgumentError(f"config file is not valid JSON: {err}") from None
        if not isinstance(loaded, dict):
            raise ArgumentError("config file must hold a JSON object")
        for key, val in loaded.items():
            if key not in resolved:
                raise ArgumentError(f"unknown config key for {command}: {key}")
            resolved[key] = val
    for key in resolved:
        val = getattr(args, key, None)
        if val is not None:
            resolved[key] = val
    return resolved


def _write_meta(out_dir, command, resolved):
    meta = {
        "command": command,
        "config": resolved,
        "package_version": __version__,
    }
    with open(os.path.join(out_dir, "meta.json"), "wt", encoding="utf-8") as fh:
        json.dump(meta, fh, indent=2, sort_keys=True)
        fh.write("\n")


def _save_matrix(path, arr):
    np.savetxt(path, np.asarray(arr, dtype=float), fmt="%.17g", delimiter=",")


def _load_matrix(path):
    if not os.path.isfile(path):
        raise DataError(f"missing file: {path}")
    return np.loadtxt(path, delimiter=",", ndmin=2)


# ============================================================
# Commands
# ============================================================


def cmd_simulate(args):
    cfg = _resolve("simulate", args)
    os.makedirs(args.out, exist_ok=True)
    rng = RngStream(int(cfg["seed"]))
    n, p, k = int(cfg["n"]), int(cfg["p"]), int(cfg["k"])

    marginals = None
    if cfg["marginals_from"]:
        source = read_csv(cfg["marginals_from"], has_header=True)
        if source.p < p:
            raise DataError(
                f"marginal source has {source.p} genes, need {p}"
            )
        marginals = [fit_empirical_cdf(source.values[:, j]) for j in range(p)]
    truth = gen_truth(
        n, p, k, marginals, rng,
        zero_frac=float(cfg["zero_frac"]),
        one_frac=float(cfg["one_frac"]),
        tail_shape=float(cfg["tail_shape"]),
    )
    data = gen_data(truth, rng)

    write_csv(data, os.path.join(args.out, "X.csv"))
    _save_matrix(os.path.join(args.out, "U_true.csv"), truth.U_true)
    # fitted loadings are reported on the correlation scale (rows of unit
    # total variance), so the stored truth uses the same scale
    psi_true = compute_psi(truth.Lambda_true, truth.sigma2_true)
    lam_true = truth.Lambda_true / np.sqrt(psi_true)[:, None]
    _save_matrix(os.path.join(args.out, "Lambda_true.csv"), lam_true)
    with open(os.path.join(args.out, "truth_meta.json"), "wt", encoding="utf-8") as fh:
        json.dump(
            {
                "n": n, "p": p, "k": k,
                "sigma2_true": [float(v) for v in truth.sigma2_true],
                "zero_fraction": float((data.values == 0).mean()),
                "one_fraction": float((data.values == 1).mean()),
            },
            fh, indent=2, sort_keys=True,
        )
        fh.write("\n")
    _write_meta(args.out, "simulate", cfg)
    return 0


def _read_counts(path, fmt, genes_are, has_header):
    if fmt == "mtx":
        return read_matrix_market(path, genes_are=genes_are)
    if fmt == "csv":
        counts = read_csv(path, has_header=has_header)
        if genes_are == "rows":
            counts = CountMatrix(values=counts.values.T)
        return counts
    raise ArgumentError(f"unknown format: {fmt}")


def cmd_select_genes(args):
    cfg = _resolve("select-genes", args)
    counts = _read_counts(
        args.input, cfg["format"], cfg["genes_are"], bool(cfg["has_header"])
    )
    filtered, kept = filter_genes_by_zero_fraction(
        counts, float(cfg["max_zero_frac"])
    )
    if cfg["top_genes"] is not None:
        filtered, kept2 = select_top_variable_genes(
            filtered, int(cfg["top_genes"]), cfg["variance_on"]
        )
        kept = kept[kept2]
    out_dir = os.path.dirname(os.path.abspath(args.out)) or "."
    os.makedirs(out_dir, exist_ok=True)
    write_csv(filtered, args.out)
    kept_path = os.path.splitext(args.out)[0] + "_kept_genes.json"
    with open(kept_path, "wt", encoding="utf-8") as fh:
        json.dump(
            {
                "kept_indices": [int(i) for i in kept],
                "kept_names": filtered.gene_names,
                "n_before": counts.p,
                "n_after": filtered.p,
            },
            fh, indent=2, sort_keys=True,
        )
        fh.write("\n")
    print(f"kept {filtered.p} of {counts.p} genes", file=sys.stderr)
    return 0


def _run_one_chain(values, hp_dict, chain_index, save_scores, progress_every):
    hp = Hyperparams(**hp_dict)
    pd = build_pseudodata(values, hp.m)
    rng = RngStream(hp.seed, chain_index)
    return run_chain(
        pd, hp, rng, save_scores=save_scores, progress_every=progress_every
    )


def cmd_fit(args):
    cfg = _resolve("fit", args)
    counts = read_csv(args.input, has_header=True)
    hp = Hyperparams(
        k_max=int(cfg["k_max"]), m=int(cfg["m"]), alpha=float(cfg["alpha"]),
        a_sigma=float(cfg["a_sigma"]), b_sigma=float(cfg["b_sigma"]),
        iterations=int(cfg["iterations"]), burn_in=int(cfg["burn_in"]),
        thin=int(cfg["thin"]), seed=int(cfg["seed"]), dl_mode=cfg["dl_mode"],
    )
    n_chains = int(cfg["chains"])
    if n_chains < 1:
        raise ArgumentError("chains must be at least 1")
    save_scores = bool(cfg["save_scores"])
    progress_every = int(cfg["progress_every"])

    hp_dict = {
        "k_max": hp.k_max, "m": hp.m, "alpha": hp.alpha,
        "a_sigma": hp.a_sigma, "b_sigma": hp.b_sigma,
        "iterations": hp.iterations, "burn_in": hp.burn_in,
        "thin": hp.thin, "seed": hp.seed, "dl_mode": hp.dl_mode,
    }
    if n_chains == 1:
        chains = [_run_one_chain(counts.values, hp_dict, 0,
                                 save_scores, progress_every)]
    else:
        with concurrent.futures.ProcessPoolExecutor(
            max_workers=min(n_chains, os.cpu_count() or 1)
        ) as pool:
            futures = [
                pool.submit(_run_one_chain, counts.values, hp_dict, c,
                            save_scores, progress_every)
                for c in range(n_chains)
            ]
            chains = [f.result() for f in futures]

    os.makedirs(args.out, exist_ok=True)
    for c, chain in enumerate(chains):
        chain.save(os.path.join(args.out, f"chain_{c:02d}"))
    pooled = pool_chains(chains) if n_chains > 1 else chains[0]
    result = FitResult.from_chain(pooled)

    _save_matrix(os.path.join(args.out, "loadings.csv"), result.lambda_mean)
    _save_matrix(os.path.join(args.out, "scores.csv"), result.scores_mean)
    _save_matrix(os.path.join(args.out, "noise_variance.csv"),
                 result.sigma2_mean[None, :])
    _save_matrix(os.path.join(args.out, "thresholds.csv"), result.delta_mean)
    with open(os.path.join(args.out, "khat.json"), "wt", encoding="utf-8") as fh:
        json.dump(
            {
                "k_hat": int(result.k_hat),
                "significant_factors": [int(i) for i in result.significant_factors],
                "warnings": result.warnings,
            },
            fh, indent=2, sort_keys=True,
        )
        fh.write("\n")
    _write_meta(args.out, "fit", cfg)
    return 0


def _metrics_for_pair(truth_dir, fit_dir, all_factors):
    u_true = _load_matrix(os.path.join(truth_dir, "U_true.csv"))
    lam_true = _load_matrix(os.path.join(truth_dir, "Lambda_true.csv"))
    scores = _load_matrix(os.path.join(fit_dir, "scores.csv"))
    loadings = _load_matrix(os.path.join(fit_dir, "loadings.csv"))
    khat_path = os.path.join(fit_dir, "khat.json")
    if not all_factors and os.path.isfile(khat_path):
        with open(khat_path, "rt", encoding="utf-8") as fh:
            sig = json.load(fh)["significant_factors"]
        scores = scores[:, sig]
        loadings = loadings[:, sig]
    if scores.shape[0] != u_true.shape[0]:
        raise DataError(
            f"score rows ({scores.shape[0]}) do not match truth rows "
            f"({u_true.shape[0]})"
        )
    if loadings.shape[0] != lam_true.shape[0]:
        raise DataError(
            f"loading rows ({loadings.shape[0]}) do not match truth rows "
            f"({lam_true.shape[0]})"
        )
    return {
        "scores_spearman": distance_spearman(scores, u_true),
        "loadings_spearman": distance_spearman(loadings, lam_true),
    }


def cmd_evaluate(args):
    cfg = _resolve("evaluate", args)
    pairs = []
    if args.truth or args.fit:
        if not (args.truth and args.fit):
            raise ArgumentError("--truth and --fit must be given together")
        pairs.append((args.truth, args.fit))
    for pair in args.pair or []:
        pairs.append(tuple(pair))
    if not pairs:
        raise ArgumentError("no truth/fit pairs given")

    per_pair = [
        dict(truth=t, fit=f, **_metrics_for_pair(t, f, bool(cfg["all_factors"])))
        for t, f in pairs
    ]
    out = {"pairs": per_pair}
    if len(per_pair) > 1:
        for key in ("scores_spearman", "loadings_spearman"):
            vals = np.array([p[key] for p in per_pair])
            out[key + "_mean"] = float(vals.mean())
            out[key + "_se"] = float(vals.std(ddof=1) / np.sqrt(len(vals)))
    else:
        out.update({k: v for k, v in per_pair[0].items()
                    if k.endswith("spearman")})

    text = json.dumps(out, indent=2, sort_keys=True) + "\n"
    if args.out:
        out_dir = os.path.dirname(os.path.abspath(args.out))
        os.makedirs(out_dir, exist_ok=True)
        with open(args.out, "wt", encoding="utf-8") as fh:
            fh.write(text)
    else:
        sys.stdout.write(text)
    return 0


def cmd_ppc(args):
    cfg = _resolve("ppc", args)
    chain_dir = args.chain
    if not os.path.isfile(os.path.join(chain_dir, "lambda_draws.csv")):
        nested = os.path.join(chain_dir, "chain_00")
        if os.path.isfile(os.path.join(nested, "lambda_draws.csv")):
            chain_dir = nested
        else:
            raise DataError(f"{args.chain}: not a chain directory")
    chain = Chain.load(chain_dir)
    counts = read_csv(args.data, has_header=True)
    pd = build_pseudodata(counts, chain.hyperparams.m)
    if pd.p != chain.Lambda_draws.shape[1]:
        raise DataError(
            f"data has {pd.p} genes but the chain was fit to "
            f"{chain.Lambda_draws.shape[1]}"
        )
    rng = RngStream(int(cfg["seed"]))
    reps = ppc_replicates(chain, pd.cdfs, rng)

    os.makedirs(args.out, exist_ok=True)
    n_q = int(cfg["n_quantiles"])
    ks = []
    for j, name in enumerate(counts.gene_names):
        table = qq_table(counts.values[:, j], reps[:, j], n_q)
        _save_matrix(os.path.join(args.out, f"qq_gene_{name}.csv"), table)
        ks.append(ks_distance(counts.values[:, j], reps[:, j]))
    with open(os.path.join(args.out, "ppc_summary.json"), "wt", encoding="utf-8") as fh:
        json.dump(
            {
                "ks_per_gene": {name: float(v)
                                for name, v in zip(counts.gene_names, ks)},
                "ks_median": float(np.median(ks)),
                "n_replicates": int(reps.shape[0]),
            },
            fh, indent=2, sort_keys=True,
        )
        fh.write("\n")
    _write_meta(args.out, "ppc", cfg)
    return 0


# ============================================================
# Parser
# ============================================================


def build_parser():
    parser = argparse.ArgumentParser(
        prog="segcopula",
        description="Segmented Gaussian copula factor model for inflated counts",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    sim = sub.add_parser("simulate", help="generate ground truth and counts")
    sim.add_argument("--out", required=True)
    sim.add_argument("--n", type=int)
    sim.add_argument("--p", type=int)
    sim.add_argument("--k", type=int)
    sim.add_argument("--seed", type=int)
    sim.add_argument("--zero-frac", type=float, dest="zero_frac")
    sim.add_argument("--one-frac", type=float, dest="one_frac")
    sim.add_argument("--tail-shape", type=float, dest="tail_shape")
    sim.add_argument("--marginals-from", dest="marginals_from")
    sim.add_argument("--config")
    sim.set_defaults(func=cmd_simulate)

    sel = sub.add_parser("select-genes", help="filter genes before fitting")
    sel.add_argument("--input", required=True)
    sel.add_argument("--out", required=True)
    sel.add_argument("--format", choices=["csv", "mtx"])
    sel.add_argument("--genes-are", choices=["rows", "columns"], dest="genes_are")
    sel.add_argument("--no-header", action="store_const", const=False,
                     dest="has_header")
    sel.add_argument("--max-zero-frac", type=float, dest="max_zero_frac")
    sel.add_argument("--top-genes", type=int, dest="top_genes")
    sel.add_argument("--variance-on", choices=["raw", "log1p"],
                     dest="variance_on")
    sel.add_argument("--config")
    sel.set_defaults(func=cmd_select_genes)

    fit = sub.add_parser("fit", help="run the sampler on a count CSV")
    fit.add_argument("--input", required=True)
    fit.add_argument("--out", required=True)
    fit.add_argument("--k-max", type=int, dest="k_max")
    fit.add_argument("--m", type=int)
    fit.add_argument("--alpha", type=float)
    fit.add_argument("--a-sigma", type=float, dest="a_sigma")
    fit.add_argument("--b-sigma", type=float, dest="b_sigma")
    fit.add_argument("--iterations", type=int)
    fit.add_argument("--burn-in", type=int, dest="burn_in")
    fit.add_argument("--thin", type=int)
    fit.add_argument("--seed", type=int)
    fit.add_argument("--dl-mode", choices=["elementwise", "columnwise"],
                     dest="dl_mode")
    fit.add_argument("--chains", type=int)
    fit.add_argument("--save-scores", action="store_const", const=True,
                     dest="save_scores")
    fit.add_argument("--progress-every", type=int, dest="progress_every")
    fit.add_argument("--config")
    fit.set_defaults(func=cmd_fit)

    ev = sub.add_parser("evaluate", help="rank-distance accuracy vs truth")
    ev.add_argument("--truth")
    ev.add_argument("--fit")
    ev.add_argument("--pair", nargs=2, action="append",
                    metavar=("TRUTH", "FIT"))
    ev.add_argument("--out")
    ev.add_argument("--all-factors", action="store_const", const=True,
                    dest="all_factors")
    ev.add_argument("--config")
    ev.set_defaults(func=cmd_evaluate)

    ppc = sub.add_parser("ppc", help="posterior predictive quantile tables")
    ppc.add_argument("--chain", required=True)
    ppc.add_argument("--data", required=True)
    ppc.add_argument("--out", required=True)
    ppc.add_argument("--n-quantiles", type=int, dest="n_quantiles")
    ppc.add_argument("--seed", type=int)
    ppc.add_argument("--config")
    ppc.set_defaults(func=cmd_ppc)
    return parser


def main(argv=None):
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as err:
        return 0 if err.code in (0, None) else 2
    try:
        return args.func(args)
    except ArgumentError as err:
        print(f"argument error: {err}", file=sys.stderr)
        return 2
    except DataError as err:
        print(f"data error: {err}", file=sys.stderr)
        return 3
    except NumericalError as err:
        print(f"numerical error: {err}", file=sys.stderr)
        return 4


if __name__ == "__main__":
    sys.exit(main())
