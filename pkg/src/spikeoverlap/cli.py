"""Command line entry points: run, verify-lemmas, spectrum-plot, version.

Exit codes: 0 success, 2 configuration or usage error, 3 runtime failure
(more than half the spike pipelines failed, or a deterministic resolvent
inequality was violated).
"""

from __future__ import annotations

import argparse
import json
import math
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .config import ExperimentConfig, load_config
from .errors import ConfigurationError, SpikeOverlapError
from .experiments import (
    ConvergenceTable,
    derive_trial_seed,
    run_convergence_study,
    verify_bilinear_form,
    verify_block_resolvent,
    verify_gram_resolvent,
    verify_resolvent_continuity,
    verify_resolvent_norm,
)
from .matrix_model import (
    SparseModelConfig,
    default_k_schedule,
    sample_sparse_matrix,
    zero_matrix,
)
from .outliers import (
    DENSE_ORACLE_GUARD,
    default_epsilon_band,
    dense_spectrum_oracle,
    spectral_report,
)
from .perturbation import build_perturbation
from . import plots

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_RUNTIME = 3

FAILURE_RATE_LIMIT = 0.5

CSV_COLUMNS = [
    "n",
    "k",
    "mu_re",
    "mu_im",
    "multiplicity",
    "trials",
    "failures",
    "mean_overlap",
    "std_overlap",
    "limit",
    "mean_hausdorff",
    "count_success_rate",
]

VERIFY_SHIFT = 2.0
VERIFY_PERTURBED_SHIFT = 2.02
STAT_TOL = 0.05
GRAM_TOL = 0.1
CONTINUITY_SLACK = 1e-6


def _fmt(x: float) -> str:
    if math.isnan(x):
        return "nan"
    if math.isinf(x):
        return "inf" if x > 0 else "-inf"
    return format(x, ".12g")


def _sparsity_for(cfg: ExperimentConfig, position: int) -> int:
    if cfg.k_list is not None:
        return cfg.k_list[position]
    return default_k_schedule(cfg.n_list[position], cfg.k_exponent)


def _config_echo(cfg: ExperimentConfig) -> dict:
    return {
        "n_list": list(cfg.n_list),
        "k_exponent": cfg.k_exponent,
        "k_list": None if cfg.k_list is None else list(cfg.k_list),
        "sparsity": [_sparsity_for(cfg, i) for i in range(len(cfg.n_list))],
        "spikes": [
            {"re": mu.real, "im": mu.imag, "multiplicity": k}
            for mu, k in cfg.spike_spec.spikes
        ],
        "non_normality_tau": cfg.spike_spec.non_normality_tau,
        "trials": cfg.trials,
        "base_seed": cfg.base_seed,
        "distribution": cfg.distribution.value,
        "epsilon_band": "auto" if cfg.epsilon_band is None else cfg.epsilon_band,
        "dense_oracle": cfg.dense_oracle,
        "force_zero_matrix": cfg.force_zero_matrix,
    }


def _write_overlaps_csv(path: Path, table: ConvergenceTable) -> None:
    lines = [",".join(CSV_COLUMNS)]
    for row in table.rows:
        lines.append(
            ",".join(
                [
                    str(row.n),
                    str(row.sparsity_k),
                    _fmt(row.mu.real),
                    _fmt(row.mu.imag),
                    str(row.multiplicity),
                    str(row.trials),
                    str(row.failures),
                    _fmt(row.mean_overlap),
                    _fmt(row.std_overlap),
                    _fmt(row.limit),
                    _fmt(row.mean_hausdorff),
                    _fmt(row.count_success_rate),
                ]
            )
        )
    path.write_text("\n".join(lines) + "\n")


def _cmd_run(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out) if args.out else cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    table = run_convergence_study(
        cfg.n_list,
        cfg.k_exponent,
        cfg.spike_spec,
        cfg.trials,
        cfg.base_seed,
        k_list=cfg.k_list,
        distribution=cfg.distribution,
        epsilon_band=cfg.epsilon_band,
        oracle=cfg.dense_oracle,
        threads=args.threads,
        force_zero=cfg.force_zero_matrix,
    )
    _write_overlaps_csv(out / "overlaps.csv", table)
    trials_payload = [
        {
            "n": n,
            "trials": [t.to_dict() for t in trials],
        }
        for n, trials in sorted(table.trials.items())
    ]
    (out / "trials.json").write_text(
        json.dumps(trials_payload, indent=2, sort_keys=True) + "\n"
    )
    total = table.total_spike_runs()
    failures = table.total_failures()
    failure_rate = failures / total if total else 0.0
    partial = failure_rate > FAILURE_RATE_LIMIT
    summary = {
        "version": __version__,
        "config": _config_echo(cfg),
        "rows": [
            {
                "n": row.n,
                "k": row.sparsity_k,
                "spike_index": row.spike_index,
                "mu": {"re": row.mu.real, "im": row.mu.imag},
                "multiplicity": row.multiplicity,
                "trials": row.trials,
                "failures": row.failures,
                "mean_overlap": _json_float(row.mean_overlap),
                "std_overlap": _json_float(row.std_overlap),
                "limit": row.limit,
                "mean_hausdorff": _json_float(row.mean_hausdorff),
                "median_hausdorff": _json_float(row.median_hausdorff),
                "count_success_rate": _json_float(row.count_success_rate),
            }
            for row in table.rows
        ],
        "spike_runs": total,
        "failures": failures,
        "failure_rate": failure_rate,
        "partial": partial,
    }
    (out / "summary.json").write_text(
        json.dumps(summary, indent=2, sort_keys=True) + "\n"
    )
    plots.render_convergence(out / "overlap_convergence.svg", table)
    for row in table.rows:
        print(
            f"n={row.n} K={row.sparsity_k} mu={row.mu:.3g} "
            f"overlap={_fmt(row.mean_overlap)} (limit {row.limit:.6g}) "
            f"failures={row.failures}/{row.trials}"
        )
    print(f"wrote {out / 'overlaps.csv'}")
    if partial:
        print(
            f"warning: {failures}/{total} spike pipelines failed "
            f"(rate {failure_rate:.2f})",
            file=sys.stderr,
        )
        return EXIT_RUNTIME
    return EXIT_OK


def _json_float(x: float):
    x = float(x)
    if math.isfinite(x):
        return x
    return "inf" if x > 0 else ("-inf" if x < 0 else "nan")


def _verify_vectors(n: int):
    ones = np.ones(n, dtype=np.complex128) / math.sqrt(n)
    alternating = np.array(
        [1.0 if i % 2 == 0 else -1.0 for i in range(n)], dtype=np.complex128
    ) / math.sqrt(n)
    block = np.vstack([ones, alternating])
    return ones, alternating, block


def _cmd_verify_lemmas(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out) if args.out else cfg.output_dir
    out.mkdir(parents=True, exist_ok=True)
    position = len(cfg.n_list) - 1
    n = cfg.n_list[position]
    k = _sparsity_for(cfg, position)
    z = VERIFY_SHIFT
    z_n = VERIFY_PERTURBED_SHIFT
    ones, _, block = _verify_vectors(n)
    seeds = [derive_trial_seed(cfg.base_seed, t) for t in range(cfg.trials)]

    bilinear_errors = []
    block_errors = []
    block_bound_ok = []
    norm_measured = []
    gram_errors = []
    continuity_norms = []
    continuity_bounds = []
    continuity_ok = []
    for seed in seeds:
        model = SparseModelConfig(
            n=n, sparsity_k=k, distribution=cfg.distribution, seed=seed
        )
        sample = zero_matrix(model) if cfg.force_zero_matrix else sample_sparse_matrix(model)
        bilinear = verify_bilinear_form(sample, z, ones, ones)
        bilinear_errors.append(bilinear.abs_error)
        block_check = verify_block_resolvent(sample, z, block, block)
        block_errors.append(block_check.op_norm_error)
        block_bound_ok.append(bool(block_check.op_norm_error <= block_check.rank_bound))
        norm_check = verify_resolvent_norm(sample, z, ones)
        norm_measured.append(norm_check.measured_sq)
        gram_errors.append(verify_gram_resolvent(sample, z, block, block).op_norm_error)
        continuity = verify_resolvent_continuity(sample, z, z_n)
        continuity_norms.append(continuity.difference_norm)
        continuity_bounds.append(continuity.bound)
        continuity_ok.append(
            bool(
                continuity.difference_norm
                <= continuity.bound * (1.0 + CONTINUITY_SLACK)
            )
        )

    gap = abs(z) ** 2 - 1.0
    cand_inverse = 1.0 / gap
    cand_sqrt = 1.0 / math.sqrt(gap)
    mean_norm = float(np.mean(norm_measured))
    winner = (
        "gap_inverse"
        if abs(mean_norm - cand_inverse) <= abs(mean_norm - cand_sqrt)
        else "gap_inverse_sqrt"
    )
    bilinear_within = float(np.mean([e <= STAT_TOL for e in bilinear_errors]))
    report = {
        "n": n,
        "sparsity_k": k,
        "shift": {"re": z, "im": 0.0},
        "perturbed_shift": {"re": z_n, "im": 0.0},
        "trials": cfg.trials,
        "seeds": seeds,
        "force_zero_matrix": cfg.force_zero_matrix,
        "bilinear_form": {
            "kind": "statistical",
            "abs_errors": bilinear_errors,
            "tolerance": STAT_TOL,
            "fraction_within": bilinear_within,
            "pass": bilinear_within >= 0.9,
        },
        "block_compression": {
            "kind": "deterministic",
            "op_norm_errors": block_errors,
            "rank_bound_satisfied": block_bound_ok,
            "pass": all(block_bound_ok),
        },
        "resolvent_norm": {
            "kind": "statistical",
            "measured_sq": norm_measured,
            "mean_measured_sq": mean_norm,
            "candidate_gap_inverse": cand_inverse,
            "candidate_gap_inverse_sqrt": cand_sqrt,
            "winner": winner,
            "sqrt_variant_rejected": bool(
                winner == "gap_inverse" and abs(mean_norm - cand_sqrt) > STAT_TOL
            ),
            "tolerance": STAT_TOL,
            "pass": abs(mean_norm - cand_inverse) <= STAT_TOL,
        },
        "gram_compression": {
            "kind": "statistical",
            "op_norm_errors": gram_errors,
            "median_error": float(np.median(gram_errors)),
            "tolerance": GRAM_TOL,
            "pass": float(np.median(gram_errors)) <= GRAM_TOL,
        },
        "continuity": {
            "kind": "deterministic",
            "difference_norms": continuity_norms,
            "bounds": continuity_bounds,
            "inequality_satisfied": continuity_ok,
            "pass": all(continuity_ok),
        },
    }
    deterministic_pass = bool(all(block_bound_ok) and all(continuity_ok))
    report["all_deterministic_pass"] = deterministic_pass
    report["all_pass"] = bool(
        deterministic_pass
        and report["bilinear_form"]["pass"]
        and report["resolvent_norm"]["pass"]
        and report["gram_compression"]["pass"]
    )
    (out / "lemma_report.json").write_text(
        json.dumps(report, indent=2, sort_keys=True) + "\n"
    )
    for name in (
        "bilinear_form",
        "block_compression",
        "resolvent_norm",
        "gram_compression",
        "continuity",
    ):
        state = "pass" if report[name]["pass"] else "FAIL"
        print(f"{name} [{report[name]['kind']}]: {state}")
    print(f"wrote {out / 'lemma_report.json'}")
    if not deterministic_pass:
        print("error: a deterministic resolvent inequality failed", file=sys.stderr)
        return EXIT_RUNTIME
    return EXIT_OK


def _cmd_spectrum_plot(args) -> int:
    cfg = load_config(args.config)
    out = Path(args.out) if args.out else cfg.output_dir
    for n in cfg.n_list:
        if n > DENSE_ORACLE_GUARD:
            raise ConfigurationError(
                f"spectrum plotting requires the dense oracle, limited to "
                f"n <= {DENSE_ORACLE_GUARD}; config has n = {n}"
            )
    out.mkdir(parents=True, exist_ok=True)
    trial = args.trial
    seed = derive_trial_seed(cfg.base_seed, trial)
    for position, n in enumerate(cfg.n_list):
        k = _sparsity_for(cfg, position)
        model = SparseModelConfig(
            n=n, sparsity_k=k, distribution=cfg.distribution, seed=seed
        )
        sample = zero_matrix(model) if cfg.force_zero_matrix else sample_sparse_matrix(model)
        perturbation = build_perturbation(cfg.spike_spec, n, seed=cfg.base_seed)
        dense = sample.toarray() + perturbation.assemble_dense()
        eigenvalues = dense_spectrum_oracle(dense)
        report = spectral_report(
            sample, perturbation, cfg.epsilon_band, eigenvalues=eigenvalues
        )
        path = out / f"spectrum_{n}_{trial}.svg"
        plots.render_spectrum(
            path,
            eigenvalues,
            report.epsilon_band,
            cfg.spike_spec.values,
            title=f"n = {n}, K = {k}, trial {trial}",
        )
        print(
            f"n={n}: {len(report.outliers)} outliers beyond 1 + "
            f"{report.epsilon_band:.3g} (expected {report.expected_count}), "
            f"wrote {path}"
        )
    return EXIT_OK


def _parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="spikeoverlap",
        description=(
            "Simulate sparse random matrices under finite-rank perturbations "
            "and verify outlier eigenvalue and eigenvector limits."
        ),
    )
    sub = parser.add_subparsers(dest="command", required=True)

    run_p = sub.add_parser("run", help="run the convergence study from a config file")
    run_p.add_argument("--config", required=True, help="path to a JSON experiment file")
    run_p.add_argument("--out", default=None, help="output directory override")
    run_p.add_argument(
        "--threads", type=int, default=1,
        help="worker processes for trials (default 1)",
    )

    verify_p = sub.add_parser(
        "verify-lemmas", help="spot-check the resolvent limit laws"
    )
    verify_p.add_argument("--config", required=True)
    verify_p.add_argument("--out", default=None)

    plot_p = sub.add_parser(
        "spectrum-plot", help="render dense spectra with the outlier band"
    )
    plot_p.add_argument("--config", required=True)
    plot_p.add_argument("--out", default=None)
    plot_p.add_argument("--trial", type=int, default=0, help="trial index to draw")

    sub.add_parser("version", help="print the package version")
    return parser


def main(argv=None) -> int:
    args = _parser().parse_args(argv)
    if args.command == "version":
        print(f"spikeoverlap {__version__}")
        return EXIT_OK
    try:
        if args.command == "run":
            return _cmd_run(args)
        if args.command == "verify-lemmas":
            return _cmd_verify_lemmas(args)
        if args.command == "spectrum-plot":
            return _cmd_spectrum_plot(args)
    except ConfigurationError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except SpikeOverlapError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_RUNTIME
    raise AssertionError(f"unhandled command {args.command}")


if __name__ == "__main__":
    sys.exit(main())
