"""Per-trial eigenpair pipeline, Monte Carlo aggregation, resolvent spot checks.

One trial samples X, locates the outlier split from each spike by Newton on
det(I + M(lambda)), lifts a kernel vector to a unit eigenvector, and records
its squared overlaps with every spike eigenspace. A convergence study repeats
this over seeds and dimensions and folds the results into per-spike rows.
"""

from __future__ import annotations

import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, replace

import numpy as np

from .errors import (
    ConfigurationError,
    ConvergenceError,
    ReconstructionError,
    ResolventSingularError,
)
from .matrix_model import (
    EntryDistribution,
    SparseMatrix,
    SparseModelConfig,
    default_k_schedule,
    sample_sparse_matrix,
    zero_matrix,
)
from .outliers import SpectralReport, locate_spike_outliers, spectral_report
from .perturbation import (
    Perturbation,
    SpikeEigenspace,
    SpikeSpec,
    build_perturbation,
    overlap_squared,
    spike_eigenspace,
)
from .resolvent import (
    compressed_resolvent,
    estimate_operator_norm,
    factorize,
    kernel_basis,
    kernel_localization,
    reconstruct_eigenvector,
)

RESOLVENT_HEALTH_BOUND = 50.0
EIGEN_RESIDUAL_TOL = 1e-6
ORACLE_DIMENSION_LIMIT = 5000

_UNIT_TOL = 1e-8
_FACTOR_NORM_CAP = 100.0


def _inner(x: np.ndarray, y: np.ndarray) -> complex:
    # <x, y>, linear in the first argument
    return complex(np.vdot(y, x))


def _require_unit(name: str, vec: np.ndarray) -> np.ndarray:
    v = np.asarray(vec, dtype=np.complex128)
    if abs(np.linalg.norm(v) - 1.0) > _UNIT_TOL:
        raise ValueError(f"{name} must be a unit vector")
    return v


def _require_outside_disk(z: complex) -> complex:
    z = complex(z)
    if abs(z) <= 1.0:
        raise ValueError(f"shift must lie outside the unit disk, got |z| = {abs(z):.4f}")
    return z


def _require_bounded_rows(name: str, c: np.ndarray) -> np.ndarray:
    c = np.asarray(c, dtype=np.complex128)
    if c.ndim != 2:
        raise ValueError(f"{name} must be a 2-D array of row vectors")
    if np.linalg.norm(c, axis=1).max(initial=0.0) > _FACTOR_NORM_CAP:
        raise ValueError(f"{name} rows exceed the norm cap {_FACTOR_NORM_CAP}")
    return c


def derive_trial_seed(base_seed: int, trial_index: int) -> int:
    """Independent 64-bit key for one trial, stable across platforms."""
    ss = np.random.SeedSequence(entropy=base_seed, spawn_key=(trial_index,))
    return int(ss.generate_state(1, np.uint64)[0])


def _finite_or_none(x: float | None):
    if x is None:
        return None
    x = float(x)
    if math.isfinite(x):
        return x
    return "inf" if x > 0 else ("-inf" if x < 0 else "nan")


@dataclass(frozen=True)
class SpikeOutcome:
    """Pipeline result for one spike within one trial."""

    spike_index: int
    mu: complex
    multiplicity: int
    ok: bool
    reason: str = ""
    located: complex | None = None
    overlap_sq: float | None = None
    cross_overlaps: dict[int, float] | None = None
    cross_predicted: dict[int, float] | None = None
    eigen_residual: float | None = None
    kernel_epsilon: float | None = None
    localization_bound: float | None = None
    separation: float | None = None
    resolvent_norm: float | None = None

    def to_dict(self) -> dict:
        return {
            "spike_index": self.spike_index,
            "mu": {"re": self.mu.real, "im": self.mu.imag},
            "multiplicity": self.multiplicity,
            "ok": self.ok,
            "reason": self.reason,
            "located": None
            if self.located is None
            else {"re": self.located.real, "im": self.located.imag},
            "overlap_sq": self.overlap_sq,
            "cross_overlaps": None
            if self.cross_overlaps is None
            else {str(k): v for k, v in sorted(self.cross_overlaps.items())},
            "cross_predicted": None
            if self.cross_predicted is None
            else {
                str(k): _finite_or_none(v)
                for k, v in sorted(self.cross_predicted.items())
            },
            "eigen_residual": self.eigen_residual,
            "kernel_epsilon": self.kernel_epsilon,
            "localization_bound": _finite_or_none(self.localization_bound),
            "separation": _finite_or_none(self.separation),
            "resolvent_norm": self.resolvent_norm,
        }


@dataclass(frozen=True)
class TrialResult:
    """All spike outcomes of a single sampled matrix."""

    trial_seed: int
    n: int
    sparsity_k: int
    spikes: tuple[SpikeOutcome, ...]
    resolvent_healthy: bool

    def to_dict(self) -> dict:
        return {
            "trial_seed": self.trial_seed,
            "n": self.n,
            "sparsity_k": self.sparsity_k,
            "resolvent_healthy": self.resolvent_healthy,
            "spikes": [s.to_dict() for s in self.spikes],
        }


def _predicted_cross(
    perturbation: Perturbation,
    index: int,
    other: int,
    resonant: np.ndarray,
    spaces: list[SpikeEigenspace],
) -> float:
    # limiting cross overlap onto spike `other` for the resonant direction c
    # at `index`: ((|mu|^2 - 1)/|mu|) ||Q' * Q c||^2. Report-only; it vanishes
    # whenever the eigenspaces are orthogonal.
    mu = perturbation.spec.spikes[index][0]
    block = perturbation.spec.block_slice(index)
    w_hat = perturbation.p_factor[:, block] @ resonant
    c = spaces[index].q_basis.conj().T @ w_hat
    c_norm = np.linalg.norm(c)
    if c_norm < 1e-300:
        return float("nan")
    direction = spaces[index].q_basis @ (c / c_norm)
    gram = spaces[other].q_basis.conj().T @ direction
    scale = (abs(mu) ** 2 - 1.0) / abs(mu)
    return float(scale * np.vdot(gram, gram).real)


def _spike_pipeline(
    sample: SparseMatrix,
    perturbation: Perturbation,
    spaces: list[SpikeEigenspace],
    index: int,
    epsilon_band: float | None,
    newton_max_iter: int,
    newton_tol: float,
) -> SpikeOutcome:
    mu, multiplicity = perturbation.spec.spikes[index]
    base = dict(spike_index=index, mu=mu, multiplicity=multiplicity)
    try:
        roots = locate_spike_outliers(
            sample, perturbation, index,
            max_iter=newton_max_iter, tol=newton_tol, epsilon_band=epsilon_band,
        )
        lam = min(roots, key=lambda z: abs(z - mu))
        handle = factorize(sample, lam)
        if handle.norm_estimate > RESOLVENT_HEALTH_BOUND:
            return SpikeOutcome(
                ok=False,
                reason=f"resolvent norm estimate {handle.norm_estimate:.1f} "
                f"exceeds the health bound {RESOLVENT_HEALTH_BOUND}",
                located=lam,
                resolvent_norm=handle.norm_estimate,
                **base,
            )
        compressed = compressed_resolvent(handle, perturbation)
        vectors = kernel_basis(compressed)
        if not vectors:
            return SpikeOutcome(
                ok=False,
                reason="characteristic matrix has no numerical kernel at the located root",
                located=lam,
                resolvent_norm=handle.norm_estimate,
                **base,
            )
        a = vectors[0]
        decomposition = kernel_localization(a, perturbation, mu, compressed)
        vector = reconstruct_eigenvector(handle, perturbation, a)
        residual = float(
            np.linalg.norm(
                sample.matrix @ vector + perturbation.apply(vector) - lam * vector
            )
        )
    except (ConvergenceError, ResolventSingularError, ReconstructionError) as exc:
        return SpikeOutcome(ok=False, reason=str(exc), **base)
    cross: dict[int, float] = {}
    predicted: dict[int, float] = {}
    for other in range(len(spaces)):
        if other == index:
            continue
        cross[other] = overlap_squared(vector, spaces[other])
        predicted[other] = _predicted_cross(
            perturbation, index, other, decomposition.resonant, spaces
        )
    ok = residual <= EIGEN_RESIDUAL_TOL
    return SpikeOutcome(
        ok=ok,
        reason="" if ok else f"eigen residual {residual:.2e} exceeds {EIGEN_RESIDUAL_TOL:.0e}",
        located=lam,
        overlap_sq=overlap_squared(vector, spaces[index]),
        cross_overlaps=cross,
        cross_predicted=predicted,
        eigen_residual=residual,
        kernel_epsilon=decomposition.epsilon,
        localization_bound=decomposition.bound,
        separation=decomposition.separation,
        resolvent_norm=handle.norm_estimate,
        **base,
    )


def run_trial(
    model_config: SparseModelConfig,
    spike_spec: SpikeSpec,
    trial_seed: int,
    force_zero: bool = False,
    epsilon_band: float | None = None,
    newton_max_iter: int = 40,
    newton_tol: float = 1e-10,
) -> TrialResult:
    """Run the full pipeline for one sampled matrix.

    The perturbation is keyed by model_config.seed and therefore identical
    across trials; trial_seed only drives the matrix sample.
    """
    cfg = replace(model_config, seed=int(trial_seed))
    sample = zero_matrix(cfg) if force_zero else sample_sparse_matrix(cfg)
    perturbation = build_perturbation(spike_spec, cfg.n, seed=model_config.seed)
    spaces = [spike_eigenspace(perturbation, mu) for mu in spike_spec.values]
    outcomes = []
    healthy = True
    for index in range(len(spike_spec.spikes)):
        outcome = _spike_pipeline(
            sample, perturbation, spaces, index,
            epsilon_band, newton_max_iter, newton_tol,
        )
        if outcome.resolvent_norm is not None:
            healthy = healthy and outcome.resolvent_norm <= RESOLVENT_HEALTH_BOUND
        outcomes.append(outcome)
    return TrialResult(
        trial_seed=int(trial_seed),
        n=cfg.n,
        sparsity_k=cfg.sparsity_k,
        spikes=tuple(outcomes),
        resolvent_healthy=healthy,
    )


@dataclass(frozen=True)
class SpikeRow:
    """Aggregated statistics for one (dimension, spike) cell of a study."""

    n: int
    sparsity_k: int
    spike_index: int
    mu: complex
    multiplicity: int
    trials: int
    failures: int
    mean_overlap: float
    std_overlap: float
    limit: float
    mean_hausdorff: float
    median_hausdorff: float
    count_success_rate: float


@dataclass
class ConvergenceTable:
    """Rows of a study plus the raw per-trial material behind them."""

    rows: list[SpikeRow]
    trials: dict[int, list[TrialResult]]
    spectral: dict[int, list[SpectralReport]]

    def total_spike_runs(self) -> int:
        return sum(len(t.spikes) for ts in self.trials.values() for t in ts)

    def total_failures(self) -> int:
        return sum(
            1 for ts in self.trials.values() for t in ts for s in t.spikes if not s.ok
        )


def _trial_task(args) -> tuple[TrialResult, SpectralReport | None]:
    model, spec, seed, force_zero, band, with_oracle = args
    result = run_trial(model, spec, seed, force_zero=force_zero, epsilon_band=band)
    report = None
    if with_oracle:
        cfg = replace(model, seed=int(seed))
        sample = zero_matrix(cfg) if force_zero else sample_sparse_matrix(cfg)
        perturbation = build_perturbation(spec, model.n, seed=model.seed)
        report = spectral_report(sample, perturbation, band)
    return result, report


def run_convergence_study(
    n_list,
    k_exponent: float | None,
    spike_spec: SpikeSpec,
    trials_per_n: int,
    base_seed: int,
    k_list=None,
    distribution: EntryDistribution = EntryDistribution.COMPLEX_GAUSSIAN,
    epsilon_band: float | None = None,
    oracle: bool = True,
    threads: int = 1,
    force_zero: bool = False,
) -> ConvergenceTable:
    """Monte Carlo study across a ladder of dimensions.

    Either k_exponent or an explicit k_list (one K per n) fixes the sparsity.
    With oracle enabled, each trial also runs the dense spectral report, which
    is what feeds the Hausdorff and count columns; the oracle is skipped above
    ORACLE_DIMENSION_LIMIT. Trials may run in worker processes; aggregation
    is an ordered fold, so results do not depend on scheduling.
    """
    n_list = [int(n) for n in n_list]
    if not n_list:
        raise ConfigurationError("n_list must not be empty")
    if any(b <= a for a, b in zip(n_list, n_list[1:])):
        raise ConfigurationError(f"n_list must be strictly ascending, got {n_list}")
    if trials_per_n < 1:
        raise ConfigurationError(f"trials_per_n must be positive, got {trials_per_n}")
    if (k_exponent is None) == (k_list is None):
        raise ConfigurationError("exactly one of k_exponent or k_list is required")
    if k_list is not None and len(k_list) != len(n_list):
        raise ConfigurationError(
            f"k_list has {len(k_list)} entries for {len(n_list)} dimensions"
        )

    seeds = [derive_trial_seed(base_seed, t) for t in range(trials_per_n)]
    rows: list[SpikeRow] = []
    all_trials: dict[int, list[TrialResult]] = {}
    all_reports: dict[int, list[SpectralReport]] = {}
    for pos, n in enumerate(n_list):
        k = int(k_list[pos]) if k_list is not None else default_k_schedule(n, k_exponent)
        model = SparseModelConfig(
            n=n, sparsity_k=k, distribution=distribution, seed=base_seed
        )
        with_oracle = oracle and n <= ORACLE_DIMENSION_LIMIT
        tasks = [
            (model, spike_spec, seed, force_zero, epsilon_band, with_oracle)
            for seed in seeds
        ]
        if threads > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                outcomes = list(pool.map(_trial_task, tasks))
        else:
            outcomes = [_trial_task(t) for t in tasks]
        trials = [r for r, _ in outcomes]
        reports = [rep for _, rep in outcomes if rep is not None]
        all_trials[n] = trials
        all_reports[n] = reports
        rows.extend(_aggregate_rows(n, k, spike_spec, trials, reports))
    return ConvergenceTable(rows=rows, trials=all_trials, spectral=all_reports)


def _aggregate_rows(
    n: int,
    k: int,
    spec: SpikeSpec,
    trials: list[TrialResult],
    reports: list[SpectralReport],
) -> list[SpikeRow]:
    if reports:
        hs = [r.hausdorff for r in reports]
        mean_h = float(np.mean(hs))
        median_h = float(np.median(hs))
        rate = float(np.mean([1.0 if r.count_match else 0.0 for r in reports]))
    else:
        mean_h = median_h = rate = float("nan")
    rows = []
    for index, (mu, multiplicity) in enumerate(spec.spikes):
        overlaps = [
            t.spikes[index].overlap_sq
            for t in trials
            if t.spikes[index].ok and t.spikes[index].overlap_sq is not None
        ]
        if overlaps:
            mean_overlap = float(np.mean(overlaps))
            std_overlap = float(np.std(overlaps, ddof=1)) if len(overlaps) > 1 else 0.0
        else:
            mean_overlap = std_overlap = float("nan")
        rows.append(
            SpikeRow(
                n=n,
                sparsity_k=k,
                spike_index=index,
                mu=mu,
                multiplicity=multiplicity,
                trials=len(trials),
                failures=len(trials) - len(overlaps),
                mean_overlap=mean_overlap,
                std_overlap=std_overlap,
                limit=spec.overlap_limit(index),
                mean_hausdorff=mean_h,
                median_hausdorff=median_h,
                count_success_rate=rate,
            )
        )
    return rows


# resolvent limit spot checks


@dataclass(frozen=True)
class BilinearFormCheck:
    measured: complex
    predicted: complex
    abs_error: float


def verify_bilinear_form(
    sample: SparseMatrix, z: complex, u: np.ndarray, v: np.ndarray
) -> BilinearFormCheck:
    """Compare <R(z)u, v> with its deterministic limit -<u, v>/z."""
    z = _require_outside_disk(z)
    u = _require_unit("u", u)
    v = _require_unit("v", v)
    handle = factorize(sample, z)
    measured = _inner(handle.solve(u), v)
    predicted = -_inner(u, v) / z
    return BilinearFormCheck(
        measured=measured, predicted=predicted, abs_error=abs(measured - predicted)
    )


@dataclass(frozen=True)
class BlockResolventCheck:
    op_norm_error: float
    max_entry_error: float
    rank_bound: float


def verify_block_resolvent(
    sample: SparseMatrix, z: complex, c1: np.ndarray, c2: np.ndarray
) -> BlockResolventCheck:
    """Operator-norm deviation of C1 R(z) C2* from -(1/z) C1 C2*.

    rank_bound is k1 * k2 * max_entry_error, which always dominates the
    operator norm of the deviation.
    """
    z = _require_outside_disk(z)
    c1 = _require_bounded_rows("c1", c1)
    c2 = _require_bounded_rows("c2", c2)
    handle = factorize(sample, z)
    deviation = c1 @ handle.solve(c2.conj().T) + (c1 @ c2.conj().T) / z
    op = float(np.linalg.norm(deviation, 2))
    entry = float(np.abs(deviation).max(initial=0.0))
    return BlockResolventCheck(
        op_norm_error=op,
        max_entry_error=entry,
        rank_bound=float(c1.shape[0] * c2.shape[0]) * entry,
    )


@dataclass(frozen=True)
class ResolventNormCheck:
    measured_sq: float
    candidate_gap_inverse: float
    candidate_gap_inverse_sqrt: float


def verify_resolvent_norm(
    sample: SparseMatrix, z: complex, w: np.ndarray
) -> ResolventNormCheck:
    """Measure ||R(z)w||^2 against the two competing limit candidates.

    The candidates are 1/(|z|^2 - 1) and 1/sqrt(|z|^2 - 1); the data decides.
    """
    z = _require_outside_disk(z)
    w = _require_unit("w", w)
    handle = factorize(sample, z)
    gap = abs(z) ** 2 - 1.0
    return ResolventNormCheck(
        measured_sq=float(np.linalg.norm(handle.solve(w)) ** 2),
        candidate_gap_inverse=1.0 / gap,
        candidate_gap_inverse_sqrt=1.0 / math.sqrt(gap),
    )


@dataclass(frozen=True)
class GramResolventCheck:
    op_norm_error: float


def verify_gram_resolvent(
    sample: SparseMatrix, z: complex, c1: np.ndarray, c2: np.ndarray
) -> GramResolventCheck:
    """Deviation of C1 R(z)* R(z) C2* from C1 C2* / (|z|^2 - 1)."""
    z = _require_outside_disk(z)
    c1 = _require_bounded_rows("c1", c1)
    c2 = _require_bounded_rows("c2", c2)
    handle = factorize(sample, z)
    rc1 = handle.solve(c1.conj().T)
    rc2 = handle.solve(c2.conj().T)
    gram = rc1.conj().T @ rc2
    deviation = gram - (c1 @ c2.conj().T) / (abs(z) ** 2 - 1.0)
    return GramResolventCheck(op_norm_error=float(np.linalg.norm(deviation, 2)))


@dataclass(frozen=True)
class ContinuityCheck:
    difference_norm: float
    bound: float
    norm_at_shift: float
    norm_at_perturbed: float


def verify_resolvent_continuity(
    sample: SparseMatrix, z: complex, z_n: complex
) -> ContinuityCheck:
    """Check ||R(z_n) - R(z)|| against the identity bound |z - z_n| ||R(z_n)|| ||R(z)||.

    All three norms come from converged power iteration, so the inequality is
    deterministic up to relative tolerance on the estimates.
    """
    z = _require_outside_disk(z)
    z_n = _require_outside_disk(z_n)
    h_z = factorize(sample, z)
    h_n = factorize(sample, z_n)
    n = sample.n

    def diff(vec):
        return h_n.solve(vec) - h_z.solve(vec)

    def diff_adj(vec):
        return h_n.solve_adjoint(vec) - h_z.solve_adjoint(vec)

    difference = estimate_operator_norm(lambda v: diff_adj(diff(v)), n)
    norm_z = estimate_operator_norm(lambda v: h_z.solve_adjoint(h_z.solve(v)), n)
    norm_n = estimate_operator_norm(lambda v: h_n.solve_adjoint(h_n.solve(v)), n)
    return ContinuityCheck(
        difference_norm=difference,
        bound=abs(z - z_n) * norm_z * norm_n,
        norm_at_shift=norm_z,
        norm_at_perturbed=norm_n,
    )
