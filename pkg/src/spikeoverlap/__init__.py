"""Outlier eigenpairs of sparse random matrices under finite-rank perturbations.

The package samples sparse i.i.d. matrices, adds deterministic finite-rank
spikes, locates the outlier eigenvalues through an r-dimensional compressed
resolvent, reconstructs the attached eigenvectors, and measures how their
overlaps with the spike eigenspaces approach the 1 - 1/|mu|^2 limit.
"""

__version__ = "0.1.0"

from .config import ExperimentConfig, load_config
from .errors import (
    ConfigurationError,
    ConvergenceError,
    OracleError,
    ReconstructionError,
    ResolventSingularError,
    SpikeOverlapError,
)
from .experiments import (
    ConvergenceTable,
    SpikeOutcome,
    SpikeRow,
    TrialResult,
    derive_trial_seed,
    run_convergence_study,
    run_trial,
    verify_bilinear_form,
    verify_block_resolvent,
    verify_gram_resolvent,
    verify_resolvent_continuity,
    verify_resolvent_norm,
)
from .matrix_model import (
    EntryDistribution,
    SparseMatrix,
    SparseModelConfig,
    default_k_schedule,
    sample_sparse_matrix,
    zero_matrix,
)
from .outliers import (
    SpectralReport,
    default_epsilon_band,
    dense_spectrum_oracle,
    hausdorff_distance,
    locate_outlier_newton,
    locate_spike_outliers,
    spectral_report,
)
from .perturbation import (
    Perturbation,
    SpikeEigenspace,
    SpikeSpec,
    build_perturbation,
    overlap_squared,
    spike_eigenspace,
)
from .resolvent import (
    CompressedResolvent,
    KernelDecomposition,
    ResolventHandle,
    compressed_resolvent,
    factorize,
    kernel_basis,
    kernel_localization,
    localize_kernel_vector,
    reconstruct_eigenvector,
)

__all__ = [
    "__version__",
    "ConfigurationError",
    "ConvergenceError",
    "OracleError",
    "ReconstructionError",
    "ResolventSingularError",
    "SpikeOverlapError",
    "ExperimentConfig",
    "load_config",
    "EntryDistribution",
    "SparseMatrix",
    "SparseModelConfig",
    "default_k_schedule",
    "sample_sparse_matrix",
    "zero_matrix",
    "SpikeSpec",
    "SpikeEigenspace",
    "Perturbation",
    "build_perturbation",
    "spike_eigenspace",
    "overlap_squared",
    "ResolventHandle",
    "CompressedResolvent",
    "KernelDecomposition",
    "factorize",
    "compressed_resolvent",
    "kernel_basis",
    "kernel_localization",
    "localize_kernel_vector",
    "reconstruct_eigenvector",
    "SpectralReport",
    "default_epsilon_band",
    "dense_spectrum_oracle",
    "hausdorff_distance",
    "locate_outlier_newton",
    "locate_spike_outliers",
    "spectral_report",
    "SpikeOutcome",
    "SpikeRow",
    "TrialResult",
    "ConvergenceTable",
    "derive_trial_seed",
    "run_trial",
    "run_convergence_study",
    "verify_bilinear_form",
    "verify_block_resolvent",
    "verify_gram_resolvent",
    "verify_resolvent_continuity",
    "verify_resolvent_norm",
]
