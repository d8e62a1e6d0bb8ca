"""Outlier location: dense spectral oracle, determinant root finding, set metrics."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla

from .errors import ConfigurationError, ConvergenceError, OracleError
from .matrix_model import SparseMatrix
from .perturbation import Perturbation, SpikeSpec
from .resolvent import ResolventHandle, compressed_resolvent

DENSE_ORACLE_GUARD = 5000
SINGULAR_VALUE_TOL = 1e-6
DERIVATIVE_STEP = 1e-6
DEDUPE_DISTANCE = 1e-4


def hausdorff_distance(first, second) -> float:
    """Hausdorff distance between two finite subsets of the complex plane.

    Both sets empty gives 0; exactly one empty gives +inf.
    """
    a = np.asarray(list(first), dtype=np.complex128)
    b = np.asarray(list(second), dtype=np.complex128)
    if a.size == 0 and b.size == 0:
        return 0.0
    if a.size == 0 or b.size == 0:
        return float("inf")
    d = np.abs(a[:, None] - b[None, :])
    return float(max(d.min(axis=1).max(), d.min(axis=0).max()))


def dense_spectrum_oracle(matrix: np.ndarray, eigenvectors: bool = False):
    """Full nonsymmetric spectrum via LAPACK; the reference the fast path is
    validated against. Guarded to n <= DENSE_ORACLE_GUARD."""
    a = np.asarray(matrix)
    if a.ndim != 2 or a.shape[0] != a.shape[1]:
        raise ConfigurationError(f"oracle expects a square matrix, got shape {a.shape}")
    n = a.shape[0]
    if n > DENSE_ORACLE_GUARD:
        raise ConfigurationError(
            f"dense oracle limited to n <= {DENSE_ORACLE_GUARD}, got n = {n}"
        )
    try:
        if eigenvectors:
            return sla.eig(a)
        return sla.eig(a, right=False)
    except sla.LinAlgError as exc:
        raise OracleError(f"dense eigensolver failed: {exc}") from exc


def default_epsilon_band(spec: SpikeSpec) -> float:
    """Band margin 0.1 * (min |mu| - 1) separating outliers from the bulk."""
    return 0.1 * (min(abs(mu) for mu in spec.values) - 1.0)


def _characteristic_at(sample: SparseMatrix, perturbation: Perturbation, z: complex):
    handle = ResolventHandle(sample, z)
    return compressed_resolvent(handle, perturbation).characteristic()


def locate_outlier_newton(
    sample: SparseMatrix,
    perturbation: Perturbation,
    mu_init: complex,
    max_iter: int = 40,
    tol: float = 1e-10,
    epsilon_band: float | None = None,
) -> complex:
    """Newton iteration on det(I + M(lambda)) from a guess near a spike.

    det(I + M) is holomorphic outside the bulk, so a central-difference
    derivative suffices. Each evaluation refactorizes at the new shift.
    Raises ConvergenceError if the iteration stalls, the derivative
    vanishes, or an iterate falls toward the bulk.
    """
    band = default_epsilon_band(perturbation.spec) if epsilon_band is None else float(epsilon_band)
    lam = complex(mu_init)
    if abs(lam) <= 1.0 + band:
        raise ValueError(
            f"starting guess must satisfy |mu_init| > 1 + {band:.4g}, got |{lam}|"
        )
    floor = 1.0 + band / 2.0
    for _ in range(max_iter):
        k = _characteristic_at(sample, perturbation, lam)
        f = complex(np.linalg.det(k))
        if abs(f) <= tol:
            smallest = float(np.linalg.svd(k, compute_uv=False)[-1])
            if smallest <= SINGULAR_VALUE_TOL:
                return lam
        h = DERIVATIVE_STEP * (1.0 + abs(lam))
        f_plus = complex(np.linalg.det(_characteristic_at(sample, perturbation, lam + h)))
        f_minus = complex(np.linalg.det(_characteristic_at(sample, perturbation, lam - h)))
        derivative = (f_plus - f_minus) / (2.0 * h)
        if derivative == 0:
            raise ConvergenceError(f"determinant derivative vanished at {lam}")
        # a spike of multiplicity m makes lambda an m-fold root, where plain
        # Newton slows to linear; the f/f' correction keeps it quadratic for
        # any multiplicity up to the rank cap
        curvature = (f_plus - 2.0 * f + f_minus) / h**2
        denominator = derivative**2 - f * curvature
        if abs(denominator) > abs(derivative) ** 2 / 32.0:
            lam = lam - f * derivative / denominator
        else:
            lam = lam - f / derivative
        if abs(lam) <= floor:
            raise ConvergenceError(
                f"iterate {lam} left the outlier region |z| > {floor:.4g}"
            )
    raise ConvergenceError(
        f"no root of det(I + M) within {max_iter} iterations from {mu_init}"
    )


def locate_spike_outliers(
    sample: SparseMatrix,
    perturbation: Perturbation,
    spike_index: int,
    max_iter: int = 40,
    tol: float = 1e-10,
    epsilon_band: float | None = None,
) -> list[complex]:
    """Outliers split from one spike: Newton from multiplicity-many perturbed
    starts around it, deduplicated to DEDUPE_DISTANCE."""
    mu, multiplicity = perturbation.spec.spikes[spike_index]
    roots: list[complex] = []
    last_error: ConvergenceError | None = None
    for j in range(multiplicity):
        start = mu * (1.0 + 1e-2 * np.exp(2j * np.pi * j / multiplicity))
        try:
            root = locate_outlier_newton(
                sample, perturbation, start, max_iter=max_iter, tol=tol,
                epsilon_band=epsilon_band,
            )
        except ConvergenceError as exc:
            last_error = exc
            continue
        if all(abs(root - other) > DEDUPE_DISTANCE for other in roots):
            roots.append(root)
    if not roots:
        raise ConvergenceError(
            f"no outlier located near spike {mu}: {last_error}"
        )
    return roots


@dataclass(frozen=True)
class SpectralReport:
    """Oracle outliers beyond the band, matched against the spike targets."""

    epsilon_band: float
    outliers: tuple[complex, ...]
    spike_targets: tuple[complex, ...]
    expected_count: int
    count_match: bool
    hausdorff: float


def spectral_report(
    sample: SparseMatrix,
    perturbation: Perturbation,
    epsilon_band: float | None = None,
    eigenvalues: np.ndarray | None = None,
) -> SpectralReport:
    """Compare the dense spectrum against the configured spikes.

    Counts eigenvalues with |z| >= 1 + band, in the multiplicity-weighted
    sense, and measures the Hausdorff distance to the distinct spike values.
    Pass precomputed eigenvalues to skip the oracle call.
    """
    spec = perturbation.spec
    band = default_epsilon_band(spec) if epsilon_band is None else float(epsilon_band)
    if band <= 0:
        raise ConfigurationError(f"epsilon band must be positive, got {band}")
    if eigenvalues is None:
        dense = sample.toarray() + perturbation.assemble_dense()
        eigenvalues = dense_spectrum_oracle(dense)
    outliers = tuple(complex(z) for z in eigenvalues if abs(z) >= 1.0 + band)
    targets = tuple(mu for mu in spec.values if abs(mu) > 1.0)
    expected = sum(k for mu, k in spec.spikes if abs(mu) > 1.0)
    return SpectralReport(
        epsilon_band=band,
        outliers=outliers,
        spike_targets=targets,
        expected_count=expected,
        count_match=len(outliers) == expected,
        hausdorff=hausdorff_distance(outliers, targets),
    )
