"""Shifted factorizations and the rank-r compressed resolvent.

For a sample X and shift lambda outside the spectrum, R = (X - lambda I)^-1.
Compressing R along the perturbation factors gives the r x r matrix
M = V* R U; lambda is an eigenvalue of X + UV* exactly when I + M is
singular, and kernel vectors of I + M lift to eigenvectors through R U.
"""

from __future__ import annotations

import threading
import warnings
from dataclasses import dataclass

import numpy as np
import scipy.linalg as sla
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .errors import ReconstructionError, ResolventSingularError
from .matrix_model import SparseMatrix
from .perturbation import Perturbation

DENSE_DIMENSION = 200
# above this fill fraction dense LAPACK factorization beats the sparse LU
DENSE_DENSITY = 0.05
SOLVE_RESIDUAL_TOL = 1e-8
NORM_ESTIMATE_ITERATIONS = 5
RECONSTRUCTION_FLOOR = 1e-14


class ResolventHandle:
    """Factorization of (X - shift I) supporting repeated multi-RHS solves.

    Solves are read-only with respect to the factorization; the sparse path
    serializes access behind an internal lock, so one handle may be shared
    between threads.
    """

    def __init__(self, sample: SparseMatrix, shift: complex):
        self.shift = complex(shift)
        self.n = sample.n
        self._lock = threading.Lock()
        n = self.n
        use_dense = n <= DENSE_DIMENSION or sample.density >= DENSE_DENSITY
        try:
            with warnings.catch_warnings():
                warnings.simplefilter("ignore", sla.LinAlgWarning)
                if use_dense:
                    shifted = sample.toarray()
                    shifted[np.diag_indices(n)] -= self.shift
                    self._lu = sla.lu_factor(shifted)
                    self._dense = True
                else:
                    eye = sp.eye_array(n, dtype=np.complex128, format="csr")
                    shifted = (sample.matrix - self.shift * eye).tocsc()
                    self._lu = spla.splu(shifted, permc_spec="COLAMD")
                    self._dense = False
        except (RuntimeError, sla.LinAlgError) as exc:
            raise ResolventSingularError(
                f"factorization of (X - ({self.shift})I) failed: {exc}"
            ) from exc
        self._probe(sample)
        self.norm_estimate = self._power_norm_estimate()

    def solve(self, rhs: np.ndarray) -> np.ndarray:
        """Apply R(shift) to one vector or a stack of columns."""
        rhs = np.asarray(rhs, dtype=np.complex128)
        if self._dense:
            return sla.lu_solve(self._lu, rhs)
        with self._lock:
            return self._lu.solve(rhs)

    def solve_adjoint(self, rhs: np.ndarray) -> np.ndarray:
        """Apply the conjugate transpose R(shift)* to the right hand side."""
        rhs = np.asarray(rhs, dtype=np.complex128)
        if self._dense:
            return sla.lu_solve(self._lu, rhs, trans=2)
        with self._lock:
            return self._lu.solve(rhs, trans="H")

    def _probe(self, sample: SparseMatrix) -> None:
        # LAPACK lets singular-to-tolerance factors through with a warning;
        # a residual check on a fixed probe vector catches them.
        rng = np.random.Generator(np.random.Philox(key=0x9E3779B9))
        b = rng.standard_normal(self.n) + 1j * rng.standard_normal(self.n)
        x = self.solve(b)
        residual = np.linalg.norm(sample.matrix @ x - self.shift * x - b)
        if not residual <= SOLVE_RESIDUAL_TOL * np.linalg.norm(b):
            raise ResolventSingularError(
                f"shift {self.shift} is singular to tolerance: probe residual "
                f"{residual:.2e} exceeds {SOLVE_RESIDUAL_TOL:.0e}"
            )

    def _power_norm_estimate(self) -> float:
        # a few rounds of power iteration on R*R; cheap health signal, not a
        # converged norm
        rng = np.random.Generator(np.random.Philox(key=0x51A7))
        v = rng.standard_normal(self.n) + 1j * rng.standard_normal(self.n)
        v /= np.linalg.norm(v)
        value = 0.0
        for _ in range(NORM_ESTIMATE_ITERATIONS):
            w = self.solve_adjoint(self.solve(v))
            value = float(np.linalg.norm(w))
            if value == 0.0:
                return 0.0
            v = w / value
        return float(np.sqrt(value))


def factorize(sample: SparseMatrix, shift: complex) -> ResolventHandle:
    """Factor (X - shift I); raises ResolventSingularError when singular."""
    return ResolventHandle(sample, shift)


def estimate_operator_norm(
    normal_apply,
    n: int,
    tol: float = 1e-10,
    max_iterations: int = 200,
    key: int = 0x7E57,
) -> float:
    """Largest singular value of B given the map v -> B* B v.

    Power iteration from a fixed random start, run to relative tolerance.
    """
    rng = np.random.Generator(np.random.Philox(key=key))
    v = rng.standard_normal(n) + 1j * rng.standard_normal(n)
    v /= np.linalg.norm(v)
    value = 0.0
    for _ in range(max_iterations):
        w = normal_apply(v)
        new = float(np.linalg.norm(w))
        if new == 0.0:
            return 0.0
        v = w / new
        if abs(new - value) <= tol * new:
            value = new
            break
        value = new
    return float(np.sqrt(value))


@dataclass(frozen=True)
class CompressedResolvent:
    """The r x r compression V* R(shift) U along the perturbation factors."""

    shift: complex
    m_matrix: np.ndarray
    u_factor: np.ndarray
    v_factor: np.ndarray

    @property
    def rank(self) -> int:
        return self.m_matrix.shape[0]

    def characteristic(self) -> np.ndarray:
        """I + M(shift); singular exactly at eigenvalues of the perturbed matrix."""
        return np.eye(self.rank, dtype=np.complex128) + self.m_matrix


def compressed_resolvent(
    handle: ResolventHandle, perturbation: Perturbation
) -> CompressedResolvent:
    """Compute M = V* R U with r solves against the handle."""
    u, v = perturbation.low_rank_factors()
    ru = handle.solve(u)
    m = v.conj().T @ ru
    return CompressedResolvent(
        shift=handle.shift, m_matrix=m, u_factor=u, v_factor=v
    )


def kernel_tolerance(characteristic: np.ndarray) -> float:
    """Default numerical-kernel threshold, scaled to the matrix at hand."""
    r = characteristic.shape[0]
    scale = float(np.linalg.norm(characteristic, 2)) if r else 0.0
    return max(1e-6, r * np.finfo(np.float64).eps * scale)


def kernel_basis(
    compressed: CompressedResolvent, tol: float | None = None
) -> list[np.ndarray]:
    """Orthonormal right null vectors of I + M, smallest singular value first.

    Empty list when the characteristic matrix is nonsingular to tolerance.
    """
    k = compressed.characteristic()
    if tol is None:
        tol = kernel_tolerance(k)
    elif tol <= 0:
        raise ValueError(f"kernel tolerance must be positive, got {tol}")
    _, s, vh = np.linalg.svd(k)
    return [vh[i].conj() for i in range(len(s) - 1, -1, -1) if s[i] <= tol]


def reconstruct_eigenvector(
    handle: ResolventHandle, perturbation: Perturbation, coefficients: np.ndarray
) -> np.ndarray:
    """Lift a kernel vector of I + M to a unit eigenvector R U a / ||R U a||.

    The map a -> R U a is injective on the kernel, with inverse x -> -V* x, so
    kernel dimension equals the geometric multiplicity of the located shift.
    """
    a = np.asarray(coefficients, dtype=np.complex128)
    if a.ndim != 1 or a.shape[0] != perturbation.rank:
        raise ValueError(
            f"coefficients must be a vector of length {perturbation.rank}"
        )
    norm_a = np.linalg.norm(a)
    if norm_a == 0.0:
        raise ValueError("coefficients must be nonzero")
    u, _ = perturbation.low_rank_factors()
    x = handle.solve(u @ (a / norm_a))
    nrm = float(np.linalg.norm(x))
    if nrm < RECONSTRUCTION_FLOOR:
        raise ReconstructionError(
            f"reconstructed vector has norm {nrm:.2e}; shift {handle.shift} "
            "does not carry an eigenvector along these coefficients"
        )
    return x / nrm


@dataclass(frozen=True)
class KernelDecomposition:
    """Split of a kernel vector into the block resonant with one spike.

    separation is min |1 - nu/mu| over the other spikes; epsilon is the
    distance of I + M from its zero-matrix limit I - Lambda/mu. When
    epsilon < separation/2 the vector provably concentrates on the resonant
    block: ||off_resonant|| <= bound * ||resonant||.
    """

    coefficients: np.ndarray
    resonant: np.ndarray
    off_resonant: np.ndarray
    separation: float
    epsilon: float
    localized: bool
    bound: float


def localize_kernel_vector(
    coefficients: np.ndarray,
    lambda_diagonal: np.ndarray,
    characteristic: np.ndarray,
    mu: complex,
) -> KernelDecomposition:
    """Decompose a kernel vector against the diagonal target at spike mu."""
    a = np.asarray(coefficients, dtype=np.complex128)
    norm_a = np.linalg.norm(a)
    if a.ndim != 1 or norm_a == 0.0:
        raise ValueError("coefficients must be a nonzero vector")
    a = a / norm_a
    lam = np.asarray(lambda_diagonal, dtype=np.complex128)
    on = np.abs(lam - mu) <= 1e-9 * (1.0 + abs(mu))
    if not on.any():
        raise KeyError(f"{mu} is not a diagonal value of the perturbation")
    off = ~on
    target = np.eye(len(lam), dtype=np.complex128) - np.diag(lam) / mu
    epsilon = float(np.linalg.norm(characteristic - target, 2))
    if not off.any():
        return KernelDecomposition(
            coefficients=a,
            resonant=a.copy(),
            off_resonant=a[off],
            separation=float("inf"),
            epsilon=epsilon,
            localized=True,
            bound=0.0,
        )
    separation = float(np.abs(1.0 - lam[off] / mu).min())
    localized = epsilon < separation / 2.0
    bound = epsilon / (separation - epsilon) if epsilon < separation else float("inf")
    return KernelDecomposition(
        coefficients=a,
        resonant=a[on],
        off_resonant=a[off],
        separation=separation,
        epsilon=epsilon,
        localized=localized,
        bound=bound,
    )


def kernel_localization(
    coefficients: np.ndarray,
    perturbation: Perturbation,
    mu: complex,
    compressed: CompressedResolvent,
) -> KernelDecomposition:
    """Localization of a kernel vector of I + M at one configured spike."""
    idx = perturbation.spec.find(mu)
    mu_exact = perturbation.spec.spikes[idx][0]
    return localize_kernel_vector(
        coefficients,
        perturbation.lambda_diagonal(),
        compressed.characteristic(),
        mu_exact,
    )


def off_resonant_inverse_norm(
    characteristic: np.ndarray, lambda_diagonal: np.ndarray, mu: complex
) -> float:
    """Spectral norm of the inverse of the off-resonant diagonal block.

    Bounded by 1/(separation - epsilon) whenever the decomposition localizes.
    """
    lam = np.asarray(lambda_diagonal, dtype=np.complex128)
    off = np.abs(lam - mu) > 1e-9 * (1.0 + abs(mu))
    if not off.any():
        return 0.0
    block = characteristic[np.ix_(off, off)]
    return float(np.linalg.norm(np.linalg.inv(block), 2))
