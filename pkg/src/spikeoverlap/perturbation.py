"""Finite-rank biorthogonal perturbations and their spike eigenspaces.

A perturbation is E = P Lambda W* with W* P = I, so the columns of P are
right eigenvectors of E for the diagonal values. P has orthonormal columns;
W = P + tau Z with Z orthonormal inside the orthocomplement of range(P),
which makes tau a dial for non-normality without breaking biorthogonality.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

MIN_SPIKE_MODULUS = 1.05
MAX_RANK = 16
MAX_FACTOR_SCALE = 100.0
DENSE_GUARD = 5000

_UNIT_NORM_TOL = 1e-10


@dataclass(frozen=True)
class SpikeSpec:
    """Target outlier eigenvalues with multiplicities, plus the dial tau.

    Spikes must be distinct, each with modulus at least MIN_SPIKE_MODULUS so
    they sit cleanly outside the unit disk, and the total rank is capped.
    """

    spikes: tuple[tuple[complex, int], ...]
    non_normality_tau: float = 0.0

    def __post_init__(self) -> None:
        spikes = tuple((complex(mu), int(k)) for mu, k in self.spikes)
        object.__setattr__(self, "spikes", spikes)
        object.__setattr__(self, "non_normality_tau", float(self.non_normality_tau))
        if not spikes:
            raise ConfigurationError("at least one spike is required")
        for idx, (mu, k) in enumerate(spikes):
            if k < 1:
                raise ConfigurationError(
                    f"spikes[{idx}]: multiplicity must be a positive integer, got {k}"
                )
            if abs(mu) < MIN_SPIKE_MODULUS:
                raise ConfigurationError(
                    f"spikes[{idx}]: |mu| = {abs(mu):.4f} is below the spike "
                    f"modulus floor {MIN_SPIKE_MODULUS}"
                )
        values = [mu for mu, _ in spikes]
        for i in range(len(values)):
            for j in range(i + 1, len(values)):
                if abs(values[i] - values[j]) < 1e-9:
                    raise ConfigurationError(
                        f"spikes[{i}] and spikes[{j}] coincide at {values[i]}"
                    )
        rank = sum(k for _, k in spikes)
        if rank > MAX_RANK:
            raise ConfigurationError(
                f"total rank {rank} exceeds the supported maximum {MAX_RANK}"
            )
        tau = self.non_normality_tau
        if tau < 0.0 or not math.isfinite(tau):
            raise ConfigurationError(f"non_normality_tau must be finite and >= 0, got {tau}")
        scale = max(abs(mu) for mu in values) * (1.0 + tau)
        if scale > MAX_FACTOR_SCALE:
            raise ConfigurationError(
                f"spike scale * (1 + tau) = {scale:.2f} exceeds the boundedness "
                f"cap {MAX_FACTOR_SCALE}"
            )

    @property
    def rank(self) -> int:
        return sum(k for _, k in self.spikes)

    @property
    def values(self) -> tuple[complex, ...]:
        return tuple(mu for mu, _ in self.spikes)

    def lambda_diagonal(self) -> np.ndarray:
        return np.concatenate(
            [np.full(k, mu, dtype=np.complex128) for mu, k in self.spikes]
        )

    def block_slice(self, index: int) -> slice:
        start = sum(k for _, k in self.spikes[:index])
        return slice(start, start + self.spikes[index][1])

    def overlap_limit(self, index: int) -> float:
        """Limiting squared overlap 1 - 1/|mu|^2 for the given spike."""
        mu = self.spikes[index][0]
        return 1.0 - 1.0 / abs(mu) ** 2

    def find(self, mu: complex) -> int:
        for idx, (value, _) in enumerate(self.spikes):
            if abs(value - mu) <= 1e-12 * (1.0 + abs(value)):
                return idx
        raise KeyError(f"{mu} is not a spike of this perturbation")


@dataclass(frozen=True)
class SpikeEigenspace:
    """Orthonormal basis Q of the right eigenspace attached to one spike."""

    mu: complex
    q_basis: np.ndarray

    @property
    def dimension(self) -> int:
        return self.q_basis.shape[1]


@dataclass(frozen=True)
class Perturbation:
    """Rank-r operator P Lambda W* with biorthogonal factors (W* P = I)."""

    spec: SpikeSpec
    p_factor: np.ndarray
    w_factor: np.ndarray

    @property
    def n(self) -> int:
        return self.p_factor.shape[0]

    @property
    def rank(self) -> int:
        return self.p_factor.shape[1]

    def lambda_diagonal(self) -> np.ndarray:
        return self.spec.lambda_diagonal()

    def low_rank_factors(self) -> tuple[np.ndarray, np.ndarray]:
        """Factors (U, V) with E = U V* and V* U = Lambda.

        U = P and V = W conj(Lambda) columnwise, so the compressed resolvent
        V* R U reduces eigenproblems of X + E to r dimensions.
        """
        lam = self.lambda_diagonal()
        return self.p_factor, self.w_factor * lam.conj()[None, :]

    def apply(self, x: np.ndarray) -> np.ndarray:
        """Matrix-free action E @ x for a vector x."""
        lam = self.lambda_diagonal()
        return self.p_factor @ (lam * (self.w_factor.conj().T @ x))

    def assemble_dense(self) -> np.ndarray:
        if self.n > DENSE_GUARD:
            raise ConfigurationError(
                f"dense assembly limited to n <= {DENSE_GUARD}, got n = {self.n}"
            )
        lam = self.lambda_diagonal()
        return self.p_factor @ (lam[:, None] * self.w_factor.conj().T)

    def factor_norm_sum(self) -> float:
        """Sum of column norms of both low-rank factors; bounded in n by design."""
        u, v = self.low_rank_factors()
        return float(
            np.linalg.norm(u, axis=0).sum() + np.linalg.norm(v, axis=0).sum()
        )


def build_perturbation(spec: SpikeSpec, n: int, seed: int = 0) -> Perturbation:
    """Draw the random factors for one perturbation of dimension n.

    P comes from a QR of an n x r complex Gaussian block; Z from a QR of a
    second block projected off range(P). The draw is Philox-keyed, so one
    seed pins the perturbation independently of matrix sampling.
    """
    r = spec.rank
    if n < 2 * r:
        raise ConfigurationError(
            f"dimension n = {n} must be at least twice the total rank r = {r}"
        )
    rng = np.random.Generator(np.random.Philox(key=seed))
    g = rng.standard_normal((n, 2 * r)) + 1j * rng.standard_normal((n, 2 * r))
    p, _ = np.linalg.qr(g[:, :r])
    resid = g[:, r:] - p @ (p.conj().T @ g[:, r:])
    z, _ = np.linalg.qr(resid)
    w = p + spec.non_normality_tau * z
    return Perturbation(spec=spec, p_factor=p, w_factor=w)


def spike_eigenspace(perturbation: Perturbation, mu: complex) -> SpikeEigenspace:
    """Orthonormalized right eigenspace of the perturbation at spike mu.

    Raises KeyError when mu is not one of the configured spikes.
    """
    idx = perturbation.spec.find(mu)
    block = perturbation.spec.block_slice(idx)
    q, _ = np.linalg.qr(perturbation.p_factor[:, block])
    return SpikeEigenspace(mu=perturbation.spec.spikes[idx][0], q_basis=q)


def overlap_squared(x: np.ndarray, eigenspace: SpikeEigenspace) -> float:
    """Squared norm of the orthogonal projection of a unit vector onto the space.

    Equals |<x, u>|^2 / ||u||^2 when the space is spanned by a single u.
    """
    nrm = float(np.linalg.norm(x))
    if abs(nrm - 1.0) > _UNIT_NORM_TOL:
        raise ValueError(f"overlap expects a unit vector, got norm {nrm:.6g}")
    proj = eigenspace.q_basis.conj().T @ x
    value = float(np.vdot(proj, proj).real)
    return min(1.0, max(0.0, value))
