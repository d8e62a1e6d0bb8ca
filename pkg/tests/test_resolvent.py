import numpy as np
import pytest

from spikeoverlap.errors import ReconstructionError, ResolventSingularError
from spikeoverlap.matrix_model import SparseModelConfig, sample_sparse_matrix, zero_matrix
from spikeoverlap.outliers import dense_spectrum_oracle
from spikeoverlap.perturbation import Perturbation, SpikeSpec, build_perturbation
from spikeoverlap.resolvent import (
    compressed_resolvent,
    estimate_operator_norm,
    factorize,
    kernel_basis,
    kernel_localization,
    localize_kernel_vector,
    off_resonant_inverse_norm,
    reconstruct_eigenvector,
)
from synthetic_kernels import make_localized_instance


def _zero(n):
    return zero_matrix(SparseModelConfig(n=n, sparsity_k=2, seed=0))


def _sample(n, k, seed):
    return sample_sparse_matrix(SparseModelConfig(n=n, sparsity_k=k, seed=seed))


def _rng(key):
    return np.random.Generator(np.random.Philox(key=key))


class TestHandle:
    def test_zero_matrix_solve_is_scaling(self):
        handle = factorize(_zero(40), 2.0)
        b = _rng(1).standard_normal(40) + 0j
        assert np.allclose(handle.solve(b), -b / 2.0, atol=1e-15)
        assert np.allclose(handle.solve_adjoint(b), -b / 2.0, atol=1e-15)

    def test_solve_residual_small(self):
        x = _sample(150, 25, seed=4)
        handle = factorize(x, 1.8 + 0.3j)
        for key in (2, 3):
            b = _rng(key).standard_normal(150) + 1j * _rng(key + 10).standard_normal(150)
            y = handle.solve(b)
            assert np.linalg.norm(x.matrix @ y - handle.shift * y - b) <= 1e-8 * np.linalg.norm(b)

    def test_adjoint_residual_small(self):
        x = _sample(150, 25, seed=4)
        handle = factorize(x, 2.0)
        b = _rng(5).standard_normal(150) + 0j
        y = handle.solve_adjoint(b)
        adj = x.toarray().conj().T
        assert np.linalg.norm(adj @ y - np.conj(handle.shift) * y - b) <= 1e-8 * np.linalg.norm(b)

    def test_multi_rhs_matches_columnwise(self):
        x = _sample(90, 20, seed=6)
        handle = factorize(x, 2.5)
        rhs = _rng(7).standard_normal((90, 3)) + 0j
        stacked = handle.solve(rhs)
        for j in range(3):
            assert np.allclose(stacked[:, j], handle.solve(rhs[:, j]), atol=1e-12)

    def test_sparse_and_dense_paths_agree(self):
        # density 15/300 = 0.05 boundary: force both paths explicitly
        x = _sample(300, 9, seed=8)
        assert x.density < 0.05
        sparse_handle = factorize(x, 2.0)
        assert not sparse_handle._dense
        dense = np.linalg.solve(
            x.toarray() - 2.0 * np.eye(300), np.ones(300, dtype=complex)
        )
        assert np.allclose(sparse_handle.solve(np.ones(300, dtype=complex)), dense, atol=1e-9)

    def test_small_dimension_uses_dense_path(self):
        handle = factorize(_sample(80, 20, seed=1), 2.0)
        assert handle._dense

    def test_eigenvalue_shift_rejected(self):
        x = _sample(40, 40, seed=9)
        ev = dense_spectrum_oracle(x.toarray())
        with pytest.raises(ResolventSingularError, match="singular"):
            factorize(x, complex(ev[0]))

    def test_norm_estimate_zero_matrix_exact(self):
        handle = factorize(_zero(64), 2.0)
        assert handle.norm_estimate == pytest.approx(0.5, abs=1e-12)

    def test_norm_estimate_bounded_away_from_bulk(self):
        hits = 0
        for seed in range(12):
            handle = factorize(_sample(300, 45, seed=seed), 2.0)
            if handle.norm_estimate <= 10.0:
                hits += 1
        assert hits >= 11


class TestOperatorNormEstimate:
    def test_diagonal_operator(self):
        d = np.array([3.0, 1.0, 0.5, 0.1])
        est = estimate_operator_norm(lambda v: (d**2) * v, 4)
        assert est == pytest.approx(3.0, rel=1e-8)

    def test_zero_operator(self):
        assert estimate_operator_norm(lambda v: 0.0 * v, 10) == 0.0


class TestCompressed:
    def test_zero_matrix_limit_exact(self):
        spec = SpikeSpec(spikes=((2.0, 1), (-3.0, 2)))
        e = build_perturbation(spec, 50, seed=3)
        handle = factorize(_zero(50), 2.0)
        compressed = compressed_resolvent(handle, e)
        lam = spec.lambda_diagonal()
        assert np.allclose(compressed.m_matrix, -np.diag(lam) / 2.0, atol=1e-10)

    def test_factor_identity(self):
        # V* U recovers the diagonal, independent of the sample
        spec = SpikeSpec(spikes=((2.0, 2), (1.0 + 2.0j, 1)), non_normality_tau=0.8)
        e = build_perturbation(spec, 80, seed=4)
        u, v = e.low_rank_factors()
        assert np.linalg.norm(v.conj().T @ u - np.diag(spec.lambda_diagonal())) <= 1e-10

    def test_shape_and_shift(self):
        spec = SpikeSpec(spikes=((2.0, 3),))
        e = build_perturbation(spec, 60, seed=5)
        compressed = compressed_resolvent(factorize(_sample(60, 10, seed=2), 2.2), e)
        assert compressed.rank == 3
        assert compressed.m_matrix.shape == (3, 3)
        assert compressed.shift == 2.2

    def test_near_limit_at_scale(self):
        spec = SpikeSpec(spikes=((2.0, 1),))
        for seed in (0, 1, 2):
            x = _sample(1000, 126, seed=seed)
            e = build_perturbation(spec, 1000, seed=9)
            compressed = compressed_resolvent(factorize(x, 2.0), e)
            assert abs(compressed.m_matrix[0, 0] + 1.0) <= 0.1


class TestKernel:
    def test_zero_matrix_kernel_dimension(self):
        spec = SpikeSpec(spikes=((2.0, 2), (-3.0, 1)))
        e = build_perturbation(spec, 50, seed=6)
        compressed = compressed_resolvent(factorize(_zero(50), 2.0), e)
        vectors = kernel_basis(compressed)
        assert len(vectors) == 2
        # kernel vectors live on the resonant block
        for vec in vectors:
            assert np.linalg.norm(vec[2:]) <= 1e-12

    def test_no_kernel_off_spike(self):
        spec = SpikeSpec(spikes=((2.0, 1),))
        e = build_perturbation(spec, 50, seed=6)
        compressed = compressed_resolvent(factorize(_zero(50), 3.7), e)
        assert kernel_basis(compressed) == []

    def test_tolerance_validation(self):
        spec = SpikeSpec(spikes=((2.0, 1),))
        e = build_perturbation(spec, 50, seed=6)
        compressed = compressed_resolvent(factorize(_zero(50), 2.0), e)
        with pytest.raises(ValueError, match="positive"):
            kernel_basis(compressed, tol=0.0)

    def test_bijection_with_dense_oracle(self):
        # kernel dimension of I + M equals the eigenvalue multiplicity of Y,
        # and the lifted vector matches the dense eigenvector
        spec = SpikeSpec(spikes=((2.0, 1), (-2.5, 1)))
        for seed in (0, 1, 2):
            x = _sample(60, 60, seed=seed)
            e = build_perturbation(spec, 60, seed=21)
            y = x.toarray() + e.assemble_dense()
            values, vectors = dense_spectrum_oracle(y, eigenvectors=True)
            x_values = dense_spectrum_oracle(x.toarray())
            for mu in (2.0, -2.5):
                idx = int(np.argmin(np.abs(values - mu)))
                lam = complex(values[idx])
                assert np.abs(x_values - lam).min() > 1e-3
                handle = factorize(x, lam)
                compressed = compressed_resolvent(handle, e)
                kernel = kernel_basis(compressed)
                multiplicity = int(np.sum(np.abs(values - lam) <= 1e-7))
                assert len(kernel) == multiplicity == 1
                lifted = reconstruct_eigenvector(handle, e, kernel[0])
                dense_vec = vectors[:, idx] / np.linalg.norm(vectors[:, idx])
                assert 1.0 - abs(np.vdot(dense_vec, lifted)) <= 1e-8

    def test_bijection_at_bulk_eigenvalue(self):
        # the reduction is exact linear algebra, valid anywhere off sigma(X)
        spec = SpikeSpec(spikes=((2.0, 1),))
        x = _sample(60, 60, seed=5)
        e = build_perturbation(spec, 60, seed=22)
        y = x.toarray() + e.assemble_dense()
        values = dense_spectrum_oracle(y)
        x_values = dense_spectrum_oracle(x.toarray())
        bulk = [v for v in values if abs(v) < 1.0]
        lam = complex(max(bulk, key=lambda v: np.abs(x_values - v).min()))
        handle = factorize(x, lam)
        compressed = compressed_resolvent(handle, e)
        kernel = kernel_basis(compressed)
        assert len(kernel) == 1
        lifted = reconstruct_eigenvector(handle, e, kernel[0])
        assert np.linalg.norm(y @ lifted - lam * lifted) <= 1e-6

    def test_inverse_map_is_negative_compression(self):
        # Phi^{-1}(x) = -V* x returns a multiple of the kernel vector
        spec = SpikeSpec(spikes=((2.0, 1), (-2.5, 1)))
        x = _sample(60, 60, seed=3)
        e = build_perturbation(spec, 60, seed=23)
        y = x.toarray() + e.assemble_dense()
        values = dense_spectrum_oracle(y)
        lam = complex(values[np.argmin(np.abs(values - 2.0))])
        handle = factorize(x, lam)
        compressed = compressed_resolvent(handle, e)
        a = kernel_basis(compressed)[0]
        lifted = reconstruct_eigenvector(handle, e, a)
        _, v = e.low_rank_factors()
        back = -(v.conj().T @ lifted)
        back /= np.linalg.norm(back)
        assert 1.0 - abs(np.vdot(a, back)) <= 1e-8


class TestReconstruction:
    def test_zero_matrix_single_spike(self):
        spec = SpikeSpec(spikes=((2.0, 1),))
        e1 = np.zeros((8, 1), dtype=complex)
        e1[0, 0] = 1.0
        pert = Perturbation(spec=spec, p_factor=e1, w_factor=e1)
        handle = factorize(_zero(8), 2.0)
        vec = reconstruct_eigenvector(handle, pert, np.ones(1, dtype=complex))
        dense = pert.assemble_dense()
        assert np.linalg.norm(dense @ vec - 2.0 * vec) <= 1e-12
        assert abs(abs(vec[0]) - 1.0) <= 1e-12

    def test_scale_invariance_up_to_phase(self):
        spec = SpikeSpec(spikes=((2.0, 1), (-3.0, 1)))
        x = _sample(80, 80, seed=7)
        e = build_perturbation(spec, 80, seed=24)
        y = x.toarray() + e.assemble_dense()
        values = dense_spectrum_oracle(y)
        lam = complex(values[np.argmin(np.abs(values - 2.0))])
        handle = factorize(x, lam)
        a = kernel_basis(compressed_resolvent(handle, e))[0]
        first = reconstruct_eigenvector(handle, e, a)
        second = reconstruct_eigenvector(handle, e, (0.3 - 1.7j) * a)
        assert 1.0 - abs(np.vdot(first, second)) <= 1e-12

    def test_zero_coefficients_rejected(self):
        spec = SpikeSpec(spikes=((2.0, 1),))
        e = build_perturbation(spec, 40, seed=1)
        handle = factorize(_zero(40), 3.0)
        with pytest.raises(ValueError, match="nonzero"):
            reconstruct_eigenvector(handle, e, np.zeros(1, dtype=complex))

    def test_wrong_length_rejected(self):
        spec = SpikeSpec(spikes=((2.0, 1),))
        e = build_perturbation(spec, 40, seed=1)
        handle = factorize(_zero(40), 3.0)
        with pytest.raises(ValueError, match="length"):
            reconstruct_eigenvector(handle, e, np.ones(2, dtype=complex))

    def test_degenerate_direction_raises(self):
        # U a = 0 collapses the lift; force it with a rank-deficient U
        spec = SpikeSpec(spikes=((2.0, 2),))
        col = np.zeros((10, 1), dtype=complex)
        col[0, 0] = 1.0
        p = np.hstack([col, col])
        pert = Perturbation(spec=spec, p_factor=p, w_factor=p)
        handle = factorize(_zero(10), 3.0)
        with pytest.raises(ReconstructionError, match="norm"):
            reconstruct_eigenvector(handle, pert, np.array([1.0, -1.0], dtype=complex))


class TestLocalization:
    def test_zero_matrix_fully_resonant(self):
        spec = SpikeSpec(spikes=((2.0, 1), (4.0, 1)))
        e = build_perturbation(spec, 50, seed=8)
        compressed = compressed_resolvent(factorize(_zero(50), 2.0), e)
        a = kernel_basis(compressed)[0]
        dec = kernel_localization(a, e, 2.0, compressed)
        assert dec.epsilon <= 1e-12
        assert dec.separation == pytest.approx(1.0)  # |1 - 4/2|
        assert dec.localized
        assert np.linalg.norm(dec.off_resonant) <= 1e-12
        assert np.linalg.norm(dec.resonant) == pytest.approx(1.0)

    def test_unknown_spike_raises(self):
        spec = SpikeSpec(spikes=((2.0, 1),))
        e = build_perturbation(spec, 40, seed=1)
        compressed = compressed_resolvent(factorize(_zero(40), 2.0), e)
        a = kernel_basis(compressed)[0]
        with pytest.raises(KeyError):
            kernel_localization(a, e, 9.0, compressed)

    def test_single_spike_has_no_off_block(self):
        spec = SpikeSpec(spikes=((2.0, 1),))
        e = build_perturbation(spec, 40, seed=2)
        compressed = compressed_resolvent(factorize(_zero(40), 2.0), e)
        a = kernel_basis(compressed)[0]
        dec = kernel_localization(a, e, 2.0, compressed)
        assert dec.separation == float("inf")
        assert dec.bound == 0.0
        assert dec.off_resonant.size == 0

    def test_synthetic_inequality(self):
        rng = _rng(31)
        for _ in range(25):
            kmat, lam, mu, a = make_localized_instance(rng)
            dec = localize_kernel_vector(a, lam, kmat, mu)
            assert dec.localized
            assert dec.epsilon < dec.separation / 2.0
            off_norm = np.linalg.norm(dec.off_resonant)
            res_norm = np.linalg.norm(dec.resonant)
            assert off_norm <= dec.bound * res_norm + 1e-10

    def test_synthetic_inverse_block_bound(self):
        rng = _rng(37)
        for _ in range(25):
            kmat, lam, mu, _ = make_localized_instance(rng)
            dec = localize_kernel_vector(
                np.ones(len(lam), dtype=complex), lam, kmat, mu
            )
            inv_norm = off_resonant_inverse_norm(kmat, lam, mu)
            assert inv_norm <= 1.0 / (dec.separation - dec.epsilon) + 1e-10

    def test_large_epsilon_flagged_not_localized(self):
        lam = np.array([2.0, 4.0], dtype=complex)
        target = np.eye(2, dtype=complex) - np.diag(lam) / 2.0
        bump = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)
        kmat = target + 0.9 * bump  # epsilon = 0.9 >= c0/2 = 0.5
        dec = localize_kernel_vector(
            np.array([1.0, 1.0], dtype=complex) / np.sqrt(2), lam, kmat, 2.0
        )
        assert not dec.localized
        assert dec.epsilon == pytest.approx(0.9)

    def test_zero_vector_rejected(self):
        lam = np.array([2.0, 4.0], dtype=complex)
        with pytest.raises(ValueError, match="nonzero"):
            localize_kernel_vector(np.zeros(2, dtype=complex), lam, np.eye(2), 2.0)
