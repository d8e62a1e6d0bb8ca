import numpy as np
import pytest

from spikeoverlap.errors import ConfigurationError
from spikeoverlap.matrix_model import (
    EntryDistribution,
    SparseModelConfig,
    default_k_schedule,
    sample_sparse_matrix,
    zero_matrix,
)


def _sample(n, k, seed, dist=EntryDistribution.COMPLEX_GAUSSIAN):
    return sample_sparse_matrix(
        SparseModelConfig(n=n, sparsity_k=k, distribution=dist, seed=seed)
    )


class TestEntryDistribution:
    @pytest.mark.parametrize("dist", list(EntryDistribution))
    def test_normalization(self, dist):
        rng = np.random.Generator(np.random.Philox(key=5))
        draws = dist.sample(rng, 200_000)
        se = 5.0 / np.sqrt(draws.size)
        assert abs(draws.mean()) <= se
        assert abs(np.mean(np.abs(draws) ** 2) - 1.0) <= se

    def test_rademacher_values(self):
        rng = np.random.Generator(np.random.Philox(key=1))
        draws = EntryDistribution.RADEMACHER.sample(rng, 1000)
        assert np.all(np.isin(draws.real, [-1.0, 1.0]))
        assert np.all(draws.imag == 0.0)

    def test_from_name_rejects_unknown(self):
        with pytest.raises(ConfigurationError, match="unknown distribution"):
            EntryDistribution.from_name("uniform")


class TestSampling:
    def test_same_seed_reproduces_exactly(self):
        a = _sample(300, 40, seed=9)
        b = _sample(300, 40, seed=9)
        assert a.nnz == b.nnz
        assert np.array_equal(a.matrix.indices, b.matrix.indices)
        assert np.array_equal(a.matrix.indptr, b.matrix.indptr)
        assert np.array_equal(a.matrix.data, b.matrix.data)

    def test_different_seeds_differ(self):
        a = _sample(300, 40, seed=9)
        b = _sample(300, 40, seed=10)
        assert a.nnz != b.nnz or not np.array_equal(a.matrix.data, b.matrix.data)

    def test_dense_rademacher_case(self):
        # K = n makes every Bernoulli succeed; entries are +-1/sqrt(n)
        x = _sample(16, 16, seed=2, dist=EntryDistribution.RADEMACHER)
        assert x.nnz == 256
        assert np.allclose(np.abs(x.toarray()), 0.25)

    def test_all_entries_finite(self):
        x = _sample(500, 70, seed=3)
        assert np.all(np.isfinite(x.matrix.data))

    def test_zero_matrix(self):
        z = zero_matrix(SparseModelConfig(n=50, sparsity_k=5, seed=0))
        assert z.nnz == 0
        assert np.all(z.toarray() == 0)

    def test_sparsity_fraction_matches_bernoulli_rate(self):
        n, k, trials = 400, 40, 30
        fractions = [_sample(n, k, seed=s).nnz / n**2 for s in range(trials)]
        se = np.std(fractions, ddof=1) / np.sqrt(trials)
        assert abs(np.mean(fractions) - k / n) <= 3.0 * se + 1e-12

    def test_entry_second_moment_is_one_over_n(self):
        # E|X_ij|^2 = (K/n)(1/K) = 1/n; check a fixed entry across samples
        n, k, trials = 120, 30, 60
        values = [abs(_sample(n, k, seed=s).toarray()[0, 0]) ** 2 for s in range(trials)]
        se = np.std(values, ddof=1) / np.sqrt(trials)
        assert se > 0
        assert abs(np.mean(values) - 1.0 / n) <= 3.0 * se

    def test_global_moments_at_scale(self):
        # mean of all n^2 positions ~ 0, total second moment ~ n
        x = _sample(2000, 140, seed=17)
        n = x.n
        assert abs(x.matrix.data.sum() / n**2) <= 0.01
        total = np.sum(np.abs(x.matrix.data) ** 2)
        assert abs(total / n - 1.0) <= 0.1


class TestConfigValidation:
    def test_k_above_n_rejected(self):
        with pytest.raises(ConfigurationError, match="1 <= K <= n"):
            SparseModelConfig(n=10, sparsity_k=11)

    def test_zero_dimension_rejected(self):
        with pytest.raises(ConfigurationError, match="positive"):
            SparseModelConfig(n=0, sparsity_k=1)

    def test_negative_seed_rejected(self):
        with pytest.raises(ConfigurationError, match="64 bits"):
            SparseModelConfig(n=10, sparsity_k=2, seed=-1)


class TestKSchedule:
    @pytest.mark.parametrize(
        "n,exponent,expected",
        [
            (1500, 0.7, 168),
            (2000, 0.7, 205),
            (400, 0.7, 67),
            (800, 0.7, 108),
            (1600, 0.7, 175),
            (2, 0.5, 2),
            (100, 0.5, 10),
        ],
    )
    def test_values(self, n, exponent, expected):
        assert default_k_schedule(n, exponent) == expected

    def test_clamped_to_n(self):
        assert default_k_schedule(3, 0.99) <= 3

    def test_exponent_bounds(self):
        with pytest.raises(ConfigurationError):
            default_k_schedule(100, 1.0)
        with pytest.raises(ConfigurationError):
            default_k_schedule(100, 0.0)

    def test_tiny_dimension_rejected(self):
        with pytest.raises(ConfigurationError):
            default_k_schedule(1, 0.5)


class TestDump:
    def test_coordinate_roundtrip(self, tmp_path):
        x = _sample(30, 5, seed=4)
        path = tmp_path / "x.txt"
        x.dump_coordinate(path)
        lines = path.read_text().splitlines()
        assert lines[0] == f"%30 5 4"
        assert len(lines) == x.nnz + 1
        rebuilt = np.zeros((30, 30), dtype=np.complex128)
        for line in lines[1:]:
            i, j, re, im = line.split()
            rebuilt[int(i), int(j)] = complex(float(re), float(im))
        assert np.allclose(rebuilt, x.toarray(), atol=0, rtol=1e-15)
