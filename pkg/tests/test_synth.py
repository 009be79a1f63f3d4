import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from specfid.errors import DomainError, ShapeError
from specfid.synth import (
    EmbeddingTable,
    ZipfEnsemble,
    build_embedding_matrix,
    population_covariance,
    random_unit_embeddings,
    sample_tokens,
    synthetic_output_gradient,
    weight_gradient,
    zipf_probabilities,
)
from specfid.tensorio import RandomStream


class TestZipfProbabilities:
    def test_single_token(self):
        np.testing.assert_array_equal(zipf_probabilities(1, 3.0), [1.0])

    def test_hand_normalized(self):
        np.testing.assert_allclose(zipf_probabilities(3, 2.0), np.array([36, 9, 4]) / 49, rtol=1e-14)

    @pytest.mark.parametrize("alpha", [1.0, 0.5, -2.0])
    def test_rejects_alpha_at_most_one(self, alpha):
        with pytest.raises(DomainError):
            zipf_probabilities(3, alpha)

    def test_rejects_empty_vocab(self):
        with pytest.raises(DomainError):
            zipf_probabilities(0, 2.0)

    @settings(max_examples=50, deadline=None)
    @given(st.integers(2, 5000), st.floats(1.01, 6.0))
    def test_distribution_strictly_decreasing(self, V, alpha):
        p = zipf_probabilities(V, alpha)
        assert p.size == V
        assert abs(p.sum() - 1.0) <= 1e-12
        assert np.all(np.diff(p) < 0)


class TestEmbeddings:
    def test_unit_columns(self):
        v = random_unit_embeddings(300, 50, RandomStream(0))
        np.testing.assert_allclose(np.linalg.norm(v, axis=0), 1.0, atol=1e-12)

    def test_first_coordinate_nonnegative(self):
        v = random_unit_embeddings(100, 8, RandomStream(1))
        assert np.all(v[0] >= 0)

    def test_d1_is_plus_one(self):
        np.testing.assert_array_equal(random_unit_embeddings(5, 1, RandomStream(2)), np.ones((1, 5)))

    @pytest.mark.parametrize("V,d", [(256, 1024), (512, 4096)])
    def test_quasi_orthogonality(self, V, d):
        thr = 4 * math.sqrt(math.log(V) / d)
        for seed in range(20):
            v = random_unit_embeddings(V, d, RandomStream(seed, 9))
            gram = v.T @ v
            np.testing.assert_allclose(np.diag(gram), 1.0, atol=1e-12)
            off = np.abs(gram[~np.eye(V, dtype=bool)])
            assert off.max() <= thr

    def test_inner_products_shrink_like_inverse_sqrt_d(self):
        def mean_abs(d):
            vals = []
            for seed in range(5):
                v = random_unit_embeddings(128, d, RandomStream(seed, 4))
                g = np.abs(v.T @ v)
                vals.append(g[np.triu_indices(128, 1)].mean())
            return float(np.mean(vals))

        m1, m4 = mean_abs(256), mean_abs(1024)
        assert abs(m1 / m4 - 2.0) <= 0.15 * 2.0
        assert abs(m1 - math.sqrt(2 / math.pi / 256)) <= 0.15 * m1


class TestPopulationCovariance:
    def test_orthonormal_case(self):
        t = EmbeddingTable(np.eye(2), np.array([0.75, 0.25]))
        s = population_covariance(t)
        np.testing.assert_array_equal(s, np.diag([0.75, 0.25]))
        np.testing.assert_array_equal(np.linalg.eigvalsh(s)[::-1], [0.75, 0.25])

    def test_trace_symmetry_psd(self):
        t = ZipfEnsemble(V=200, alpha=1.7, d=40, N=10).table()
        s = population_covariance(t)
        assert abs(np.trace(s) - 1.0) <= 1e-10
        np.testing.assert_array_equal(s, s.T)
        assert np.linalg.eigvalsh(s).min() >= -1e-14

    def test_top_eigenvalues_track_probs(self):
        d = 4096
        t = ZipfEnsemble(V=512, alpha=2.0, d=d, N=1, seed=3).table()
        tau = np.linalg.eigvalsh(population_covariance(t))[::-1]
        assert np.all(np.abs(tau[:10] - t.probs[:10]) <= 2 / math.sqrt(d))


class TestSampling:
    def test_degenerate(self):
        np.testing.assert_array_equal(sample_tokens([1.0], 50, RandomStream(0)), np.ones(50))

    def test_first_token_frequency(self):
        N = 100_000
        p1 = 36 / 49
        t = sample_tokens(zipf_probabilities(3, 2.0), N, RandomStream(5))
        assert t.min() >= 1 and t.max() <= 3
        assert abs(np.mean(t == 1) - p1) <= 4 * math.sqrt(p1 * (1 - p1) / N)

    def test_deterministic(self):
        p = zipf_probabilities(50, 1.3)
        np.testing.assert_array_equal(sample_tokens(p, 1000, RandomStream(9, 1)),
                                      sample_tokens(p, 1000, RandomStream(9, 1)))

    def test_frequencies_match_probs(self):
        p = zipf_probabilities(6, 1.5)
        t = sample_tokens(p, 200_000, RandomStream(6))
        freq = np.bincount(t, minlength=7)[1:] / t.size
        np.testing.assert_allclose(freq, p, atol=4 * math.sqrt(0.25 / t.size))


class TestEnsemble:
    def test_json_roundtrip(self):
        e = ZipfEnsemble(V=10, alpha=1.25, d=3, N=7, seed=11)
        assert ZipfEnsemble.from_json(e.to_json()) == e

    @pytest.mark.parametrize("kw", [dict(alpha=1.0), dict(V=0), dict(d=0), dict(N=0)])
    def test_invalid(self, kw):
        base = dict(V=10, alpha=1.5, d=3, N=7)
        base.update(kw)
        with pytest.raises(DomainError):
            ZipfEnsemble(**base)

    def test_columns_come_from_table(self):
        e = ZipfEnsemble(V=30, alpha=1.5, d=6, N=100, seed=2)
        table = e.table()
        X = build_embedding_matrix(e, table)
        np.testing.assert_array_equal(X, table.vectors[:, e.tokens() - 1])
        # each column matches some table column exactly
        for col in X.T[:10]:
            assert np.any(np.all(table.vectors == col[:, None], axis=0))

    def test_d1_v1_all_ones(self):
        X = build_embedding_matrix(ZipfEnsemble(V=1, alpha=2.0, d=1, N=9))
        np.testing.assert_array_equal(X, np.ones((1, 9)))

    def test_deterministic(self):
        e = ZipfEnsemble(V=64, alpha=1.5, d=8, N=200, seed=4)
        np.testing.assert_array_equal(build_embedding_matrix(e), build_embedding_matrix(e))

    def test_sample_covariance_concentrates(self):
        e = ZipfEnsemble(V=256, alpha=2.0, d=512, N=100_000, seed=1)
        table = e.table()
        X = build_embedding_matrix(e, table)
        S = X @ X.T / e.N
        sig = population_covariance(table)
        assert np.linalg.norm(S - sig) / np.linalg.norm(sig) <= 0.05

    def test_sample_covariance_error_decreases_with_n(self):
        errs = []
        for N in (1_000, 10_000, 100_000):
            vals = []
            for seed in range(10):
                e = ZipfEnsemble(V=64, alpha=1.5, d=32, N=N, seed=seed)
                table = e.table()
                X = build_embedding_matrix(e, table)
                sig = population_covariance(table)
                vals.append(np.linalg.norm(X @ X.T / N - sig) / np.linalg.norm(sig))
            errs.append(np.mean(vals))
        assert errs[0] > errs[1] > errs[2]


class TestGradients:
    def test_spectral_norm_exact(self):
        G = synthetic_output_gradient(64, 64, 3.0, RandomStream(0))
        s = np.linalg.svd(G, compute_uv=False)
        assert abs(s[0] - 3.0) <= 1e-10 * 3.0
        assert s[1] < s[0]

    @pytest.mark.parametrize("M", [0.0, -1.0])
    def test_rejects_nonpositive(self, M):
        with pytest.raises(DomainError):
            synthetic_output_gradient(4, 4, M, RandomStream(0))

    def test_identity_input(self):
        G = RandomStream(1).normal((5, 3))
        np.testing.assert_array_equal(weight_gradient(np.eye(5), G), G)

    def test_zero_input(self):
        np.testing.assert_array_equal(weight_gradient(np.zeros((2, 5)), np.ones((5, 3))), np.zeros((2, 3)))

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            weight_gradient(np.ones((2, 5)), np.ones((4, 3)))

    def test_singular_value_bound(self):
        e = ZipfEnsemble(V=128, alpha=1.5, d=32, N=500, seed=8)
        X = build_embedding_matrix(e)
        G = synthetic_output_gradient(500, 40, 2.0, RandomStream(8, 5))
        sx = np.linalg.svd(X, compute_uv=False)
        sg = np.linalg.svd(weight_gradient(X, G), compute_uv=False)
        k = min(sx.size, sg.size)
        assert np.all(sg[:k] <= 2.0 * sx[:k] * (1 + 1e-10))
