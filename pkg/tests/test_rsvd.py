import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from onlinemc.errors import DimensionError, NumericalError
from onlinemc.rsvd import (
    RsvdParams,
    canonical_signs,
    exact_svd,
    gaussian_block,
    orthonormalize,
    randomized_svd,
    seeded_svd_update,
)
from onlinemc.sparse import PartialSVD, SparseMatrix, SparsePlusLowRank


def low_rank(rng, m, n, r):
    return rng.standard_normal((m, r)) @ rng.standard_normal((r, n))


def projector_distance(a, b):
    return np.linalg.norm(a @ a.T - b @ b.T, 2)


class TestParams:
    @pytest.mark.parametrize("kw", [{"k": 0}, {"k": 2, "p": -1}, {"k": 2, "q": -1}])
    def test_invalid(self, kw):
        with pytest.raises(ValueError):
            RsvdParams(**kw)

    def test_width_clipped(self):
        z = randomized_svd(np.ones((4, 3)), RsvdParams(k=5, p=5, q=0))
        assert z.meta["width"] == 3 and z.meta["clipped"]


class TestRandomizedSvd:
    def test_diagonal_sparse(self):
        a = SparseMatrix.from_dense(np.diag([3.0, 2.0, 1.0]), np.eye(3, dtype=bool))
        z = randomized_svd(a, RsvdParams(k=3, p=1, q=1))
        np.testing.assert_allclose(z.sigma, [3.0, 2.0, 1.0], atol=1e-8)

    def test_zero_matrix(self):
        z = randomized_svd(np.zeros((5, 4)), RsvdParams(k=2, p=1, q=1))
        assert np.all(z.sigma == 0)

    def test_subspace_of_rank5(self, rng):
        a = low_rank(rng, 100, 50, 5)
        z = randomized_svd(a, RsvdParams(k=5, p=5, q=2, seed=3))
        U = np.linalg.svd(a)[0][:, :5]
        assert projector_distance(z.P[:, :5], U) <= 1e-6

    def test_orthonormal_and_sorted(self, rng):
        z = randomized_svd(rng.standard_normal((40, 30)), RsvdParams(k=5, p=4, q=1))
        assert z.is_orthonormal()
        assert np.all(np.diff(z.sigma) <= 0)

    def test_deterministic(self, rng):
        a = rng.standard_normal((30, 20))
        z1 = randomized_svd(a, RsvdParams(k=4, seed=(1, 2)))
        z2 = randomized_svd(a, RsvdParams(k=4, seed=(1, 2)))
        assert np.array_equal(z1.P, z2.P) and np.array_equal(z1.sigma, z2.sigma)

    def test_threads_do_not_change_result(self, rng):
        y = SparsePlusLowRank(
            SparseMatrix.from_dense(rng.standard_normal((60, 40)), rng.random((60, 40)) < 0.2),
            PartialSVD.zeros((60, 40)),
        )
        z1 = randomized_svd(y, RsvdParams(k=5, p=5, q=2))
        z4 = randomized_svd(y, RsvdParams(k=5, p=5, q=2), threads=4)
        np.testing.assert_allclose(z1.sigma, z4.sigma, rtol=1e-12)

    def test_degenerate_shape(self):
        with pytest.raises(DimensionError):
            randomized_svd(np.zeros((0, 3)), RsvdParams(k=1))

    def test_nonfinite_input(self):
        a = np.ones((4, 4))
        a[0, 0] = np.nan
        with pytest.raises(NumericalError):
            randomized_svd(a, RsvdParams(k=2, p=0, q=0))

    @settings(max_examples=20, deadline=None)
    @given(seed=st.integers(0, 10**6), q=st.integers(0, 2))
    def test_interlacing(self, seed, q):
        rng = np.random.default_rng(seed)
        a = rng.standard_normal((30, 20)) * (0.7 ** np.arange(20))
        exact = np.linalg.svd(a, compute_uv=False)
        z = randomized_svd(a, RsvdParams(k=4, p=3, q=q, seed=seed))
        assert np.all(z.sigma <= exact[: z.rank] * (1 + 1e-8) + 1e-15)


class TestSeededUpdate:
    def test_fixed_point(self, rng):
        prior = exact_svd(low_rank(rng, 40, 25, 6), k=6)
        target = SparsePlusLowRank(SparseMatrix.empty(prior.shape), prior)
        out = seeded_svd_update(prior, target, RsvdParams(k=6, p=0))
        np.testing.assert_allclose(out.sigma, prior.sigma, atol=1e-10)
        P, Q = canonical_signs(prior.P, prior.Q)
        np.testing.assert_allclose(out.P, P, atol=1e-10)
        np.testing.assert_allclose(out.Q, Q, atol=1e-10)
        assert out.meta["shortcut"]

    def test_prior_rank0_falls_back(self, rng):
        a = rng.standard_normal((20, 15))
        params = RsvdParams(k=3, p=2, q=1, seed=7)
        out = seeded_svd_update(PartialSVD.zeros(a.shape), a, params)
        ref = randomized_svd(a, params)
        assert np.array_equal(out.sigma, ref.sigma) and np.array_equal(out.P, ref.P)

    def test_perturbed_rank8(self, rng):
        base = low_rank(rng, 200, 100, 8)
        mask = rng.random((200, 100)) < 0.01
        pert = SparseMatrix.from_dense(rng.standard_normal((200, 100)), mask)
        prior = exact_svd(base, k=8)
        target = SparsePlusLowRank(pert, prior)
        dense = target.to_dense()
        out = seeded_svd_update(prior, target, RsvdParams(k=8, p=10, seed=1)).truncate(8)
        s = np.linalg.svd(dense, compute_uv=False)
        best = np.sqrt(np.sum(s[8:] ** 2))
        assert np.linalg.norm(dense - out.to_dense()) <= 1.05 * best

    def test_shortcut_matches_generic_product(self, rng):
        prior = exact_svd(low_rank(rng, 30, 20, 4), k=4)
        pert = SparseMatrix.from_dense(rng.standard_normal((30, 20)), rng.random((30, 20)) < 0.1)
        target = SparsePlusLowRank(pert, prior)
        params = RsvdParams(k=4, p=3, seed=2)
        fast = seeded_svd_update(prior, target, params)
        slow = seeded_svd_update(prior, target.to_dense(), params)
        assert fast.meta["shortcut"] and not slow.meta["shortcut"]
        np.testing.assert_allclose(fast.sigma, slow.sigma, rtol=1e-10)

    def test_width_kept_when_prior_shrinks(self, rng):
        prior = exact_svd(low_rank(rng, 30, 20, 2), k=2)
        out = seeded_svd_update(prior, prior.to_dense(), RsvdParams(k=6, p=3))
        assert out.meta["width"] == 9

    def test_shape_mismatch(self, rng):
        prior = exact_svd(rng.standard_normal((5, 4)), k=2)
        with pytest.raises(DimensionError):
            seeded_svd_update(prior, np.zeros((6, 4)), RsvdParams(k=2))


class TestGaussianBlock:
    def test_empty(self):
        assert gaussian_block(5, 0, 1).shape == (5, 0)

    def test_deterministic(self):
        assert np.array_equal(gaussian_block(7, 3, (4, 5)), gaussian_block(7, 3, (4, 5)))
        assert not np.array_equal(gaussian_block(7, 3, 4), gaussian_block(7, 3, 5))

    def test_moments(self):
        x = gaussian_block(100_000, 1, 0)
        assert abs(x.mean()) < 0.02 and abs(x.var() - 1) < 0.02


class TestOrthonormalize:
    def test_orthonormal_input(self, rng):
        q, _ = np.linalg.qr(rng.standard_normal((20, 5)))
        out = orthonormalize(q)
        np.testing.assert_allclose(out.T @ out, np.eye(5), atol=1e-12)
        assert projector_distance(out, q) < 1e-12

    def test_duplicate_columns(self):
        v = np.arange(1.0, 6.0)[:, None]
        assert orthonormalize(np.hstack([v, v])).shape == (5, 1)

    def test_span_random(self, rng):
        a = rng.standard_normal((50, 10))
        out = orthonormalize(a)
        oracle = a @ np.linalg.pinv(a)
        np.testing.assert_allclose(out @ out.T, oracle, atol=1e-10)

    def test_zero_block(self):
        assert orthonormalize(np.zeros((4, 3))).shape == (4, 0)

    def test_nonfinite(self):
        with pytest.raises(NumericalError):
            orthonormalize(np.full((3, 2), np.inf))


def test_canonical_signs():
    P = np.array([[0.0, -1.0], [-1.0, 0.0]])
    Q = np.eye(2)
    P2, Q2 = canonical_signs(P, Q)
    np.testing.assert_array_equal(P2, [[0.0, 1.0], [1.0, 0.0]])
    np.testing.assert_array_equal(P2 @ Q2.T, P @ Q.T)


def test_exact_svd_truncates(rng):
    a = rng.standard_normal((8, 6))
    z = exact_svd(a, k=3)
    np.testing.assert_allclose(z.sigma, np.linalg.svd(a, compute_uv=False)[:3], rtol=1e-12)
    assert z.meta["exact"]
