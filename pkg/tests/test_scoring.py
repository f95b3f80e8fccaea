import itertools

import numpy as np
import pytest

from monocurve.errors import DimensionMismatch, EmptySet, SizeMismatch, TooFew
from monocurve.scoring import (
    ScoreReport,
    empirical_mse,
    hausdorff,
    replicate_stats,
    score_curves,
    wasserstein2,
)


def hausdorff_double_loop(A, B):
    def one_way(P, Q):
        worst = 0.0
        for p in P:
            best = min(float(np.linalg.norm(p - q)) for q in Q)
            worst = max(worst, best)
        return worst
    return max(one_way(A, B), one_way(B, A))


def w2_bruteforce(A, B):
    n = len(A)
    best = np.inf
    for perm in itertools.permutations(range(n)):
        cost = sum(((A[i] - B[perm[i]]) ** 2).sum() for i in range(n)) / n
        best = min(best, cost)
    return float(np.sqrt(best))


class TestHausdorff:
    def test_identical_sets(self):
        A = np.random.default_rng(0).standard_normal((15, 2))
        assert hausdorff(A, A) == 0.0

    def test_singletons(self):
        assert hausdorff([(0.0, 0.0)], [(3.0, 4.0)]) == pytest.approx(5.0)

    def test_matches_double_loop(self):
        rng = np.random.default_rng(4)
        for _ in range(20):
            A = rng.standard_normal((20, 2))
            B = rng.standard_normal((20, 2))
            assert hausdorff(A, B) == pytest.approx(hausdorff_double_loop(A, B), abs=1e-12)

    def test_symmetry_and_nonneg(self):
        rng = np.random.default_rng(5)
        A = rng.standard_normal((12, 3))
        B = rng.standard_normal((9, 3))
        assert hausdorff(A, B) == pytest.approx(hausdorff(B, A))
        assert hausdorff(A, B) > 0

    def test_zero_iff_equal_sets(self):
        A = np.array([[0.0, 0.0], [1.0, 1.0]])
        B = np.array([[1.0, 1.0], [0.0, 0.0]])
        assert hausdorff(A, B) == 0.0

    def test_empty(self):
        with pytest.raises(EmptySet):
            hausdorff(np.empty((0, 2)), np.zeros((3, 2)))

    def test_chunking_invariance(self):
        rng = np.random.default_rng(6)
        A = rng.standard_normal((700, 2))
        B = rng.standard_normal((650, 2))
        assert hausdorff(A, B, chunk=64) == pytest.approx(hausdorff(A, B, chunk=10000))


class TestWasserstein:
    def test_identical_sets(self):
        A = np.random.default_rng(1).standard_normal((10, 2))
        assert wasserstein2(A, A) == pytest.approx(0.0, abs=1e-12)

    def test_singletons(self):
        assert wasserstein2([(0.0, 0.0)], [(3.0, 4.0)]) == pytest.approx(5.0)

    def test_matches_permutation_bruteforce(self):
        rng = np.random.default_rng(2)
        for _ in range(20):
            A = rng.standard_normal((5, 2))
            B = rng.standard_normal((5, 2))
            assert wasserstein2(A, B) == pytest.approx(w2_bruteforce(A, B), abs=1e-9)

    def test_centroid_lower_bound(self):
        rng = np.random.default_rng(3)
        for _ in range(25):
            A = rng.standard_normal((16, 3))
            B = rng.standard_normal((16, 3)) + rng.standard_normal(3)
            lb = float(np.linalg.norm(A.mean(axis=0) - B.mean(axis=0)))
            assert wasserstein2(A, B) >= lb - 1e-9

    def test_subsample_cap(self):
        rng = np.random.default_rng(4)
        A = rng.standard_normal((1500, 2))
        B = rng.standard_normal((1500, 2))
        v = wasserstein2(A, B, cap=256, seed=0)
        assert np.isfinite(v) and v > 0
        assert wasserstein2(A, B, cap=256, seed=0) == v  # deterministic

    def test_size_mismatch_after_resample(self):
        A = np.zeros((10, 2))
        B = np.zeros((7, 2))
        with pytest.raises(SizeMismatch):
            wasserstein2(A, B)


class TestMse:
    def test_identical(self):
        A = np.random.default_rng(0).standard_normal((8, 2))
        assert empirical_mse(A, A) == 0.0

    def test_unit_offset(self):
        A = np.zeros((6, 2))
        B = A + np.array([1.0, 0.0])
        assert empirical_mse(A, B) == pytest.approx(1.0)

    def test_matches_elementwise_accumulation(self):
        rng = np.random.default_rng(9)
        A = rng.standard_normal((10, 2))
        B = rng.standard_normal((10, 2))
        acc = 0.0
        for i in range(10):
            for j in range(2):
                acc += (A[i, j] - B[i, j]) ** 2
        assert empirical_mse(A, B) == pytest.approx(acc / 10, abs=1e-12)

    def test_shape_mismatch(self):
        with pytest.raises(DimensionMismatch):
            empirical_mse(np.zeros((3, 2)), np.zeros((4, 2)))


class TestReplicateStats:
    def test_constant(self):
        assert replicate_stats([1.0, 1.0, 1.0]) == (1.0, 0.0)

    def test_two_values(self):
        mean, std = replicate_stats([0.0, 2.0])
        assert mean == pytest.approx(1.0)
        assert std == pytest.approx(np.sqrt(2.0))

    def test_matches_two_pass(self):
        rng = np.random.default_rng(10)
        xs = rng.standard_normal(10)
        mean, std = replicate_stats(xs)
        mu = sum(xs) / 10
        var = sum((x - mu) ** 2 for x in xs) / 9
        assert mean == pytest.approx(mu, abs=1e-12)
        assert std == pytest.approx(np.sqrt(var), abs=1e-12)

    def test_too_few(self):
        with pytest.raises(TooFew):
            replicate_stats([1.0])


class TestScoreReport:
    def test_bundle(self):
        A = np.array([[0.0, 0.0]])
        B = np.array([[3.0, 4.0]])
        rep = score_curves(A, B)
        assert rep.hausdorff_x100 == pytest.approx(500.0)
        assert rep.wasserstein2_x100 == pytest.approx(500.0)
        assert rep.mse == pytest.approx(25.0)
        rec = rep.to_record()
        assert rec["subsample_cap"] == rep.subsample_cap
