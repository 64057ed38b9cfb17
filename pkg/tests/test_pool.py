import threading

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from distseq.pool import DataPool, PoolSetupError, claim_d_optimal, claim_random, partition


def _pool(n, p=2, seed=0, mode="partitioned"):
    r = np.random.default_rng(seed)
    return DataPool(r.normal(size=(n, p)), r.normal(size=n), mode=mode)


class TestPartition:
    def test_sizes_and_disjointness(self, rng):
        pool = _pool(103)
        handles = partition(pool, 5, rng)
        sizes = [len(h) for h in handles]
        assert sizes == [21, 21, 21, 20, 20]
        rows = np.concatenate([h.rows for h in handles])
        np.testing.assert_array_equal(np.sort(rows), np.arange(103))

    def test_single_partition_is_identity(self, rng):
        (h,) = partition(_pool(10), 1, rng)
        np.testing.assert_array_equal(h.rows, np.arange(10))

    def test_too_small(self, rng):
        with pytest.raises(PoolSetupError):
            partition(_pool(20), 5, rng, n0=4)

    def test_shared_handles_see_everything(self, rng):
        handles = partition(_pool(10, mode="shared"), 3, rng)
        for h in handles:
            assert len(h) == 10

    def test_bad_mode(self):
        with pytest.raises(ValueError):
            DataPool(np.ones((2, 1)), np.ones(2), mode="mixed")

    def test_non_finite_rejected(self):
        with pytest.raises(ValueError):
            DataPool(np.array([[1.0], [np.nan]]), np.ones(2))


class TestClaims:
    def test_random_claims_are_unique_then_exhaust(self, rng):
        pool = _pool(30)
        (h,) = partition(pool, 1, rng)
        ids = [claim_random(h, rng).id for _ in range(30)]
        assert sorted(ids) == list(range(30))
        assert claim_random(h, rng) is None
        pool.audit()

    def test_observation_payload(self, rng):
        pool = _pool(5)
        (h,) = partition(pool, 1, rng)
        obs = claim_random(h, rng)
        np.testing.assert_array_equal(obs.x, pool.X[obs.id])
        assert obs.y == pool.y[obs.id]

    def test_shared_pool_under_threads(self):
        pool = _pool(2000, mode="shared")
        handles = partition(pool, 8, np.random.default_rng(1))
        got = [[] for _ in handles]

        def worker(j):
            r = np.random.default_rng(j)
            while (obs := handles[j].claim_random(r)) is not None:
                got[j].append(obs.id)

        threads = [threading.Thread(target=worker, args=(j,)) for j in range(8)]
        for t in threads:
            t.start()
        for t in threads:
            t.join()
        ids = np.concatenate([np.array(g, dtype=int) for g in got])
        assert ids.size == 2000
        assert np.unique(ids).size == 2000
        pool.audit()
        for j, g in enumerate(got):
            assert np.all(pool.claimed[g] == j)

    def test_shared_d_optimal_skips_claimed(self):
        pool = _pool(50, mode="shared")
        a, b = partition(pool, 2, np.random.default_rng(0))
        inv = np.eye(2)
        first = claim_d_optimal(a, inv)
        second = claim_d_optimal(b, inv)
        assert first.id != second.id

    def test_d_optimal_tie_goes_to_lowest_id(self):
        X = np.array([[1.0, 0.0], [0.0, 2.0], [2.0, 0.0], [0.0, 1.0]])
        pool = DataPool(X, np.zeros(4))
        (h,) = partition(pool, 1, np.random.default_rng(0))
        assert claim_d_optimal(h, np.eye(2)).id == 1
        assert claim_d_optimal(h, np.eye(2)).id == 2

    @settings(max_examples=200, deadline=None)
    @given(
        n=st.integers(2, 1000),
        p=st.integers(1, 4),
        seed=st.integers(0, 2**32 - 1),
        n_claimed=st.integers(0, 20),
    )
    def test_d_optimal_matches_determinant_oracle(self, n, p, seed, n_claimed):
        r = np.random.default_rng(seed)
        X = r.normal(size=(n, p))
        pool = DataPool(X, r.normal(size=n))
        (h,) = partition(pool, 1, r)
        for _ in range(min(n_claimed, n - 1)):
            claim_random(h, r)
        B = r.normal(size=(p + 3, p))
        G = B.T @ B + 0.1 * np.eye(p)
        free = np.flatnonzero(pool.claimed == -1)
        dets = np.array([np.linalg.det(G + np.outer(X[i], X[i])) for i in free])
        obs = claim_d_optimal(h, np.linalg.inv(G))
        # matrix determinant lemma: det(G + x x^T) = det(G)(1 + x^T G^{-1} x)
        assert dets[free == obs.id][0] >= dets.max() * (1 - 1e-9)
