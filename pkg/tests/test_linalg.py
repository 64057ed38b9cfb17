import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from distseq.linalg import (
    GramState,
    RankDeficientError,
    direct_refresh,
    max_eig,
    min_eig,
    rank_one_update,
)


def _replay(X, y, **kw):
    state = GramState.empty(X.shape[1], **kw)
    for xi, yi in zip(X, y):
        state = rank_one_update(state, xi, yi)
    return state


def _rel(a, b):
    return np.max(np.abs(a - b)) / max(1.0, np.max(np.abs(b)))


class TestRankOneUpdate:
    @settings(max_examples=200, deadline=None)
    @given(
        p=st.integers(1, 6),
        extra=st.integers(0, 80),
        seed=st.integers(0, 2**32 - 1),
        refresh=st.sampled_from([0, 7, 512]),
    )
    def test_matches_direct_factorization(self, p, extra, seed, refresh):
        r = np.random.default_rng(seed)
        X = r.normal(size=(p + extra, p)) * r.uniform(0.1, 10, size=p)
        y = r.normal(size=p + extra)
        state = _replay(X, y, refresh_every=refresh)
        G = X.T @ X
        assert state.n == p + extra
        np.testing.assert_allclose(state.gram, G, rtol=1e-12, atol=1e-12)
        assert state.invertible
        assert _rel(state.gram_inv, np.linalg.inv(G)) < 1e-8
        sign, logdet = np.linalg.slogdet(G)
        assert sign > 0
        assert abs(state.log_det - logdet) <= 1e-8 * max(1.0, abs(logdet))

    def test_ten_thousand_updates(self, rng):
        X = rng.normal(1.0, 1.0, size=(10_000, 5))
        X[:, 0] = 1.0
        y = rng.normal(size=10_000)
        state = _replay(X, y)
        G = X.T @ X
        assert _rel(state.gram_inv, np.linalg.inv(G)) < 1e-8
        assert abs(state.log_det - np.linalg.slogdet(G)[1]) < 1e-8 * abs(np.linalg.slogdet(G)[1])
        np.testing.assert_allclose(state.xty, X.T @ y, rtol=1e-10)

    def test_not_invertible_before_full_rank(self, rng):
        state = GramState.empty(3)
        for row in rng.normal(size=(2, 3)):
            state = rank_one_update(state, row, 0.0)
        assert not state.invertible
        assert state.log_det is None

    def test_repeated_row_stays_singular(self):
        state = GramState.empty(2)
        for _ in range(5):
            state = rank_one_update(state, [1.0, 1.0], 1.0)
        assert not state.invertible
        with pytest.raises(RankDeficientError):
            direct_refresh(state)

    def test_becomes_invertible_once_rank_is_reached(self):
        state = GramState.empty(2)
        state = rank_one_update(state, [1.0, 1.0], 1.0)
        state = rank_one_update(state, [1.0, 1.0], 2.0)
        assert not state.invertible
        state = rank_one_update(state, [1.0, 2.0], 0.0)
        assert state.invertible
        np.testing.assert_allclose(state.gram_inv, np.linalg.inv([[3.0, 4.0], [4.0, 6.0]]))

    def test_refresh_counter(self, rng):
        X = rng.normal(size=(20, 2))
        state = _replay(X, np.zeros(20), refresh_every=4)
        assert state.since_refresh < 4

    def test_state_is_not_mutated(self, rng):
        X = rng.normal(size=(4, 2))
        state = _replay(X, np.ones(4))
        before = state.gram.copy()
        rank_one_update(state, [1.0, 2.0], 3.0)
        np.testing.assert_array_equal(state.gram, before)

    @pytest.mark.parametrize("x,y", [([np.nan, 1.0], 0.0), ([1.0, np.inf], 0.0), ([1.0, 1.0], np.nan)])
    def test_rejects_non_finite(self, x, y):
        with pytest.raises(ValueError):
            rank_one_update(GramState.empty(2), x, y)

    def test_rejects_wrong_length(self):
        with pytest.raises(ValueError):
            rank_one_update(GramState.empty(2), [1.0, 2.0, 3.0], 0.0)

    def test_from_data_agrees_with_updates(self, rng):
        X = rng.normal(size=(30, 3))
        y = rng.normal(size=30)
        a, b = GramState.from_data(X, y), _replay(X, y)
        assert _rel(a.gram_inv, b.gram_inv) < 1e-10
        assert a.yty == pytest.approx(b.yty)


class TestEigen:
    def test_diagonal(self):
        S = np.diag([3.0, 0.5, 2.0])
        assert min_eig(S) == pytest.approx(0.5)
        assert max_eig(S) == pytest.approx(3.0)

    def test_known_two_by_two(self):
        # eigenvalues of [[1,1],[1,2]] are (3 -+ sqrt 5) / 2
        S = np.array([[1.0, 1.0], [1.0, 2.0]])
        assert min_eig(S) == pytest.approx((3 - np.sqrt(5)) / 2)
        assert max_eig(np.linalg.inv(S)) == pytest.approx(2.618034, abs=1e-6)

    def test_rejects_asymmetric(self):
        with pytest.raises(ValueError):
            min_eig(np.array([[1.0, 2.0], [0.0, 1.0]]))

    def test_rejects_non_square(self):
        with pytest.raises(ValueError):
            max_eig(np.ones((2, 3)))
