"""PCA reduction and history encodings: oracles, guards, round-trips."""

import numpy as np
import pytest

import oracles
from longpanel.errors import LeakageError, ParameterError, RankError
from longpanel.features import (
    HIDDEN_SIZE_GRID,
    HistoryEncoding,
    PcaReducer,
    encode_history,
    encode_windows,
)
from longpanel.splits import Assignment


def _random_data(rng, n=40, d=8):
    # low-rank structure plus noise so leading directions are meaningful
    basis = rng.normal(size=(3, d))
    coords = rng.normal(size=(n, 3)) * np.array([3.0, 2.0, 1.0])
    return coords @ basis + 0.05 * rng.normal(size=(n, d))


def test_hidden_size_grid_is_pinned():
    assert HIDDEN_SIZE_GRID == (64, 128, 256, 512, 1024)


class TestPcaFit:
    def test_components_orthonormal_and_variances_descending(self):
        rng = np.random.default_rng(0)
        for _ in range(20):
            X = _random_data(rng)
            red = PcaReducer(n_components=4).fit(X)
            np.testing.assert_allclose(
                red.components_ @ red.components_.T, np.eye(4), atol=1e-10
            )
            assert np.all(np.diff(red.explained_variance_) <= 1e-12)

    def test_variances_match_svd_route(self):
        rng = np.random.default_rng(1)
        for _ in range(20):
            X = _random_data(rng)
            red = PcaReducer(n_components=5).fit(X)
            expect = oracles.pca_singular_variances(X, 5)
            np.testing.assert_allclose(red.explained_variance_, expect, rtol=1e-8)

    def test_eigenpair_residuals_tiny(self):
        rng = np.random.default_rng(2)
        X = _random_data(rng, n=60, d=10)
        red = PcaReducer(n_components=6).fit(X)
        for comp, var in zip(red.components_, red.explained_variance_):
            assert oracles.pca_eigenpair_residual(X, comp, var) < 1e-10

    def test_sign_convention(self):
        rng = np.random.default_rng(3)
        X = _random_data(rng)
        red = PcaReducer(n_components=4).fit(X)
        for row in red.components_:
            assert row[int(np.argmax(np.abs(row)))] > 0

    def test_deterministic_across_fits(self):
        rng = np.random.default_rng(4)
        X = _random_data(rng)
        a = PcaReducer(n_components=3).fit(X)
        b = PcaReducer(n_components=3).fit(X.copy())
        np.testing.assert_array_equal(a.components_, b.components_)

    def test_rank_gate(self):
        rng = np.random.default_rng(5)
        # exactly rank 2: 2 independent rows replicated
        base = rng.normal(size=(2, 6))
        X = rng.normal(size=(30, 2)) @ base
        PcaReducer(n_components=2).fit(X)
        with pytest.raises(RankError):
            PcaReducer(n_components=3).fit(X)

    def test_n_components_exceeding_dim(self):
        X = np.random.default_rng(6).normal(size=(10, 4))
        with pytest.raises(ParameterError):
            PcaReducer(n_components=5).fit(X)

    def test_leakage_guard(self):
        rng = np.random.default_rng(7)
        X = _random_data(rng, n=10)
        labels = [Assignment.TRAIN] * 9 + [Assignment.TEST]
        with pytest.raises(LeakageError):
            PcaReducer(n_components=2).fit(X, assignments=labels)
        PcaReducer(n_components=2).fit(X, assignments=[Assignment.TRAIN] * 10)

    def test_assignment_length_mismatch(self):
        X = np.random.default_rng(8).normal(size=(10, 4))
        with pytest.raises(ParameterError):
            PcaReducer(n_components=2).fit(X, assignments=[Assignment.TRAIN] * 9)

    def test_fitted_arrays_frozen(self):
        X = np.random.default_rng(9).normal(size=(10, 4))
        red = PcaReducer(n_components=2).fit(X)
        with pytest.raises(ValueError):
            red.components_[0, 0] = 0.0

    def test_get_params_round_trip(self):
        red = PcaReducer(n_components=3)
        assert red.get_params() == {"n_components": 3}
        red.set_params(n_components=2)
        assert red.n_components == 2


class TestPcaTransform:
    def test_projection_decorrelates(self):
        rng = np.random.default_rng(10)
        X = _random_data(rng, n=80)
        red = PcaReducer(n_components=4).fit(X)
        Z = red.transform(X)
        cov = np.cov(Z, rowvar=False)
        np.testing.assert_allclose(cov, np.diag(np.diag(cov)), atol=1e-8)
        np.testing.assert_allclose(np.diag(cov), red.explained_variance_, rtol=1e-8)

    def test_single_vector(self):
        rng = np.random.default_rng(11)
        X = _random_data(rng)
        red = PcaReducer(n_components=3).fit(X)
        one = red.transform(X[0])
        assert one.shape == (3,)
        # single-row and batched matmuls may take different BLAS paths
        np.testing.assert_allclose(one, red.transform(X)[0], rtol=1e-12)

    def test_reconstruction_error_shrinks_with_k(self):
        rng = np.random.default_rng(12)
        X = _random_data(rng, n=60, d=8)
        errs = []
        for k in (1, 2, 3, 6):
            red = PcaReducer(n_components=k).fit(X)
            recon = red.inverse_transform(red.transform(X))
            errs.append(float(np.mean((X - recon) ** 2)))
        assert errs == sorted(errs, reverse=True)

    def test_full_rank_reconstruction_exact(self):
        rng = np.random.default_rng(13)
        X = rng.normal(size=(30, 5))
        red = PcaReducer(n_components=5).fit(X)
        recon = red.inverse_transform(red.transform(X))
        np.testing.assert_allclose(recon, X, atol=1e-10)

    def test_transform_windows_matches_rowwise(self):
        rng = np.random.default_rng(14)
        X = _random_data(rng)
        red = PcaReducer(n_components=3).fit(X)
        win = rng.normal(size=(6, 4, 8))
        batched = red.transform_windows(win)
        assert batched.shape == (6, 4, 3)
        for i in range(6):
            for t in range(4):
                np.testing.assert_allclose(
                    batched[i, t], red.transform(win[i, t]), atol=1e-12
                )

    def test_unfitted_rejected(self):
        with pytest.raises(ParameterError):
            PcaReducer(n_components=2).transform(np.zeros(4))

    def test_dim_mismatch(self):
        rng = np.random.default_rng(15)
        red = PcaReducer(n_components=2).fit(rng.normal(size=(10, 4)))
        with pytest.raises(ParameterError):
            red.transform(np.zeros(5))


class TestPcaCsv:
    def test_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(16)
        X = _random_data(rng)
        red = PcaReducer(n_components=4).fit(X)
        path = tmp_path / "pca.csv"
        red.to_csv(path)
        back = PcaReducer.from_csv(path)
        np.testing.assert_array_equal(back.mean_, red.mean_)
        np.testing.assert_array_equal(back.components_, red.components_)
        np.testing.assert_array_equal(
            back.explained_variance_, red.explained_variance_
        )
        np.testing.assert_array_equal(back.transform(X), red.transform(X))

    def test_rewrite_is_bit_identical(self, tmp_path):
        rng = np.random.default_rng(17)
        red = PcaReducer(n_components=2).fit(_random_data(rng))
        p1, p2 = tmp_path / "a.csv", tmp_path / "b.csv"
        red.to_csv(p1)
        PcaReducer.from_csv(p1).to_csv(p2)
        assert p1.read_bytes() == p2.read_bytes()


class TestEncodings:
    def test_stacked_oldest_first(self):
        window = np.array([[1.0, 2.0], [3.0, 4.0], [5.0, 6.0]])
        np.testing.assert_array_equal(
            encode_history(window, HistoryEncoding.STACKED),
            [1.0, 2.0, 3.0, 4.0, 5.0, 6.0],
        )

    def test_pooled_is_day_mean(self):
        window = np.array([[1.0, 2.0], [3.0, 4.0]])
        np.testing.assert_array_equal(
            encode_history(window, HistoryEncoding.POOLED), [2.0, 3.0]
        )

    def test_sequence_passthrough(self):
        window = np.arange(6.0).reshape(3, 2)
        np.testing.assert_array_equal(
            encode_history(window, HistoryEncoding.SEQUENCE), window
        )

    def test_batched_matches_single(self):
        rng = np.random.default_rng(18)
        windows = rng.normal(size=(5, 3, 4))
        for enc in HistoryEncoding:
            batched = encode_windows(windows, enc)
            for i in range(5):
                np.testing.assert_array_equal(
                    batched[i], encode_history(windows[i], enc)
                )

    def test_parse(self):
        assert HistoryEncoding.parse("stacked") is HistoryEncoding.STACKED
        assert HistoryEncoding.parse("pooled") is HistoryEncoding.POOLED
        assert HistoryEncoding.parse("sequence") is HistoryEncoding.SEQUENCE
        with pytest.raises(ParameterError):
            HistoryEncoding.parse("folded")
