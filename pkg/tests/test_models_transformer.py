"""Sequence regressor: gradients vs finite differences, masking, training."""

import numpy as np
import pytest

import oracles
from longpanel.errors import DivergenceError, ParameterError
from longpanel.models import (
    CausalWindowTransformer,
    MeanBaseline,
    RidgeRegressor,
    load_model,
    param_hash,
    save_model,
)


def _model(window=3, d_model=4, **kw):
    kw.setdefault("ffn_width", d_model)
    kw.setdefault("seed", 0)
    return CausalWindowTransformer(window=window, d_model=d_model, **kw)


def _data(rng, n=12, window=3, d_in=4):
    X = rng.normal(size=(n, window, d_in))
    y = rng.normal(size=n) + 3.0
    return X, y


def _perturbed_params(model, d_in, seed):
    """Init-scheme parameters plus noise, so gradients are probed away
    from the symmetric initialization point."""
    rng = np.random.default_rng(seed)
    params = model._init_params(d_in, rng)
    for name, p in params.items():
        params[name] = np.asarray(p, dtype=np.float64) + rng.normal(
            0.0, 0.3, size=np.shape(p)
        )
    return params


def _tensor_rel_err(a, b):
    # floored so structurally-zero gradients (e.g. the key bias, which
    # softmax row-invariance makes inert) compare as matching dust
    na = float(np.linalg.norm(a))
    nb = float(np.linalg.norm(b))
    denom = max(na, nb, 1e-10)
    return float(np.linalg.norm(np.asarray(a) - np.asarray(b))) / denom


class TestGradients:
    def test_backward_matches_finite_differences(self):
        rng = np.random.default_rng(0)
        model = _model()
        X, y = _data(rng)
        params = _perturbed_params(model, d_in=4, seed=1)
        _, grads = model.loss_and_gradients(X, y, params=params)
        fd = oracles.finite_difference_gradients(
            lambda p: model.loss_and_gradients(X, y, params=p)[0], params
        )
        assert set(grads) == set(params)
        for name in params:
            assert _tensor_rel_err(fd[name], grads[name]) < 1e-6, name

    def test_no_ffn_variant(self):
        rng = np.random.default_rng(2)
        model = _model(use_ffn=False)
        X, y = _data(rng, n=8)
        params = _perturbed_params(model, d_in=4, seed=3)
        assert "w_f1" not in params
        _, grads = model.loss_and_gradients(X, y, params=params)
        fd = oracles.finite_difference_gradients(
            lambda p: model.loss_and_gradients(X, y, params=p)[0], params
        )
        for name in params:
            assert _tensor_rel_err(fd[name], grads[name]) < 1e-6, name


class TestCausalMasking:
    @pytest.mark.parametrize("window", [1, 3, 5])
    def test_future_and_out_of_window_days_are_inert(self, window):
        rng = np.random.default_rng(4)
        L = window + 2
        model = _model(window=window, max_epochs=2, batch_size=64)
        X, y = _data(rng, n=16, window=window)
        model.fit(X, y)
        seq = rng.normal(size=(5, L, 4))
        anchor = window  # a mid-sequence position with both kinds of slack
        base = model.predict(seq, anchor=anchor)
        # days after the anchor must not matter at all
        bumped = seq.copy()
        bumped[:, anchor + 1 :, :] += rng.normal(size=(5, L - anchor - 1, 4)) * 10
        assert np.array_equal(model.predict(bumped, anchor=anchor), base)
        # days before the window's left edge must not matter either
        left = anchor - window + 1
        if left > 0:
            bumped = seq.copy()
            bumped[:, :left, :] -= 7.5
            assert np.array_equal(model.predict(bumped, anchor=anchor), base)
        # a day inside the window must matter
        bumped = seq.copy()
        bumped[:, anchor, :] += 1.0
        assert not np.array_equal(model.predict(bumped, anchor=anchor), base)

    def test_attention_rows_normalized_and_banded(self):
        rng = np.random.default_rng(5)
        model = _model(window=3, max_epochs=2)
        X, y = _data(rng, n=16, window=3)
        model.fit(X, y)
        A = model.attention_probs(rng.normal(size=(4, 6, 4)))
        np.testing.assert_allclose(A.sum(axis=-1), 1.0, atol=1e-12)
        for i in range(6):
            for j in range(6):
                if j > i or i - j >= 3:
                    assert np.all(A[:, i, j] == 0.0)


class TestTraining:
    def test_same_seed_same_fit(self):
        rng = np.random.default_rng(6)
        X, y = _data(rng, n=24)
        a = _model(max_epochs=4, seed=9).fit(X, y)
        b = _model(max_epochs=4, seed=9).fit(X, y)
        for name in a.params_:
            np.testing.assert_array_equal(a.params_[name], b.params_[name])
        c = _model(max_epochs=4, seed=10).fit(X, y)
        assert any(
            not np.array_equal(a.params_[n], c.params_[n]) for n in a.params_
        )

    def test_early_stopping_restores_best(self):
        rng = np.random.default_rng(7)
        X, y = _data(rng, n=40)
        dX, dy = _data(rng, n=12)
        model = _model(max_epochs=60, patience=5).fit(X, y, dX, dy)
        scores = [s for _, s in model.history_]
        assert model.best_dev_score_ == min(scores)
        assert model.history_[model.best_epoch_][1] == model.best_dev_score_
        # patience: at most patience non-improving epochs after the best
        assert len(scores) <= model.best_epoch_ + model.patience + 1
        # restored parameters actually produce the best dev score
        from longpanel.metrics import mae

        assert mae(dy, model.predict(dX)) == pytest.approx(model.best_dev_score_)

    def test_eval_mode_is_deterministic(self):
        rng = np.random.default_rng(8)
        X, y = _data(rng, n=16)
        model = _model(max_epochs=2).fit(X, y)
        seq = rng.normal(size=(6, 3, 4))
        np.testing.assert_array_equal(model.predict(seq), model.predict(seq))

    def test_weight_decay_skips_biases_and_gains(self):
        # with batch_size >= n and one epoch there is exactly one step, so
        # decay (applied to weights after the update) cannot feed back into
        # the bias path: biases must match across decay settings
        rng = np.random.default_rng(9)
        X, y = _data(rng, n=10)
        a = _model(max_epochs=1, batch_size=32, weight_decay=0.0).fit(X, y)
        b = _model(max_epochs=1, batch_size=32, weight_decay=1.0).fit(X, y)
        for name in a.params_:
            if name.startswith("b_") or name.startswith("ln"):
                np.testing.assert_array_equal(a.params_[name], b.params_[name])
        assert not np.array_equal(a.params_["w_q"], b.params_["w_q"])

    def test_divergence_is_reported(self):
        rng = np.random.default_rng(10)
        X, y = _data(rng, n=16)
        X = X * 50
        model = _model(learning_rate=1e12, max_epochs=10)
        with np.errstate(all="ignore"), pytest.raises(DivergenceError):
            model.fit(X, y)

    def test_params_frozen_after_fit(self):
        rng = np.random.default_rng(11)
        X, y = _data(rng, n=10)
        model = _model(max_epochs=1).fit(X, y)
        with pytest.raises(ValueError):
            model.params_["w_q"][0, 0] = 0.0

    def test_shape_validation(self):
        rng = np.random.default_rng(12)
        model = _model()
        X, y = _data(rng, n=10)
        with pytest.raises(ParameterError):
            model.fit(X, y[:-1])
        with pytest.raises(ParameterError):
            model.fit(X[:, :2, :], y)  # wrong sequence length
        model.fit(X, y)
        with pytest.raises(ParameterError):
            model.predict(rng.normal(size=(2, 3, 5)))  # wrong day width
        with pytest.raises(ParameterError):
            model.predict(rng.normal(size=(2, 3, 4)), anchor=3)

    def test_ffn_width_defaults_to_d_model(self):
        rng = np.random.default_rng(13)
        X, y = _data(rng, n=8)
        model = CausalWindowTransformer(window=3, d_model=4, max_epochs=1).fit(X, y)
        assert model.params_["w_f1"].shape == (4, 4)


class TestSerialization:
    def test_transformer_round_trip_bit_exact(self, tmp_path):
        rng = np.random.default_rng(14)
        X, y = _data(rng, n=16)
        model = _model(max_epochs=2).fit(X, y)
        path = tmp_path / "model.txt"
        save_model(model, path)
        back = load_model(path)
        seq = rng.normal(size=(5, 3, 4))
        np.testing.assert_array_equal(back.predict(seq), model.predict(seq))
        assert param_hash(back) == param_hash(model)

    def test_ridge_round_trip(self, tmp_path):
        rng = np.random.default_rng(15)
        X = rng.normal(size=(20, 5))
        y = rng.normal(size=20)
        model = RidgeRegressor(penalty=0.5).fit(X, y)
        path = tmp_path / "ridge.txt"
        save_model(model, path)
        back = load_model(path)
        np.testing.assert_array_equal(back.coef_, model.coef_)
        assert back.intercept_ == model.intercept_
        np.testing.assert_array_equal(back.predict(X), model.predict(X))

    def test_mean_round_trip(self, tmp_path):
        model = MeanBaseline().fit(np.zeros((3, 2)), np.array([1.0, 2.0, 4.0]))
        path = tmp_path / "mean.txt"
        save_model(model, path)
        assert load_model(path).mean_ == model.mean_

    def test_hash_tracks_parameters(self):
        rng = np.random.default_rng(16)
        X = rng.normal(size=(20, 5))
        y = rng.normal(size=20)
        a = RidgeRegressor(penalty=0.5).fit(X, y)
        b = RidgeRegressor(penalty=0.5).fit(X, y)
        c = RidgeRegressor(penalty=5.0).fit(X, y)
        assert param_hash(a) == param_hash(b)
        assert param_hash(a) != param_hash(c)

    def test_rejects_non_model_file(self, tmp_path):
        path = tmp_path / "junk.txt"
        path.write_text("hello\n")
        with pytest.raises(ParameterError):
            load_model(path)
