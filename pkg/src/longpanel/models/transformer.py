"""Minimal causal-window transformer with hand-derived backpropagation.

One encoder layer, one attention head, no positional embeddings.  Each
position may attend only to itself and the previous window-1 positions;
blocked logits are overwritten with a sentinel so negative the softmax
numerator underflows to exactly zero, which makes causality bit-exact
rather than approximate.  The backward pass is written out by hand for
this fixed architecture and is validated against central finite
differences in the test suite.
"""

import numpy as np
from sklearn.base import BaseEstimator, RegressorMixin

from ..errors import DivergenceError, ParameterError
from ..metrics import mae
from ..validation import as_float_array, check_finite, check_positive_int

# exp(_MASK_SENTINEL - rowmax) underflows to 0.0 for any realistic logit
_MASK_SENTINEL = -1e30
_LN_EPS = 1e-5
_ADAM_B1 = 0.9
_ADAM_B2 = 0.999
_ADAM_EPS = 1e-8


def _banded_causal_mask(length, window):
    """Boolean (length, length) matrix: True where attending is allowed."""
    i = np.arange(length)[:, None]
    j = np.arange(length)[None, :]
    return (j <= i) & (i - j < window)


def _softmax_rows(scores):
    shifted = scores - scores.max(axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / e.sum(axis=-1, keepdims=True)


def _layer_norm(x, gain, bias):
    mu = x.mean(axis=-1, keepdims=True)
    var = x.var(axis=-1, keepdims=True)
    inv = 1.0 / np.sqrt(var + _LN_EPS)
    xhat = (x - mu) * inv
    return gain * xhat + bias, (xhat, inv)


def _layer_norm_backward(dy, gain, cache):
    # dx = inv * (dxhat - mean(dxhat) - xhat * mean(dxhat * xhat)):
    # the mean/variance chain rule collapses into two row means
    xhat, inv = cache
    dgain = (dy * xhat).sum(axis=tuple(range(dy.ndim - 1)))
    dbias = dy.sum(axis=tuple(range(dy.ndim - 1)))
    dxhat = dy * gain
    dx = (
        dxhat
        - dxhat.mean(axis=-1, keepdims=True)
        - xhat * (dxhat * xhat).mean(axis=-1, keepdims=True)
    ) * inv
    return dx, dgain, dbias


class CausalWindowTransformer(BaseEstimator, RegressorMixin):
    """Single-layer, single-head encoder regressor over day sequences.

    Reads the prediction from the final (anchor) position through a
    scalar head.  Trains with decoupled weight decay applied to weight
    matrices only, squared-error loss, and early stopping on development
    flattened MAE.  ``use_ffn`` toggles the position-wise feed-forward
    sublayer; with it off the layer is attention + layer norm only.
    """

    def __init__(
        self,
        window,
        d_model=32,
        ffn_width=None,
        use_ffn=True,
        attn_dropout=0.3,
        out_dropout=0.1,
        learning_rate=1e-3,
        weight_decay=1.0,
        batch_size=64,
        max_epochs=200,
        patience=10,
        seed=0,
    ):
        self.window = window
        self.d_model = d_model
        self.ffn_width = ffn_width
        self.use_ffn = use_ffn
        self.attn_dropout = attn_dropout
        self.out_dropout = out_dropout
        self.learning_rate = learning_rate
        self.weight_decay = weight_decay
        self.batch_size = batch_size
        self.max_epochs = max_epochs
        self.patience = patience
        self.seed = seed

    # -- parameter handling ----------------------------------------------

    def _init_params(self, d_in, rng):
        dp = self.d_model
        df = self.ffn_width if self.ffn_width is not None else dp
        scale = 0.02

        def w(*shape):
            return rng.normal(0.0, scale, size=shape)

        params = {
            "w_in": w(d_in, dp),
            "b_in": np.zeros(dp),
            "w_q": w(dp, dp),
            "b_q": np.zeros(dp),
            "w_k": w(dp, dp),
            "b_k": np.zeros(dp),
            "w_v": w(dp, dp),
            "b_v": np.zeros(dp),
            "w_o": w(dp, dp),
            "b_o": np.zeros(dp),
            "ln1_g": np.ones(dp),
            "ln1_b": np.zeros(dp),
            "w_head": w(dp),
            "b_head": np.zeros(()),
        }
        if self.use_ffn:
            params.update(
                {
                    "w_f1": w(dp, df),
                    "b_f1": np.zeros(df),
                    "w_f2": w(df, dp),
                    "b_f2": np.zeros(dp),
                    "ln2_g": np.ones(dp),
                    "ln2_b": np.zeros(dp),
                }
            )
        return params

    def _decayed_names(self):
        names = {"w_in", "w_q", "w_k", "w_v", "w_o", "w_head"}
        if self.use_ffn:
            names |= {"w_f1", "w_f2"}
        return names

    # -- forward / backward ----------------------------------------------

    def _forward(self, params, X, anchor, train_rng=None):
        """Run the network; returns predictions and a cache for backward.

        ``train_rng`` enables dropout (training mode); None is eval mode.
        """
        B, L, _ = X.shape
        dp = self.d_model
        allowed = _banded_causal_mask(L, self.window)

        H0 = X @ params["w_in"] + params["b_in"]
        Q = H0 @ params["w_q"] + params["b_q"]
        K = H0 @ params["w_k"] + params["b_k"]
        V = H0 @ params["w_v"] + params["b_v"]
        scale = 1.0 / np.sqrt(dp)
        S = np.einsum("bld,bmd->blm", Q, K) * scale
        S = np.where(allowed[None, :, :], S, _MASK_SENTINEL)
        A = _softmax_rows(S)

        if train_rng is not None and self.attn_dropout > 0:
            keep = 1.0 - self.attn_dropout
            attn_mask = (train_rng.random(A.shape) < keep) / keep
        else:
            attn_mask = None
        A_used = A if attn_mask is None else A * attn_mask

        C = A_used @ V
        O = C @ params["w_o"] + params["b_o"]
        R1 = H0 + O
        N1, ln1_cache = _layer_norm(R1, params["ln1_g"], params["ln1_b"])

        if self.use_ffn:
            Z1 = N1 @ params["w_f1"] + params["b_f1"]
            Hr = np.maximum(Z1, 0.0)
            F = Hr @ params["w_f2"] + params["b_f2"]
            R2 = N1 + F
            N2, ln2_cache = _layer_norm(R2, params["ln2_g"], params["ln2_b"])
        else:
            Z1 = Hr = ln2_cache = None
            N2 = N1

        r = N2[:, anchor, :]
        if train_rng is not None and self.out_dropout > 0:
            keep_o = 1.0 - self.out_dropout
            out_mask = (train_rng.random(r.shape) < keep_o) / keep_o
        else:
            out_mask = None
        r_used = r if out_mask is None else r * out_mask

        yhat = r_used @ params["w_head"] + params["b_head"]
        cache = {
            "X": X,
            "H0": H0,
            "Q": Q,
            "K": K,
            "V": V,
            "A": A,
            "A_used": A_used,
            "attn_mask": attn_mask,
            "C": C,
            "ln1_cache": ln1_cache,
            "N1": N1,
            "Z1": Z1,
            "Hr": Hr,
            "ln2_cache": ln2_cache,
            "N2": N2,
            "r_used": r_used,
            "out_mask": out_mask,
            "anchor": anchor,
            "scale": scale,
        }
        return yhat, cache

    def _backward(self, params, cache, dyhat):
        """Hand-derived gradients of the loss w.r.t. every parameter."""
        g = {}
        B, L, dp = cache["H0"].shape
        anchor = cache["anchor"]

        g["b_head"] = np.asarray(dyhat.sum())
        g["w_head"] = cache["r_used"].T @ dyhat
        d_r_used = np.outer(dyhat, params["w_head"])
        d_r = (
            d_r_used
            if cache["out_mask"] is None
            else d_r_used * cache["out_mask"]
        )

        dN2 = np.zeros_like(cache["N2"])
        dN2[:, anchor, :] = d_r

        if self.use_ffn:
            dR2, g["ln2_g"], g["ln2_b"] = _layer_norm_backward(
                dN2, params["ln2_g"], cache["ln2_cache"]
            )
            dN1 = dR2.copy()
            dF = dR2
            Hr_flat = cache["Hr"].reshape(-1, cache["Hr"].shape[-1])
            dF_flat = dF.reshape(-1, dp)
            g["w_f2"] = Hr_flat.T @ dF_flat
            g["b_f2"] = dF_flat.sum(axis=0)
            dHr = dF @ params["w_f2"].T
            dZ1 = dHr * (cache["Z1"] > 0)
            N1_flat = cache["N1"].reshape(-1, dp)
            dZ1_flat = dZ1.reshape(-1, dZ1.shape[-1])
            g["w_f1"] = N1_flat.T @ dZ1_flat
            g["b_f1"] = dZ1_flat.sum(axis=0)
            dN1 += dZ1 @ params["w_f1"].T
        else:
            dN1 = dN2

        dR1, g["ln1_g"], g["ln1_b"] = _layer_norm_backward(
            dN1, params["ln1_g"], cache["ln1_cache"]
        )
        dH0 = dR1.copy()
        dO = dR1

        C_flat = cache["C"].reshape(-1, dp)
        dO_flat = dO.reshape(-1, dp)
        g["w_o"] = C_flat.T @ dO_flat
        g["b_o"] = dO_flat.sum(axis=0)
        dC = dO @ params["w_o"].T

        dA_used = np.einsum("bld,bmd->blm", dC, cache["V"])
        dV = np.einsum("bml,bmd->bld", cache["A_used"], dC)
        dA = (
            dA_used
            if cache["attn_mask"] is None
            else dA_used * cache["attn_mask"]
        )
        # softmax jacobian row by row; masked cells have A == 0 so their
        # sentinel logits receive exactly zero gradient
        A = cache["A"]
        dS = A * (dA - (dA * A).sum(axis=-1, keepdims=True))

        scale = cache["scale"]
        dQ = np.einsum("blm,bmd->bld", dS, cache["K"]) * scale
        dK = np.einsum("blm,bld->bmd", dS, cache["Q"]) * scale

        H0_flat = cache["H0"].reshape(-1, dp)
        for name, dT in (("q", dQ), ("k", dK), ("v", dV)):
            dT_flat = dT.reshape(-1, dp)
            g[f"w_{name}"] = H0_flat.T @ dT_flat
            g[f"b_{name}"] = dT_flat.sum(axis=0)
            dH0 += dT @ params[f"w_{name}"].T

        X_flat = cache["X"].reshape(-1, cache["X"].shape[-1])
        dH0_flat = dH0.reshape(-1, dp)
        g["w_in"] = X_flat.T @ dH0_flat
        g["b_in"] = dH0_flat.sum(axis=0)
        return g

    def loss_and_gradients(self, sequences, targets, params=None):
        """Eval-mode squared-error loss and parameter gradients.

        Exposed so the finite-difference oracle in the tests can probe
        the exact backward pass used in training (dropout disabled).
        """
        X = self._check_sequences(sequences, fitted=params is None)
        y = as_float_array(targets, "targets", ndim=1)
        if params is None:
            params = self.params_
        yhat, cache = self._forward(params, X, anchor=X.shape[1] - 1)
        err = yhat - y
        loss = float(np.mean(err**2))
        dyhat = 2.0 * err / len(y)
        return loss, self._backward(params, cache, dyhat)

    # -- training ---------------------------------------------------------

    def fit(self, sequences, targets, dev_sequences=None, dev_targets=None):
        check_positive_int(self.window, "window")
        check_positive_int(self.d_model, "d_model")
        X = as_float_array(sequences, "sequences", ndim=3)
        y = as_float_array(targets, "targets", ndim=1)
        check_finite(X, "sequences")
        check_finite(y, "targets")
        if X.shape[0] != len(y):
            raise ParameterError("sequences and targets must align")
        if X.shape[0] == 0:
            raise ParameterError("cannot fit on an empty dataset")
        if X.shape[1] != self.window:
            raise ParameterError(
                f"training sequences must have length {self.window}, "
                f"got {X.shape[1]}"
            )
        have_dev = dev_sequences is not None and dev_targets is not None
        if have_dev:
            dev_X = as_float_array(dev_sequences, "dev_sequences", ndim=3)
            dev_y = as_float_array(dev_targets, "dev_targets", ndim=1)

        self.d_in_ = int(X.shape[2])
        rng = np.random.default_rng(self.seed)
        params = self._init_params(self.d_in_, rng)
        state = {
            name: (np.zeros_like(p), np.zeros_like(p))
            for name, p in params.items()
        }
        decayed = self._decayed_names()
        step = 0
        best_score = np.inf
        best_params = None
        best_epoch = -1
        stale = 0
        history = []

        n = X.shape[0]
        for epoch in range(self.max_epochs):
            order = rng.permutation(n)
            for start in range(0, n, self.batch_size):
                idx = order[start : start + self.batch_size]
                xb, yb = X[idx], y[idx]
                step += 1
                yhat, cache = self._forward(
                    params, xb, anchor=xb.shape[1] - 1, train_rng=rng
                )
                err = yhat - yb
                loss = float(np.mean(err**2))
                if not np.isfinite(loss):
                    raise DivergenceError(
                        f"non-finite training loss {loss}", epoch=epoch, step=step
                    )
                grads = self._backward(params, cache, 2.0 * err / len(yb))
                self._adamw_step(params, grads, state, step, decayed)

            if have_dev:
                dev_score = mae(dev_y, self._predict_with(params, dev_X))
                history.append((epoch, dev_score))
                if dev_score < best_score:
                    best_score = dev_score
                    best_params = {k: v.copy() for k, v in params.items()}
                    best_epoch = epoch
                    stale = 0
                else:
                    stale += 1
                    if stale >= self.patience:
                        break

        if have_dev and best_params is not None:
            params = best_params
        for p in params.values():
            p.flags.writeable = False
        self.params_ = params
        self.history_ = tuple(history)
        self.best_epoch_ = best_epoch if have_dev else None
        self.best_dev_score_ = best_score if have_dev else None
        return self

    def _adamw_step(self, params, grads, state, step, decayed):
        lr = self.learning_rate
        for name, p in params.items():
            gr = grads[name]
            m, v = state[name]
            m *= _ADAM_B1
            m += (1 - _ADAM_B1) * gr
            v *= _ADAM_B2
            v += (1 - _ADAM_B2) * gr**2
            mhat = m / (1 - _ADAM_B1**step)
            vhat = v / (1 - _ADAM_B2**step)
            p -= lr * mhat / (np.sqrt(vhat) + _ADAM_EPS)
            if name in decayed and self.weight_decay > 0:
                p -= lr * self.weight_decay * p

    # -- inference --------------------------------------------------------

    def _check_sequences(self, sequences, fitted=True):
        X = as_float_array(sequences, "sequences", ndim=3)
        if fitted:
            if not hasattr(self, "params_"):
                raise ParameterError("CausalWindowTransformer is not fitted")
            if X.shape[2] != self.d_in_:
                raise ParameterError(
                    f"expected day vectors of width {self.d_in_}, "
                    f"got {X.shape[2]}"
                )
        return X

    def _predict_with(self, params, X, anchor=None):
        if anchor is None:
            anchor = X.shape[1] - 1
        yhat, _ = self._forward(params, X, anchor=anchor)
        return yhat

    def predict(self, sequences, anchor=None):
        """Eval-mode predictions read at ``anchor`` (default: last position).

        Sequences may be longer than the training window; the banded mask
        restricts each prediction to the window ending at the anchor.
        """
        X = self._check_sequences(sequences)
        if anchor is not None:
            anchor = int(anchor)
            if not -X.shape[1] <= anchor < X.shape[1]:
                raise ParameterError(
                    f"anchor {anchor} out of range for length {X.shape[1]}"
                )
        return self._predict_with(self.params_, X, anchor=anchor)

    def attention_probs(self, sequences):
        """Eval-mode attention rows, for mask and normalization checks."""
        X = self._check_sequences(sequences)
        _, cache = self._forward(self.params_, X, anchor=X.shape[1] - 1)
        return cache["A"]
