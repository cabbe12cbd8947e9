"""Independent reference implementations used to cross-check the library.

Every oracle here deliberately takes a different route from the code under
test: scalar Python loops instead of vectorized numpy, extended-precision
Gauss-Jordan elimination instead of Cholesky, mpmath special functions
instead of scipy, SVD instead of eigendecomposition, and central finite
differences instead of hand-derived backprop.  Tests compare the two
routes; neither side is ever allowed to call the other.
"""

import math

import mpmath
import numpy as np

# ---------------------------------------------------------------------------
# scoped metrics, via plain dict-and-loop summation


def brute_mae(y_true, y_pred) -> float:
    total = 0.0
    for t, p in zip(y_true, y_pred):
        total += abs(float(p) - float(t))
    return total / len(y_true)


def brute_smape(y_true, y_pred, eps=0.0) -> float:
    total = 0.0
    for t, p in zip(y_true, y_pred):
        t, p = float(t), float(p)
        total += 2.0 * abs(p - t) / (abs(t) + abs(p) + eps)
    return total / len(y_true)


def brute_pearson(y_true, y_pred):
    """Correlation by direct summation; None when undefined."""
    n = len(y_true)
    if n < 2:
        return None
    if all(float(v) == float(y_true[0]) for v in y_true):
        return None
    if all(float(v) == float(y_pred[0]) for v in y_pred):
        return None
    my = sum(float(v) for v in y_true) / n
    mp_ = sum(float(v) for v in y_pred) / n
    sxy = sxx = syy = 0.0
    for t, p in zip(y_true, y_pred):
        dt, dp = float(t) - my, float(p) - mp_
        sxy += dt * dp
        sxx += dt * dt
        syy += dp * dp
    if sxx == 0.0 or syy == 0.0:
        return None
    return sxy / (math.sqrt(sxx) * math.sqrt(syy))


def _group_by_person(person_ids, y_true, y_pred):
    """dict person -> ([truths], [preds]) in first-appearance order."""
    groups: dict = {}
    for pid, t, p in zip(person_ids, y_true, y_pred):
        groups.setdefault(pid, ([], []))
        groups[pid][0].append(float(t))
        groups[pid][1].append(float(p))
    return groups


def brute_scoped(metric, scope, person_ids, y_true, y_pred, eps=0.0):
    """Direct summation form of each scoped metric.

    scope is one of "flattened", "between_person", "within_person".
    Returns the metric value, or None when the definition is empty
    (within-person r with every person constant or singleton).
    """
    fns = {"mae": brute_mae, "smape": brute_smape, "pearson_r": brute_pearson}
    if metric == "smape":
        fn = lambda t, p: brute_smape(t, p, eps)  # noqa: E731
    else:
        fn = fns[metric]

    if scope == "flattened":
        return fn(y_true, y_pred)

    groups = _group_by_person(person_ids, y_true, y_pred)

    if scope == "between_person":
        mean_t = [sum(ts) / len(ts) for ts, _ in groups.values()]
        mean_p = [sum(ps) / len(ps) for _, ps in groups.values()]
        return fn(mean_t, mean_p)

    # within_person: metric per person, averaged over contributing persons
    vals = []
    for ts, ps in groups.values():
        if metric == "pearson_r":
            if len(ts) < 2:
                continue
            n = len(ts)
            my = sum(ts) / n
            mp_ = sum(ps) / n
            sxx = sum((t - my) ** 2 for t in ts)
            syy = sum((p - mp_) ** 2 for p in ps)
            if sxx == 0.0 or syy == 0.0:
                continue
            vals.append(fn(ts, ps))
        else:
            vals.append(fn(ts, ps))
    if not vals:
        return None
    return sum(vals) / len(vals)


# ---------------------------------------------------------------------------
# ridge regression, via long-double Gauss-Jordan on the normal equations


def ridge_normal_equations(X, y, penalty):
    """Solve (X'X + penalty*I) w = X'(y - mean(y)) in extended precision.

    Returns (w, intercept) as float64.  Elimination with partial pivoting
    is written out by hand so no linear-algebra library sits on this path.
    """
    Xl = np.asarray(X, dtype=np.longdouble)
    yl = np.asarray(y, dtype=np.longdouble)
    inter = yl.mean()
    gram = Xl.T @ Xl
    d = gram.shape[0]
    for i in range(d):
        gram[i, i] += np.longdouble(penalty)
    rhs = Xl.T @ (yl - inter)

    aug = np.concatenate([gram, rhs[:, None]], axis=1)
    for col in range(d):
        pivot = col + int(np.argmax(np.abs(aug[col:, col])))
        if aug[pivot, col] == 0:
            raise ZeroDivisionError("singular ridge system")
        if pivot != col:
            aug[[col, pivot]] = aug[[pivot, col]]
        aug[col] = aug[col] / aug[col, col]
        for row in range(d):
            if row != col and aug[row, col] != 0:
                aug[row] = aug[row] - aug[row, col] * aug[col]
    w = aug[:, d]
    return np.asarray(w, dtype=np.float64), float(inter)


# ---------------------------------------------------------------------------
# Student-t CDF, via the regularized incomplete beta function


def t_cdf(t_stat, dof) -> float:
    """P(T <= t) for T ~ Student-t(dof), at 50 decimal digits."""
    with mpmath.workdps(50):
        t = mpmath.mpf(t_stat)
        v = mpmath.mpf(dof)
        x = v / (v + t * t)
        half = mpmath.betainc(v / 2, mpmath.mpf(1) / 2, 0, x, regularized=True) / 2
        p = half if t < 0 else 1 - half
        return float(p)


# ---------------------------------------------------------------------------
# PCA, via singular values and eigenpair residuals


def pca_singular_variances(X, k):
    """Top-k variances of centered X from an SVD route: s^2 / (n-1)."""
    Xc = np.asarray(X, dtype=np.float64)
    Xc = Xc - Xc.mean(axis=0)
    s = np.linalg.svd(Xc, compute_uv=False)
    return (s[:k] ** 2) / (X.shape[0] - 1)


def pca_eigenpair_residual(X, component, variance) -> float:
    """|C v - lambda v| / max(|C|, tiny) for the sample covariance C."""
    Xl = np.asarray(X, dtype=np.longdouble)
    Xl = Xl - Xl.mean(axis=0)
    cov = Xl.T @ Xl / np.longdouble(X.shape[0] - 1)
    v = np.asarray(component, dtype=np.longdouble)
    resid = cov @ v - np.longdouble(variance) * v
    scale = max(float(np.linalg.norm(np.asarray(cov, dtype=np.float64))), 1e-300)
    return float(np.linalg.norm(np.asarray(resid, dtype=np.float64))) / scale


# ---------------------------------------------------------------------------
# transformer gradients, via central finite differences


def finite_difference_gradients(loss_fn, params, step=1e-5):
    """Central-difference gradient of loss_fn(params) for every entry.

    loss_fn takes a params dict and returns a scalar; params values are
    numpy arrays (0-d allowed).  Returns a dict of same-shaped gradients.
    """
    grads = {}
    for name, value in params.items():
        base = np.array(value, dtype=np.float64)
        g = np.zeros_like(base)
        it = np.nditer(base, flags=["multi_index"])
        for _ in it:
            idx = it.multi_index
            bumped = dict(params)
            plus = base.copy()
            plus[idx] += step
            bumped[name] = plus
            hi = loss_fn(bumped)
            minus = base.copy()
            minus[idx] -= step
            bumped[name] = minus
            lo = loss_fn(bumped)
            g[idx] = (hi - lo) / (2.0 * step)
        grads[name] = g
    return grads
