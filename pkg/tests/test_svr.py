import warnings

import numpy as np
import pytest

from oracles import svr_dual_oracle

from indirect_shm.errors import ConvergenceWarning, NumericError, ParamError, ShapeError
from indirect_shm.kernels import KernelSpec, gram
from indirect_shm.svr import fit_svr, predict_svr, standardize_targets


def problem(seed, n=20, d=3, noise=5.0):
    rng = np.random.default_rng(seed)
    X = rng.standard_normal((n, d))
    y = 50 * np.sin(X[:, 0]) + 20 * X[:, 1] + noise * rng.standard_normal(n) + 100
    return X, y


def eps_loss(model, X, y):
    return float(np.sum(np.maximum(np.abs(predict_svr(model, X) - y) - model.epsilon, 0)))


def kkt_violations(model, X, y, tol):
    """Indices breaking the tol-relaxed KKT conditions, in standardized units."""
    ys = (y - model.y_mean) / model.y_scale
    beta = np.zeros(len(y))
    beta[model.support_index] = model.beta
    r = np.abs(model.decision_standardized(X) - ys)
    eps = model.epsilon / model.y_scale
    C = model.C
    zero = (beta == 0) & (r > eps + tol)
    bound = (np.abs(beta) >= C - 1e-12) & (r < eps - tol)
    free = (beta != 0) & (np.abs(beta) < C - 1e-12) & ((r < eps - tol) | (r > eps + tol))
    return np.flatnonzero(zero | bound | free)


@pytest.mark.parametrize("family", ["linear", "polynomial", "gaussian"])
def test_dual_objective_matches_qp_oracle(family):
    X, y = problem(1)
    spec = KernelSpec(family, scale=1.5)
    model = fit_svr(X, y, spec, C=1.0, tol=1e-4)
    ys, _, scale = standardize_targets(y)
    oracle, _ = svr_dual_oracle(gram(spec, X).values, ys, 1.0, model.epsilon / scale)
    assert abs(model.dual_objective - oracle) < 1e-4


def test_constraints_and_kkt():
    X, y = problem(2, n=30)
    model = fit_svr(X, y, KernelSpec("gaussian", scale=1.5), C=0.5)
    assert model.converged
    assert abs(model.beta.sum()) < 1e-8
    assert np.all(np.abs(model.beta) <= model.C + 1e-12)
    assert kkt_violations(model, X, y, 1e-3).size == 0


def test_objective_trace_non_decreasing():
    X, y = problem(3)
    model = fit_svr(X, y, KernelSpec("polynomial", scale=2.0))
    trace = model.objective_trace
    assert trace.size == model.n_iter + 1
    assert np.all(np.diff(trace) >= -1e-12)
    assert trace[-1] == pytest.approx(model.dual_objective, abs=1e-12)


def test_linear_target_fits_inside_tube():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((25, 3))
    y = X @ np.array([3.0, -2.0, 0.5]) + 7.0
    coef, res, *_ = np.linalg.lstsq(np.c_[X, np.ones(25)], y, rcond=None)
    assert np.allclose(np.c_[X, np.ones(25)] @ coef, y)
    model = fit_svr(X, y, KernelSpec("linear"), C=100.0, epsilon=0.01, tol=1e-9)
    assert np.max(np.abs(predict_svr(model, X) - y)) <= 0.01 + 1e-6


@pytest.mark.parametrize("family", ["linear", "polynomial", "gaussian"])
def test_constant_target(family):
    X, _ = problem(5)
    y = np.full(20, 42.0)
    with warnings.catch_warnings():
        warnings.simplefilter("error")
        model = fit_svr(X, y, KernelSpec(family))
    assert model.beta.size == 0
    np.testing.assert_allclose(predict_svr(model, X), 42.0)
    np.testing.assert_allclose(predict_svr(model, np.zeros((3, 3))), 42.0)


def test_free_support_vectors_sit_on_tube_edge():
    X, y = problem(6, n=30)
    model = fit_svr(X, y, KernelSpec("gaussian", scale=1.5), C=1.0, tol=1e-6)
    free = np.abs(model.beta) < model.C - 1e-9
    assert free.any()
    idx = model.support_index[free]
    resid = np.abs(predict_svr(model, X[idx]) - y[idx])
    np.testing.assert_allclose(resid, model.epsilon, atol=1e-5 * model.y_scale)


def test_batch_predict_equals_rows():
    X, y = problem(7)
    model = fit_svr(X, y, KernelSpec("gaussian", scale=1.2))
    Xt = np.random.default_rng(0).standard_normal((9, 3))
    batch = predict_svr(model, Xt)
    rows = np.concatenate([predict_svr(model, x[None, :]) for x in Xt])
    assert np.array_equal(batch, rows)


def test_doubling_c_never_increases_training_loss():
    for seed in range(5):
        X, y = problem(10 + seed)
        losses = [eps_loss(fit_svr(X, y, KernelSpec("gaussian", scale=1.5), C=C, tol=1e-6), X, y)
                  for C in (0.25, 0.5, 1.0, 2.0, 4.0)]
        assert np.all(np.diff(losses) <= 1e-6 * max(losses)), losses


def test_sparse_solution_when_noise_below_tube():
    rng = np.random.default_rng(8)
    X = rng.uniform(-2, 2, (60, 2))
    y = 10 * np.sin(X[:, 0]) + X[:, 1] + 0.01 * rng.standard_normal(60)
    model = fit_svr(X, y, KernelSpec("gaussian", scale=1.0), C=10.0, epsilon=0.5)
    assert model.beta.size / 60 < 0.5


def test_deterministic():
    X, y = problem(9)
    a = fit_svr(X, y, KernelSpec("gaussian"))
    b = fit_svr(X, y, KernelSpec("gaussian"))
    assert np.array_equal(a.beta, b.beta) and a.bias == b.bias


def test_iteration_cap_warns():
    X, y = problem(11, n=30)
    with pytest.warns(ConvergenceWarning):
        model = fit_svr(X, y, KernelSpec("linear"), C=100.0, tol=1e-9, max_iter=3)
    assert not model.converged and model.n_iter == 3


def test_input_errors():
    X, y = problem(12)
    spec = KernelSpec("gaussian")
    with pytest.raises(ShapeError):
        fit_svr(X, y[:-1], spec)
    with pytest.raises(ParamError):
        fit_svr(X[:1], y[:1], spec)
    with pytest.raises(ParamError):
        fit_svr(X, y, spec, C=0.0)
    with pytest.raises(ParamError):
        fit_svr(X, y, spec, epsilon=-1.0)
    bad = X.copy()
    bad[0, 0] = np.nan
    with pytest.raises(NumericError):
        fit_svr(bad, y, spec)
    model = fit_svr(X, y, spec)
    with pytest.raises(ShapeError):
        predict_svr(model, np.zeros((2, 4)))


def test_nan_kernel_values():
    X, y = problem(13)
    with np.errstate(all="ignore"):
        with pytest.raises(NumericError):
            fit_svr(X * 1e200, y, KernelSpec("polynomial", degree=3))


def test_summary_fields():
    X, y = problem(14)
    s = fit_svr(X, y, KernelSpec("gaussian")).summary()
    assert {"kernel", "C", "epsilon", "n_support", "dual_objective"} <= set(s)
