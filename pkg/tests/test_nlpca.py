import numpy as np
import pytest

from oracles import finite_difference_grads, linear_pca_mse

from indirect_shm.errors import DataError, FormatError, ShapeError, TrainError
from indirect_shm.features import FeatureMatrix
from indirect_shm.nlpca import (PARAM_NAMES, fit_nlpca, init_params, load_model, loss_and_grads, reconstruct,
                                save_model, transform, weight_components)


@pytest.fixture(scope="module")
def subspace_data():
    rng = np.random.default_rng(0)
    return rng.standard_normal((100, 3)) @ rng.standard_normal((3, 8))


@pytest.fixture(scope="module")
def subspace_model(subspace_data):
    return fit_nlpca(subspace_data, seed=0, epochs=4000, learning_rate=1e-2)


@pytest.fixture(scope="module")
def semicircle():
    rng = np.random.default_rng(1)
    theta = rng.uniform(0, np.pi, 200)
    return np.c_[np.cos(theta), np.sin(theta)] + 0.01 * rng.standard_normal((200, 2))


def test_gradients_match_finite_differences():
    rng = np.random.default_rng(4)
    X = rng.standard_normal((5, 4))
    params = init_params(4, 6, 3, rng)
    _, grads = loss_and_grads(params, X)
    fd = finite_difference_grads(lambda p: loss_and_grads(p, X)[0], params)
    for name in PARAM_NAMES:
        a, f = grads[name].ravel(), fd[name].ravel()
        rel = np.linalg.norm(a - f) / max(np.linalg.norm(a), 1e-12)
        assert rel < 1e-5, name
        big = np.abs(a) > 1e-4
        assert np.all(np.abs(a[big] - f[big]) / np.abs(a[big]) < 1e-5), name


def test_same_seed_bit_identical(subspace_data):
    m1 = fit_nlpca(subspace_data, seed=3, epochs=50)
    m2 = fit_nlpca(subspace_data, seed=3, epochs=50)
    assert m1.weights_equal(m2)
    assert all(np.array_equal(m1.params[k], m2.params[k]) for k in PARAM_NAMES)
    assert np.array_equal(m1.trace, m2.trace)
    m3 = fit_nlpca(subspace_data, seed=4, epochs=50)
    assert not m1.weights_equal(m3)


def test_minibatch_deterministic(subspace_data):
    m1 = fit_nlpca(subspace_data, seed=1, epochs=20, batch_size=16)
    m2 = fit_nlpca(subspace_data, seed=1, epochs=20, batch_size=16)
    assert m1.weights_equal(m2)


def test_linear_subspace_reconstructed(subspace_data, subspace_model):
    assert linear_pca_mse(subspace_data, 3) < 1e-20
    recon = subspace_model.decode(subspace_model.scores(subspace_data))
    assert np.mean((recon - subspace_data) ** 2) < 1e-3 * subspace_data.var()


def test_semicircle_beats_linear_pca(semicircle):
    m = fit_nlpca(semicircle, seed=0, epochs=3000, learning_rate=1e-2, n_components=1, hidden_units=8)
    recon = m.decode(m.scores(semicircle))
    assert np.mean((recon - semicircle) ** 2) < linear_pca_mse(semicircle, 1)


def test_trace_endpoints(subspace_model):
    t = subspace_model.trace
    assert np.all(np.isfinite(t)) and t[-1] <= t[0]
    assert len(t) == 4001


def test_transform_reconstruct_matches_final_mse(subspace_data, subspace_model):
    m = FeatureMatrix("fft", subspace_data, np.arange(100.0))
    scores = transform(subspace_model, m)
    back = reconstruct(subspace_model, scores)
    Xs = subspace_model.standardize(subspace_data)
    mse = np.mean((subspace_model.standardize(back.values) - Xs) ** 2)
    assert abs(mse - subspace_model.final_mse) < 1e-10
    assert abs(subspace_model.reconstruction_mse(subspace_data) - subspace_model.final_mse) < 1e-10
    assert scores.kind == "pca_scores" and scores.values.shape == (100, 3)
    assert np.array_equal(scores.labels, m.labels)


def test_encode_decode_nearly_idempotent_on_trained_manifold(subspace_data, subspace_model):
    s1 = subspace_model.scores(subspace_data)
    s2 = subspace_model.scores(subspace_model.decode(s1))
    # the maps are pure; re-encoding a reconstruction lands close to the original score
    assert np.array_equal(s2, subspace_model.scores(subspace_model.decode(s1)))
    assert np.max(np.abs(s2 - s1)) < 0.05 * np.max(np.abs(s1))


def test_single_row_and_zero_scores(subspace_data, subspace_model):
    s = transform(subspace_model, FeatureMatrix("fft", subspace_data[:1], [0.0]))
    assert s.values.shape == (1, 3)
    zero = reconstruct(subspace_model, FeatureMatrix("pca_scores", np.zeros((2, 3)), [0.0, 0.0]))
    assert zero.values.shape == (2, 8)
    np.testing.assert_array_equal(zero.values[0], zero.values[1])


def test_scores_centered_and_ordered(subspace_data, subspace_model):
    s = subspace_model.scores(subspace_data)
    np.testing.assert_allclose(s.mean(axis=0), 0, atol=1e-10)
    c = subspace_model.contributions
    assert np.all(np.diff(c) <= 0)


def test_dimension_mismatch(subspace_model):
    with pytest.raises(ShapeError):
        subspace_model.scores(np.zeros((2, 7)))
    with pytest.raises(ShapeError):
        subspace_model.decode(np.zeros((2, 2)))


def test_fit_input_errors():
    with pytest.raises(DataError):
        fit_nlpca(np.array([[1.0, np.nan]] * 5), epochs=1)
    with pytest.raises(ShapeError):
        fit_nlpca(np.ones((3, 4)), epochs=1)


def test_divergence_raises(subspace_data):
    with pytest.raises(TrainError):
        with np.errstate(all="ignore"):
            fit_nlpca(subspace_data, seed=0, epochs=50, learning_rate=1e300)


def test_weight_components_scales_columns(subspace_data, subspace_model):
    s = transform(subspace_model, FeatureMatrix("fft", subspace_data, np.zeros(100)))
    w = weight_components(s, subspace_model)
    ratio = w.values[0] / s.values[0]
    assert ratio[0] == pytest.approx(1.0) and np.all(ratio <= 1.0 + 1e-12)


def test_save_load_round_trip(tmp_path, subspace_data, subspace_model):
    path = save_model(subspace_model, tmp_path / "model.csv")
    assert path.read_text().startswith("nlpca,1\n")
    back = load_model(path)
    assert back.weights_equal(subspace_model)
    assert np.array_equal(back.scores(subspace_data), subspace_model.scores(subspace_data))
    bad = tmp_path / "bad.csv"
    bad.write_text("weights,2\n")
    with pytest.raises(FormatError):
        load_model(bad)
