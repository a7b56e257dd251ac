import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from graspbci.classify_lda import (CspOvrLda, LdaModel, OvrModel, fit_lda, fit_ovr,
                                   predict_ovr)
from graspbci.errors import MissingClass, ShapeMismatch, SingularCovariance
from graspbci.features_csp import CspModel
from graspbci.preprocess import TrialSet


def angle(u, v):
    c = u @ v / (np.linalg.norm(u) * np.linalg.norm(v))
    return float(np.arccos(np.clip(c, -1, 1)))


def test_symmetric_1d_boundary():
    x = np.array([-1.2, -1.0, -0.8, 0.8, 1.0, 1.2])
    model = fit_lda(x, [0, 0, 0, 1, 1, 1])
    assert model.w[0] > 0
    assert -model.b / model.w[0] == pytest.approx(0.0, abs=1e-12)


def test_closed_form_direction_on_sample_moments(rng):
    mu0, mu1 = np.array([0.0, 0.0]), np.array([1.5, -0.5])
    cov = np.array([[1.0, 0.6], [0.6, 2.0]])
    x0 = rng.multivariate_normal(mu0, cov, 5000)
    x1 = rng.multivariate_normal(mu1, cov, 5000)
    model = fit_lda(np.vstack([x0, x1]), [0] * 5000 + [1] * 5000)
    pooled = (np.cov(x0.T) + np.cov(x1.T)) / 2
    oracle = np.linalg.solve(pooled, x1.mean(0) - x0.mean(0))
    assert angle(model.w, oracle) < 1e-9
    # and close to the population direction, within sampling error
    assert angle(model.w, np.linalg.solve(cov, mu1 - mu0)) < 0.05


def test_singular_and_missing():
    with pytest.raises(SingularCovariance):
        fit_lda(np.array([[1.0, 2.0]] * 4), [0, 0, 1, 1])
    with pytest.raises(MissingClass):
        fit_lda(np.zeros((3, 2)), [0, 0, 0])
    m = fit_lda(np.array([[1.0, 2.0]] * 4 + [[1.0, 3.0]]), [0, 0, 1, 1, 1], shrink=0.5)
    assert np.all(np.isfinite(m.w))


@settings(max_examples=40, deadline=None)
@given(st.integers(0, 2**31), st.integers(1, 5))
def test_label_swap_and_permutation(seed, d):
    rng = np.random.default_rng(seed)
    x = rng.standard_normal((40, d))
    y = np.array([0] * 17 + [1] * 23)
    m = fit_lda(x, y)
    swapped = fit_lda(x, 1 - y)
    np.testing.assert_array_equal(swapped.w, -m.w)
    assert swapped.b == -m.b
    perm = rng.permutation(40)
    p = fit_lda(x[perm], y[perm])
    np.testing.assert_allclose(p.w, m.w, rtol=1e-10, atol=1e-10)
    assert p.b == pytest.approx(m.b, rel=1e-10, abs=1e-10)
    assert LdaModel.from_dict(m.to_dict()).b == m.b


def planted(rng, n_per_class=30, c=8, n=400, gain=4.0, patterns=None):
    if patterns is None:
        patterns = np.linalg.qr(np.random.default_rng(7).standard_normal((c, c)))[0][:, :5].T
    data, labels = [], []
    for k in range(5):
        for _ in range(n_per_class):
            x = rng.standard_normal((c, n))
            x += gain * np.outer(patterns[k], rng.standard_normal(n))
            data.append(x)
            labels.append(k)
    return TrialSet(np.array(data), labels, 100.0, 0.0, [f"c{i}" for i in range(c)],
                    ["EEG"] * c)


def test_ovr_separable_training_accuracy(rng):
    ts = planted(rng)
    model = fit_ovr(ts)
    pred = np.array([predict_ovr(model, e) for e in ts])
    assert np.mean(pred == ts.labels) >= 0.99
    probe = planted(np.random.default_rng(99), n_per_class=1)
    assert predict_ovr(model, probe.data[0]) == 0
    back = OvrModel.from_json(model.to_json())
    assert [predict_ovr(back, e) for e in ts] == pred.tolist()


def test_ovr_covariance_path_matches_epochs(rng):
    ts = planted(rng, n_per_class=12)
    dec = CspOvrLda()
    prep = dec.prepare(ts.data)
    model = dec.fit(prep, ts.labels)
    fast = dec.predict(model, prep)
    slow = [predict_ovr(model, e) for e in ts]
    assert fast.tolist() == slow


def test_missing_class_and_shape(rng):
    ts = planted(rng, n_per_class=6)
    keep = ts.labels != 3
    with pytest.raises(MissingClass):
        fit_ovr(ts.subset(np.flatnonzero(keep)))
    model = fit_ovr(ts)
    with pytest.raises(ShapeMismatch):
        predict_ovr(model, np.zeros((3, 10)))


def _model_with_scores(scores):
    """OvR model whose class-k LDA returns scores[k] regardless of input."""
    csp = CspModel(np.eye(2), np.array([0.6, 0.4]), 1)
    pairs = tuple((csp, LdaModel(np.zeros(2), float(s))) for s in scores)
    return OvrModel(pairs)


@pytest.mark.parametrize("scores,expected", [
    ([0.2, 3.1, -1.0, 0.0, 0.5], 1),
    ([0.0, 0.0, 2.0, 0.0, 2.0], 2),
])
def test_argmax_and_tie_rule(scores, expected):
    model = _model_with_scores(scores)
    x = np.random.default_rng(0).standard_normal((2, 20))
    assert predict_ovr(model, x) == expected
    assert model.predict_covariance(CspOvrLda().prepare(x[None]).sample).tolist() == [expected]
