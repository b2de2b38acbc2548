import numpy as np
import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from dsdiff import DiscreteScoreDiffusion, presets
from dsdiff.estimator import check_states
from dsdiff.exceptions import InvalidStateError


def small_model(**kw):
    params = dict(n_symbols=3, horizon=0.75, step=0.25, hidden_width=8, epochs=2, batch_size=32)
    params.update(kw)
    return DiscreteScoreDiffusion(**params)


@pytest.fixture(scope="module")
def data():
    return presets.sweep_p0().sample(300, np.random.default_rng(0))


class TestParams:
    def test_get_set(self):
        m = small_model()
        assert m.get_params()["hidden_width"] == 8
        m.set_params(epochs=7)
        assert m.epochs == 7

    def test_clone_is_unfitted(self, data):
        m = small_model().fit(data)
        c = clone(m)
        assert c.get_params() == m.get_params()
        assert not hasattr(c, "nets_")


class TestFit:
    def test_attributes(self, data):
        m = small_model().fit(data)
        assert m.n_intervals_ == 3 and m.n_features_in_ == 2
        assert m.C_ == pytest.approx(1.5 * m.bound_)
        assert len(m.training_log_) > 0

    def test_p0_resolves_clip(self, data):
        m = small_model(p0=presets.sweep_p0()).fit(data)
        assert m.C_ == pytest.approx(3.75)

    def test_explicit_clip(self, data):
        assert small_model(clip=2.5).fit(data).C_ == 2.5

    def test_deterministic(self, data):
        a = small_model(random_state=3).fit(data)
        b = small_model(random_state=3).fit(data)
        np.testing.assert_array_equal(a.predict_scores(data[:10], 0), b.predict_scores(data[:10], 0))


class TestPredictSample:
    def test_scores(self, data):
        m = small_model(clip=2.0).fit(data)
        s = m.predict_scores(data[:5], k=1)
        assert s.shape == (5, 2, 2)
        assert np.all(s >= 0.5) and np.all(s <= 2.0)
        raw = m.predict_scores(data[:5], k=1, clipped=False)
        np.testing.assert_allclose(m.clip_scores(raw), s)
        assert m.score_table(1).values.shape == (9, 2, 2)

    def test_sample(self, data):
        m = small_model().fit(data)
        z = m.sample(50, random_state=1)
        assert z.shape == (50, 2) and z.min() >= 0 and z.max() <= 2
        np.testing.assert_array_equal(z, m.sample(50, random_state=1))

    def test_output_distribution(self, data):
        p = small_model().fit(data).output_distribution()
        assert p.probs.shape == (9,) and p.probs.sum() == pytest.approx(1.0)

    def test_not_fitted(self):
        with pytest.raises(NotFittedError):
            small_model().sample(3)

    def test_feature_count_checked(self, data):
        m = small_model().fit(data)
        with pytest.raises(ValueError):
            m.predict_scores(np.zeros((2, 3), dtype=int), 0)


class TestCheckStates:
    def test_accepts_integral_floats(self):
        assert check_states(np.array([[0.0, 2.0]]), 3).dtype == np.int64

    @pytest.mark.parametrize("X", [[[0.5, 1]], [[3, 0]], [[-1, 0]]])
    def test_rejects(self, X):
        with pytest.raises(InvalidStateError):
            check_states(np.array(X), 3)

    def test_rejects_empty(self):
        with pytest.raises(ValueError):
            check_states(np.zeros((0, 2)), 3)
