import pytest
from sklearn.base import clone
from sklearn.exceptions import NotFittedError

from tloss_lab.estimator import TLossFieldEstimator, TLossSegmenter
from tloss_lab.synthetic import CorruptionSpec, ShapeSpec, gen_dataset
from tloss_lab.volumes import BinaryMask, Dims, ProbabilityMask


SMALL = ShapeSpec(dims=Dims(12, 12, 12), n_lobes=2, lobe_sigma_range=(2.0, 3.5), threshold=0.4)


@pytest.fixture(scope="module")
def data():
    samples = gen_dataset(21, 8, SMALL, CorruptionSpec.none())
    X = [s.intensity for s in samples]
    y = [s.weak for s in samples]
    gt = [s.gt for s in samples]
    return X, y, gt


class TestSegmenter:
    def test_sklearn_params_roundtrip(self):
        est = TLossSegmenter(loss="mse", lr_theta=5e-3, max_epochs=10)
        params = est.get_params()
        assert params["loss"] == "mse"
        assert params["lr_theta"] == 5e-3
        est.set_params(loss="bce")
        assert est.loss == "bce"
        cloned = clone(est)
        assert cloned.get_params() == est.get_params()

    def test_defaults_mirror_training_configuration(self):
        est = TLossSegmenter()
        cfg = est._train_config()
        assert cfg.lr_theta == 1e-3
        assert cfg.lr_r == 1e-4
        assert cfg.lr_sigma == 1e-4
        assert cfg.max_epochs == 600

    def test_not_fitted_error(self, data):
        X, _, _ = data
        with pytest.raises(NotFittedError):
            TLossSegmenter().predict(X[:1])

    def test_fit_predict_score(self, data):
        X, y, gt = data
        est = TLossSegmenter(max_epochs=25, patience=10, seed=4)
        assert est.fit(X, y) is est
        assert est.n_epochs_ <= 25
        probas = est.predict_proba(X[:2])
        assert isinstance(probas[0], ProbabilityMask)
        preds = est.predict(X[:2])
        assert isinstance(preds[0], BinaryMask)
        assert est.score(X, gt) > 0.8

    def test_accepts_plain_arrays(self, data):
        X, y, _ = data
        arrays_x = [v.data for v in X]
        arrays_y = [m.data for m in y]
        est = TLossSegmenter(loss="mse", max_epochs=5, patience=5, seed=0)
        est.fit(arrays_x, arrays_y)
        assert est.report_.stopped_epoch <= 5

    def test_explicit_validation_split(self, data):
        X, y, _ = data
        est = TLossSegmenter(loss="mse", max_epochs=5, patience=5, seed=0)
        est.fit(X[:6], y[:6], X_val=X[6:], y_val=y[6:])
        assert len(est.report_.val_tdist) == est.report_.stopped_epoch

    def test_invalid_mode_rejected(self, data):
        X, y, _ = data
        with pytest.raises(ValueError, match="mode"):
            TLossSegmenter(mode="diagonal", max_epochs=2).fit(X, y)

    def test_mismatched_lengths_rejected(self, data):
        X, y, _ = data
        with pytest.raises(ValueError):
            TLossSegmenter(max_epochs=2).fit(X, y[:-1])


class TestFieldEstimator:
    def test_fit_sets_artifacts(self, data):
        _, y, _ = data
        est = TLossFieldEstimator(steps=80)
        assert est.fit(y[:3]) is est
        assert isinstance(est.proba_, ProbabilityMask)
        assert isinstance(est.mask_, BinaryMask)

    def test_clone_compatible(self):
        est = TLossFieldEstimator(loss="mae", steps=17)
        assert clone(est).get_params()["steps"] == 17
