import json
import math

import numpy as np
import pytest

from tloss_lab.losses import LossKind
from tloss_lab.predictor import FeatureConfig, extract_features, forward
from tloss_lab.synthetic import CorruptionSpec, ShapeSpec, gen_dataset
from tloss_lab.tdist import SAFEGUARD
from tloss_lab.trainer import (
    ADAM_EPS,
    TrainConfig,
    adam_init,
    adam_step,
    augment_features,
    field_estimate,
    train,
)
from tloss_lab.volumes import BinaryMask, Dims, ProbabilityMask, Volume3D, binarize, flip_axis, swap_axes
from tloss_lab.metrics import dice


SMALL = ShapeSpec(dims=Dims(12, 12, 12), n_lobes=2, lobe_sigma_range=(2.0, 3.5), threshold=0.4)


def tiny_dataset(n=6, seed=3, corruption=None, spec=SMALL):
    return gen_dataset(seed, n, spec, corruption or CorruptionSpec.none())


class TestAdam:
    def test_first_step_closed_form(self):
        params = {"w": np.array(0.0)}
        state = adam_init(params)
        adam_step(state, params, {"w": np.array(1.0)}, lr=1e-3)
        expected = -1e-3 * (1.0 / (1.0 + ADAM_EPS))
        assert float(params["w"]) == pytest.approx(expected, rel=1e-15)

    def test_zero_gradient_zero_state_no_change(self):
        params = {"w": np.array([1.5, -2.5])}
        state = adam_init(params)
        adam_step(state, params, {"w": np.zeros(2)}, lr=0.1)
        assert np.array_equal(params["w"], np.array([1.5, -2.5]))

    def test_identical_runs_identical_trajectories(self):
        def run():
            params = {"w": np.array([0.3, 0.7])}
            state = adam_init(params)
            for t in range(25):
                g = np.array([math.sin(t), math.cos(t)])
                adam_step(state, params, {"w": g}, lr=0.01)
            return params["w"]

        assert np.array_equal(run(), run())

    def test_non_finite_gradient_names_group(self):
        params = {"w": np.array(0.0)}
        state = adam_init(params)
        with pytest.raises(RuntimeError, match="theta"):
            adam_step(state, params, {"w": np.array(np.nan)}, lr=0.1, group="theta")


class TestAugmentFeatures:
    def test_matches_extract_of_augmented_volume(self):
        rng = np.random.default_rng(17)
        cfg = FeatureConfig()
        for trial in range(25):
            dims = tuple(int(d) for d in rng.integers(4, 9, size=3))
            if trial % 2 == 0:
                dims = (dims[0], dims[0], dims[2])
            v = Volume3D.from_array(rng.normal(size=dims))
            feats = extract_features(v, cfg)
            flips = tuple(bool(b) for b in rng.integers(0, 2, size=3))
            pairs = [(a, b) for a, b in ((0, 1), (0, 2), (1, 2)) if dims[a] == dims[b]]
            swap = tuple(pairs[rng.integers(len(pairs))]) if pairs and rng.integers(2) else None
            v_aug = v
            for ax in range(3):
                if flips[ax]:
                    v_aug = flip_axis(v_aug, ax)
            if swap is not None:
                v_aug = swap_axes(v_aug, *swap)
            ref = extract_features(v_aug, cfg)
            got = augment_features(feats, flips, swap, cfg)
            assert np.allclose(ref, got, atol=1e-12, rtol=0.0)

    def test_does_not_mutate_cache(self):
        cfg = FeatureConfig()
        v = Volume3D.from_array(np.random.default_rng(0).normal(size=(5, 5, 5)))
        feats = extract_features(v, cfg)
        before = feats.copy()
        augment_features(feats, (True, False, True), (0, 1), cfg)
        assert np.array_equal(feats, before)


class TestTrain:
    def test_deterministic_reports(self):
        samples = tiny_dataset()
        cfg = TrainConfig(loss=LossKind("tdist"), max_epochs=6, patience=5, seed=2)
        a = train(samples[:4], samples[4:], cfg)
        b = train(samples[:4], samples[4:], cfg)
        assert json.dumps(a.report.to_dict(), sort_keys=True) == json.dumps(
            b.report.to_dict(), sort_keys=True
        )
        assert np.array_equal(a.params.w1, b.params.w1)
        assert a.params.b2 == b.params.b2

    def test_patience_one_infinite_delta_stops_after_two_epochs(self):
        samples = tiny_dataset()
        cfg = TrainConfig(
            loss=LossKind("mse"),
            max_epochs=50,
            patience=1,
            min_delta=float("inf"),
            seed=0,
        )
        out = train(samples[:4], samples[4:], cfg)
        assert out.report.stopped_epoch == 2

    def test_validation_series_length_is_stopped_epoch(self):
        samples = tiny_dataset()
        cfg = TrainConfig(loss=LossKind("mse"), max_epochs=7, patience=3, seed=1)
        out = train(samples[:4], samples[4:], cfg)
        assert len(out.report.val_tdist) == out.report.stopped_epoch
        assert len(out.report.train_loss) == out.report.stopped_epoch

    def test_snapshot_never_worse_than_last_epoch(self):
        samples = tiny_dataset(corruption=CorruptionSpec(boundary_flip_rate=0.3))
        for loss in ("tdist", "mse"):
            cfg = TrainConfig(loss=LossKind(loss), max_epochs=30, patience=4, seed=5)
            out = train(samples[:4], samples[4:], cfg)
            assert out.report.best_val <= out.report.val_stop[-1] + cfg.min_delta

    def test_empty_split_rejected(self):
        samples = tiny_dataset()
        cfg = TrainConfig(max_epochs=2)
        with pytest.raises(ValueError):
            train([], samples, cfg)
        with pytest.raises(ValueError):
            train(samples, [], cfg)

    def test_tdist_parameters_move(self):
        samples = tiny_dataset(corruption=CorruptionSpec(boundary_flip_rate=0.25))
        cfg = TrainConfig(loss=LossKind("tdist"), max_epochs=25, patience=25, seed=3)
        out = train(samples[:4], samples[4:], cfg)
        sigma = out.report.final_sigma2
        assert out.report.final_r != pytest.approx(1.0, abs=1e-6)
        assert sigma["min"] <= sigma["mean"] <= sigma["max"]

    def test_config_validation(self):
        with pytest.raises(ValueError):
            TrainConfig(lr_theta=0.0)
        with pytest.raises(ValueError):
            TrainConfig(scale_scope="columns")
        with pytest.raises(ValueError):
            TrainConfig(stop_criterion="dice")

    def test_effective_r_grows_on_clean_labels(self):
        # heavier data fidelity pushes the tail weight toward Gaussian; a
        # trend statistic over seeds, reported rather than hard-asserted
        # per seed
        finals = []
        for seed in range(4):
            samples = tiny_dataset(n=5, seed=seed + 50)
            cfg = TrainConfig(loss=LossKind("tdist"), max_epochs=25, patience=25, seed=seed)
            out = train(samples[:4], samples[4:], cfg)
            finals.append(out.report.final_r)
        grew = sum(r > 1.0 for r in finals)
        print(f"final r over seeds: {[round(r, 4) for r in finals]} ({grew}/4 grew)")
        assert float(np.mean(finals)) > 1.0

    @pytest.mark.slow
    def test_clean_data_convergence_sanity(self):
        # single-blob 32^3 volumes with uncorrupted labels: trained Dice
        # against ground truth reaches 0.95 for both gradient regimes
        spec = ShapeSpec(dims=Dims(32, 32, 32), n_lobes=1, lobe_sigma_range=(4.0, 7.0), threshold=0.4)
        samples = gen_dataset(11, 8, spec, CorruptionSpec.none())
        fc = FeatureConfig()
        for loss in ("tdist", "mse"):
            cfg = TrainConfig(loss=LossKind(loss), max_epochs=250, patience=40, seed=1)
            out = train(samples[:6], samples[6:], cfg)
            dices = []
            for s in samples[:6]:
                mu = forward(out.params, extract_features(s.intensity, fc))
                pred = binarize(ProbabilityMask(s.intensity.dims, s.intensity.spacing, mu), 0.5)
                dices.append(dice(pred, s.gt))
            assert float(np.mean(dices)) >= 0.95, (loss, dices)


class TestFieldEstimate:
    def test_single_clean_label_converges(self):
        gt = gen_dataset(9, 1, SMALL, CorruptionSpec.none())[0].gt
        for loss in ("tdist", "mse", "mae"):
            proba = field_estimate([gt], LossKind(loss), steps=500, lr=0.05)
            assert dice(binarize(proba, 0.5), gt) >= 0.99, loss

    def test_complement_pair_mse_stays_half(self):
        gt = gen_dataset(9, 1, SMALL, CorruptionSpec.none())[0].gt
        complement = BinaryMask(gt.dims, gt.spacing, (1 - gt.data).astype(np.uint8))
        proba = field_estimate([gt, complement], LossKind("mse"), steps=200, lr=0.05)
        assert np.all(proba.data == 0.5)

    def test_deterministic(self):
        samples = tiny_dataset(n=3, corruption=CorruptionSpec(boundary_flip_rate=0.3))
        labels = [s.weak for s in samples]
        a = field_estimate(labels, LossKind("tdist"), steps=60)
        b = field_estimate(labels, LossKind("tdist"), steps=60)
        assert np.array_equal(a.data, b.data)

    def test_requires_labels(self):
        with pytest.raises(ValueError):
            field_estimate([], LossKind("mse"))

    def test_mismatched_dims_rejected(self):
        a = np.zeros((3, 3, 3)); a[1, 1, 1] = 1
        b = np.zeros((4, 4, 4)); b[1, 1, 1] = 1
        with pytest.raises(ValueError):
            field_estimate([a, b], LossKind("mse"))

    def test_tdist_scale_scopes(self):
        samples = tiny_dataset(n=2, corruption=CorruptionSpec(boundary_flip_rate=0.3))
        labels = [s.weak for s in samples]
        for scope in ("scalar", "voxel"):
            proba = field_estimate(labels, LossKind("tdist"), steps=40, scale_scope=scope)
            assert proba.data.shape == labels[0].data.shape


def test_config_echo_defaults():
    echo = TrainConfig().echo()
    assert echo["lr_theta"] == 1e-3
    assert echo["lr_r"] == 1e-4
    assert echo["lr_sigma"] == 1e-4
    assert echo["max_epochs"] == 600
    assert echo["r_init"] == 1.0
    assert echo["sigma2_init"] == 1.0
    assert echo["safeguard"] == SAFEGUARD == 1e-8
