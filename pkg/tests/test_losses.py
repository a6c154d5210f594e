import math

import numpy as np
import pytest

from tloss_lab.losses import CLAMP_EPS, LossKind, loss_value_grad, parse_loss


class TestValues:
    def test_mse_single_voxel(self):
        v, _ = loss_value_grad(LossKind("mse"), np.ones((1, 1, 1)), np.full((1, 1, 1), 0.5))
        assert v == pytest.approx(0.25, abs=1e-15)

    def test_bce_half(self):
        v, _ = loss_value_grad(LossKind("bce"), np.ones((1, 1, 1)), np.full((1, 1, 1), 0.5))
        assert v == pytest.approx(math.log(2.0), abs=1e-12)

    def test_focal_hand_value(self):
        kind = LossKind("focal", alpha=0.25, gamma=2.0)
        v, _ = loss_value_grad(kind, np.ones((1, 1, 1)), np.full((1, 1, 1), 0.5))
        assert v == pytest.approx(0.25 * 0.25 * math.log(2.0), abs=1e-12)

    def test_mae(self):
        v, g = loss_value_grad(LossKind("mae"), np.ones((1, 1, 1)), np.full((1, 1, 1), 0.3))
        assert v == pytest.approx(0.7, abs=1e-15)
        assert g[0, 0, 0] == -1.0

    def test_ce_equals_bce(self):
        rng = np.random.default_rng(1)
        k = (rng.uniform(size=(3, 4, 2)) > 0.5).astype(np.float64)
        mu = rng.uniform(0.05, 0.95, size=(3, 4, 2))
        v_ce, g_ce = loss_value_grad(LossKind("ce"), k, mu)
        v_bce, g_bce = loss_value_grad(LossKind("bce"), k, mu)
        assert v_ce == pytest.approx(v_bce, rel=1e-14)
        assert np.allclose(g_ce, g_bce, rtol=1e-14)

    def test_mean_aggregation(self):
        k = np.array([[[1.0, 0.0]]])
        mu = np.array([[[0.5, 0.5]]])
        v, _ = loss_value_grad(LossKind("mse"), k, mu)
        assert v == pytest.approx(0.25, abs=1e-15)

    def test_tdist_kind_rejected(self):
        with pytest.raises(ValueError, match="tdist"):
            loss_value_grad(LossKind("tdist"), np.ones((1, 1, 1)), np.ones((1, 1, 1)))

    def test_unknown_kind(self):
        with pytest.raises(ValueError):
            LossKind("dice")


class TestProperties:
    KINDS = [
        LossKind("mse"),
        LossKind("mae"),
        LossKind("bce"),
        LossKind("ce"),
        LossKind("focal"),
    ]

    @pytest.mark.parametrize("kind", KINDS, ids=lambda k: k.name)
    def test_nonnegative_and_zero_at_target(self, kind):
        rng = np.random.default_rng(7)
        for _ in range(10):
            k = (rng.uniform(size=(2, 3, 2)) > 0.5).astype(np.float64)
            mu = rng.uniform(size=(2, 3, 2))
            v, _ = loss_value_grad(kind, k, mu)
            assert v >= 0.0
        k = (rng.uniform(size=(2, 3, 2)) > 0.5).astype(np.float64)
        v, _ = loss_value_grad(kind, k, k.copy())
        # log losses bottom out at the clamp epsilon
        assert v <= 20.0 * CLAMP_EPS

    @pytest.mark.parametrize("kind", KINDS, ids=lambda k: k.name)
    def test_gradient_matches_finite_differences(self, kind):
        rng = np.random.default_rng(13)
        h = 1e-5
        for _ in range(20):
            k = (rng.uniform(size=(2, 2, 2)) > 0.5).astype(np.float64)
            # away from the clamp boundary and the MAE kink
            mu = rng.uniform(0.01, 0.99, size=(2, 2, 2))
            _, g = loss_value_grad(kind, k, mu)
            for idx in np.ndindex(mu.shape):
                mu_p, mu_m = mu.copy(), mu.copy()
                mu_p[idx] += h
                mu_m[idx] -= h
                fd = (
                    loss_value_grad(kind, k, mu_p)[0] - loss_value_grad(kind, k, mu_m)[0]
                ) / (2 * h)
                assert abs(g[idx] - fd) / max(1.0, abs(g[idx])) <= 1e-6

    def test_mse_gradient_grows_while_tdist_bounded(self):
        from tloss_lab.special import softplus_inv
        from tloss_lab.tdist import SAFEGUARD, StudentTParams, t_loss_grad

        p = StudentTParams(
            rho_raw=softplus_inv(1.0 - SAFEGUARD), scale_raw=softplus_inv(1.0 - SAFEGUARD)
        )
        deltas = np.array([0.5, 2.0, 8.0, 32.0])
        mse_mags = []
        t_mags = []
        for d in deltas:
            k = np.full((1, 1, 1), d)
            mu = np.zeros((1, 1, 1))
            _, g_mse = loss_value_grad(LossKind("mse"), k, mu)
            _, g_t = t_loss_grad(k, mu, p)
            mse_mags.append(abs(g_mse[0, 0, 0]))
            t_mags.append(abs(g_t.d_mu[0, 0, 0]))
        assert all(b / a == pytest.approx(db / da, rel=1e-9)
                   for (a, b), (da, db) in zip(zip(mse_mags, mse_mags[1:]), zip(deltas, deltas[1:])))
        assert max(t_mags) <= 1.0 + 1e-12  # (r+1)/(2 sigma sqrt(r)) at r=1, sigma=1


def test_parse_loss_roundtrip():
    kind = parse_loss("Focal", alpha=0.4, gamma=1.5)
    assert kind.name == "focal"
    assert kind.alpha == 0.4
    with pytest.raises(ValueError):
        parse_loss("huber")
