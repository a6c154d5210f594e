import math

import numpy as np
import pytest
from scipy.integrate import quad

from tloss_lab.special import softplus_inv
from tloss_lab.tdist import (
    SAFEGUARD,
    StudentTParams,
    TLossMode,
    effective_params,
    t_log_pdf,
    t_loss,
    t_loss_grad,
)

LN_PI = math.log(math.pi)


def params_for(r: float, sigma2, shape=None):
    rho = softplus_inv(r - SAFEGUARD)
    if shape is None:
        scale = softplus_inv(float(sigma2) - SAFEGUARD)
    else:
        scale = softplus_inv(np.full(shape, float(sigma2)) - SAFEGUARD)
    return StudentTParams(rho_raw=rho, scale_raw=scale)


class TestEffectiveParams:
    def test_paper_inits(self):
        p = StudentTParams.init_default()
        r, sigma2 = effective_params(p)
        assert r == pytest.approx(1.0, abs=1e-12)
        assert sigma2 == pytest.approx(1.0, abs=1e-12)

    def test_field_init(self):
        p = StudentTParams.init_default(shape=(2, 2, 2))
        _, sigma2 = effective_params(p)
        assert sigma2.shape == (2, 2, 2)
        assert np.allclose(sigma2, 1.0, atol=1e-12)

    def test_softplus_floor(self):
        p = StudentTParams(rho_raw=-1000.0, scale_raw=0.0)
        r, _ = effective_params(p)
        assert r == pytest.approx(1e-8, abs=1e-20)


class TestLogPdf:
    def test_cauchy_peak(self):
        assert t_log_pdf([0.0], [0.0], [1.0], 1.0) == pytest.approx(-LN_PI, abs=1e-10)

    def test_cauchy_delta_one(self):
        expected = -(LN_PI + math.log(2.0))
        assert t_log_pdf([1.0], [0.0], [1.0], 1.0) == pytest.approx(expected, abs=1e-10)

    @pytest.mark.parametrize("r", [1.0, 4.0, 30.0])
    def test_unit_mass_adaptive_quadrature(self, r):
        total, err = quad(
            lambda x: math.exp(t_log_pdf([x], [0.0], [1.0], r)), -np.inf, np.inf
        )
        assert err < 1e-8
        assert total == pytest.approx(1.0, abs=1e-6)

    @pytest.mark.parametrize("r", [4.0, 30.0])
    def test_unit_mass_on_finite_interval_for_light_tails(self, r):
        # the r=1 (Cauchy) tail holds ~6.4e-5 outside [-1e4, 1e4], so the
        # finite-interval form of this check is only valid for larger r
        total, _ = quad(
            lambda x: math.exp(t_log_pdf([x], [0.0], [1.0], r)),
            -1e4,
            1e4,
            points=[-20.0, 0.0, 20.0],
            limit=200,
        )
        assert total == pytest.approx(1.0, abs=1e-6)

    def test_matches_negated_multivariate_loss(self):
        rng = np.random.default_rng(0)
        k = rng.uniform(size=5)
        mu = rng.uniform(size=5)
        sigma2 = rng.uniform(0.5, 2.0, size=5)
        r = 3.7
        p = StudentTParams(
            softplus_inv(r - SAFEGUARD),
            softplus_inv(sigma2.reshape(1, 1, 5) - SAFEGUARD),
        )
        log_pdf = t_log_pdf(k, mu, sigma2, r)
        loss = t_loss(k.reshape(1, 1, 5), mu.reshape(1, 1, 5), p, TLossMode.MULTIVARIATE)
        assert log_pdf == pytest.approx(-loss, rel=1e-12)

    def test_domain_errors(self):
        with pytest.raises(ValueError):
            t_log_pdf([0.0], [0.0], [1.0], 0.0)
        with pytest.raises(ValueError):
            t_log_pdf([0.0], [0.0], [-1.0], 1.0)
        with pytest.raises(ValueError):
            t_log_pdf([0.0, 0.0], [0.0], [1.0], 1.0)


class TestLoss:
    def test_pervoxel_zero_residual(self):
        p = StudentTParams.init_default()
        k = np.ones((2, 3, 2))
        assert t_loss(k, k.copy(), p) == pytest.approx(LN_PI, abs=1e-10)

    def test_multivariate_hand_value(self):
        # two dims, r=2, unit variances, residual (1, 1): ln(2 pi) + 2 ln 2
        p = params_for(2.0, 1.0, shape=(1, 1, 2))
        k = np.ones((1, 1, 2))
        mu = np.zeros((1, 1, 2))
        expected = math.log(2 * math.pi) + 2 * math.log(2.0)
        assert t_loss(k, mu, p, TLossMode.MULTIVARIATE) == pytest.approx(expected, abs=1e-10)

    def test_pervoxel_unit_residual(self):
        p = StudentTParams.init_default()
        k = np.ones((2, 2, 2))
        mu = np.zeros((2, 2, 2))
        assert t_loss(k, mu, p) == pytest.approx(LN_PI + math.log(2.0), abs=1e-10)

    def test_shape_mismatch(self):
        p = StudentTParams.init_default()
        with pytest.raises(ValueError):
            t_loss(np.ones((2, 2, 2)), np.ones((2, 2, 3)), p)

    def test_mode_consistency_single_voxel(self):
        p = params_for(3.0, 0.7, shape=(1, 1, 1))
        k = np.ones((1, 1, 1))
        mu = np.full((1, 1, 1), 0.25)
        per = t_loss(k, mu, p, TLossMode.PER_VOXEL)
        multi = t_loss(k, mu, p, TLossMode.MULTIVARIATE)
        assert per == pytest.approx(multi, rel=1e-12)

    def test_symmetry_in_residual_sign(self):
        p = params_for(2.5, 0.4)
        mu = np.full((2, 2, 2), 0.3)
        plus = t_loss(mu + 0.2, mu, p)
        minus = t_loss(mu - 0.2, mu, p)
        assert plus == pytest.approx(minus, rel=1e-14)

    def test_heavier_tail_ordering(self):
        # excess loss over the delta=0 baseline is smaller at r=1 than r=100
        # for residuals beyond 2 sigma
        for delta in (2.5, 4.0, 8.0):
            excesses = []
            for r in (1.0, 100.0):
                p = params_for(r, 1.0)
                base = t_loss(np.zeros((1, 1, 1)), np.zeros((1, 1, 1)), p)
                at = t_loss(np.full((1, 1, 1), delta), np.zeros((1, 1, 1)), p)
                excesses.append(at - base)
            assert excesses[0] < excesses[1]

    def test_gaussian_limit(self):
        p = params_for(1e6, 1.0)
        for delta in np.linspace(-5.0, 5.0, 21):
            ours = t_loss(np.full((1, 1, 1), delta), np.zeros((1, 1, 1)), p)
            gaussian = 0.5 * math.log(2 * math.pi) + 0.5 * delta**2
            assert abs(ours - gaussian) <= 1e-3


class TestGrad:
    def test_cauchy_closed_form(self):
        p = StudentTParams.init_default(shape=(1, 1, 1))
        _, g = t_loss_grad(np.ones((1, 1, 1)), np.zeros((1, 1, 1)), p)
        assert g.d_mu[0, 0, 0] == pytest.approx(-1.0, abs=1e-10)

    def test_zero_residual_stationary_in_mu(self):
        p = StudentTParams.init_default(shape=(2, 2, 2))
        k = np.ones((2, 2, 2))
        _, g = t_loss_grad(k, k.copy(), p)
        assert np.all(g.d_mu == 0.0)

    def test_bounded_influence(self):
        # max |dL/dmu| = (r+1)/(2 sigma sqrt(r)) attained at |delta| = sigma sqrt(r)
        for r, sigma2 in ((1.0, 1.0), (4.0, 0.25), (30.0, 2.0)):
            sigma = math.sqrt(sigma2)
            p = params_for(r, sigma2, shape=(1, 1, 1))
            bound = (r + 1.0) / (2.0 * sigma * math.sqrt(r))
            deltas = np.concatenate(
                [np.linspace(-6, 6, 301) * sigma * math.sqrt(r), [sigma * math.sqrt(r)]]
            )
            grads = []
            for delta in deltas:
                _, g = t_loss_grad(np.full((1, 1, 1), delta), np.zeros((1, 1, 1)), p)
                grads.append(abs(g.d_mu[0, 0, 0]))
                assert grads[-1] <= bound * (1 + 1e-12)
            assert max(grads) == pytest.approx(bound, rel=1e-12)
            # vanishing influence for huge residuals
            _, g = t_loss_grad(np.full((1, 1, 1), 1e6 * sigma), np.zeros((1, 1, 1)), p)
            assert abs(g.d_mu[0, 0, 0]) < 1e-3 * bound

    def test_matches_finite_differences(self):
        from tloss_lab.gradcheck import run_gradcheck

        report = run_gradcheck(trials=100, seed=11)
        assert report.max_errors["tdist"] <= 1e-6

    def test_scalar_scope_accumulates(self):
        k = np.array([[[1.0, 0.0, 1.0]]])
        mu = np.array([[[0.2, 0.4, 0.9]]])
        p_scalar = params_for(2.0, 0.8)
        p_field = params_for(2.0, 0.8, shape=k.shape)
        _, gs = t_loss_grad(k, mu, p_scalar)
        _, gf = t_loss_grad(k, mu, p_field)
        assert gs.d_scale_raw == pytest.approx(float(np.sum(gf.d_scale_raw)), rel=1e-12)
