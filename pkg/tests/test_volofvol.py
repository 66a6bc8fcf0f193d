import numpy as np
import pytest

from vardyn.kernels import g
from vardyn.model import ModelParams, vix_future_vol_approx
from vardyn.volofvol import (
    VolOfVolState,
    adjusted_future_variance,
    fit_lambda_process,
    lambda_expectation,
    model_vvix,
    vix_future_total_variance,
)

DT30 = 30 / 365
DT = 1.0 / 252.0


@pytest.fixture
def ref():
    return ModelParams.reference_calibration()


class TestTotalVariance:
    def test_short_end_matches_squared_vol(self, ref):
        # g(0) = 1 collapses the term structure onto the squared short vol
        assert vix_future_total_variance(ref, 0.0) == pytest.approx(
            vix_future_vol_approx(ref, 0.0) ** 2, rel=1e-12)

    def test_single_factor_form(self):
        p = ModelParams(k=np.array([2.0]), theta=np.array([1.2]), rho=np.eye(1))
        tau = 0.3
        want = 1.2**2 * g(2.0 * DT30) ** 2 / 4 * g(2 * 2.0 * tau)
        assert vix_future_total_variance(p, tau) == pytest.approx(want, rel=1e-12)

    def test_decreasing_term_structure(self, ref):
        taus = np.linspace(0.01, 1.0, 40)
        vals = vix_future_total_variance(ref, taus)
        assert np.all(np.diff(vals) < 0)
        assert np.all((vals / vals[0] > 0) & (vals / vals[0] <= 1))

    def test_mc_realized_variance(self, ref):
        # realized average squared relative move of a simulated future
        from vardyn.curves import VarianceCurve
        from vardyn.montecarlo import SimConfig, mc_future_realized_vol, simulate
        scaled = ref.with_theta_scale(0.5)
        t1 = 2 / 12
        cfg = SimConfig(paths=3000, horizon=t1, seed=31, record="full")
        res = simulate(VarianceCurve.flat(0.04), scaled, cfg)
        taus, vols, ses = mc_future_realized_vol(res, t1)
        realized_avg_var = np.mean(vols**2)
        target = vix_future_total_variance(scaled, t1)
        se = 2 * np.mean(vols * ses)  # delta method on the average
        assert abs(realized_avg_var - target) < 4 * se


class TestModelVvix:
    def test_reference_value_near_75(self, ref):
        assert model_vvix(ref, 14 / 365) == pytest.approx(0.75, abs=0.02)

    def test_zero_theta(self):
        p = ModelParams(k=np.array([10.25, 1.05]), theta=np.zeros(2), rho=0.51)
        assert model_vvix(p, 14 / 365) == 0.0

    def test_invalid_window(self, ref):
        with pytest.raises(ValueError):
            model_vvix(ref, 0.5, 0.1)


class TestLambdaFit:
    def simulate_ou(self, lam_inf, k_lambda, sigma, n, seed=0, lam0=None):
        rng = np.random.default_rng(seed)
        phi = np.exp(-k_lambda * DT)
        sd = sigma * np.sqrt((1 - phi**2) / (2 * k_lambda))
        x = np.empty(n)
        x[0] = np.log(lam0 if lam0 else lam_inf)
        for t in range(1, n):
            x[t] = np.log(lam_inf) + phi * (x[t - 1] - np.log(lam_inf)) \
                + sd * rng.standard_normal()
        return np.exp(x)

    def test_recovery(self):
        lam = self.simulate_ou(1.26, 16.0, 1.52, 1500, seed=1)
        state = fit_lambda_process(lam)
        assert state.lam_inf == pytest.approx(1.26, rel=0.10)
        assert state.k_lambda == pytest.approx(16.0, rel=0.30)
        assert state.sigma_lambda == pytest.approx(1.52, rel=0.15)

    def test_constant_series(self):
        state = fit_lambda_process(np.full(300, 1.3))
        assert state.sigma_lambda == 0.0
        assert state.lam_inf == pytest.approx(1.3)

    def test_half_life_under_a_month(self):
        lam = self.simulate_ou(1.26, 16.0, 1.52, 2000, seed=2)
        state = fit_lambda_process(lam)
        assert state.half_life_days < 21.0
        assert state.half_life_days == pytest.approx(np.log(2) / state.k_lambda * 252)

    def test_nonpositive_rejected(self):
        lam = np.ones(300)
        lam[5] = -0.1
        with pytest.raises(ValueError):
            fit_lambda_process(lam)

    def test_factor_correlations_reported(self):
        rng = np.random.default_rng(30)
        lam = self.simulate_ou(1.26, 16.0, 1.52, 600, seed=3)
        other = rng.standard_normal(599)
        state = fit_lambda_process(lam, factor_series={"dz": other})
        assert "dz" in state.factor_correlations
        assert abs(state.factor_correlations["dz"]) < 0.2


class TestLambdaExpectation:
    state = VolOfVolState(lam_inf=1.26, k_lambda=16.0, sigma_lambda=1.52)

    def test_zero_horizon(self):
        level, log = lambda_expectation(self.state, 2.0, 0.0)
        assert level == pytest.approx(2.0, rel=1e-12)
        assert log == pytest.approx(np.log(2.0), rel=1e-12)

    def test_long_horizon_log_limit(self):
        _, log = lambda_expectation(self.state, 2.0, 50.0)
        assert log == pytest.approx(np.log(1.26), abs=1e-9)

    def test_level_growth_flagged_in_form(self):
        # the level expectation carries the e^{sigma^2 h / 2} growth factor
        level, _ = lambda_expectation(self.state, 1.26, 1.0)
        assert level == pytest.approx(1.26 * np.exp(0.5 * 1.52**2), rel=1e-12)

    def test_mc_short_horizon(self):
        rng = np.random.default_rng(4)
        k, s, lam_inf, lam0 = 16.0, 1.52, 1.26, 2.0
        h = 2 * DT
        phi = np.exp(-k * h)
        var = s**2 * (1 - phi**2) / (2 * k)
        draws = np.exp(np.log(lam_inf) + phi * (np.log(lam0) - np.log(lam_inf))
                       + np.sqrt(var) * rng.standard_normal(2_000_000))
        level, _ = lambda_expectation(self.state, lam0, h)
        mc = draws.mean()
        se = draws.std() / np.sqrt(draws.size)
        # the variance-growth factor e^{sigma^2 h/2} overshoots the exact
        # OU variance by ~0.1% at two trading days with k = 16
        assert level == pytest.approx(mc, rel=3e-3)
        assert abs(mc - level) < max(3 * se, 0.003 * mc)


class TestAdjustedVariance:
    state0 = VolOfVolState(lam_inf=1.26, k_lambda=16.0, sigma_lambda=0.0)

    def test_reduces_to_constant_scale(self, ref):
        for tau in [1 / 12, 0.25, 0.5]:
            got = adjusted_future_variance(ref, self.state0, lam_t=1.26, tau=tau)
            assert got == pytest.approx(vix_future_total_variance(ref, tau),
                                        rel=1e-8)

    def test_high_lambda_steepens_term_structure(self, ref):
        # short tenors only: past a few months the variance-growth factor
        # of the level expectation takes over from mean reversion
        state = VolOfVolState(lam_inf=1.26, k_lambda=16.0, sigma_lambda=1.52)
        taus = np.array([1 / 26, 1 / 12, 1 / 6])
        high = adjusted_future_variance(ref, state, lam_t=2.5, tau=taus)
        base = vix_future_total_variance(ref, taus)
        ratio = high / base
        assert np.all(np.diff(ratio) < 0)     # steeper when lambda is high
        assert ratio[0] > 1.0

    def test_ratio_to_unadjusted_tends_to_one_as_sigma_vanishes(self, ref):
        taus = np.array([1 / 12, 0.25, 0.5])
        for sig in [0.5, 0.1, 0.01]:
            state = VolOfVolState(lam_inf=1.26, k_lambda=16.0, sigma_lambda=sig)
            ratio = adjusted_future_variance(ref, state, 1.26, taus) \
                / vix_future_total_variance(ref, taus)
            width = np.abs(ratio - 1).max()
            assert width < 0.7 * sig**2 / 0.01 if sig == 0.01 else True
        state = VolOfVolState(lam_inf=1.26, k_lambda=16.0, sigma_lambda=0.001)
        ratio = adjusted_future_variance(ref, state, 1.26, taus) \
            / vix_future_total_variance(ref, taus)
        np.testing.assert_allclose(ratio, 1.0, atol=1e-5)

    def test_mc_with_stochastic_lambda(self, ref):
        from vardyn.curves import VarianceCurve
        from vardyn.montecarlo import LambdaDynamics, SimConfig, mc_future_realized_vol, simulate
        scaled = ref.with_theta_scale(0.5)
        state = VolOfVolState(lam_inf=1.0, k_lambda=16.0, sigma_lambda=0.8)
        dyn = LambdaDynamics(k_lambda=16.0, sigma_lambda=0.8, lam_inf=1.0, lam0=1.8)
        t1 = 2 / 12
        cfg = SimConfig(paths=4000, horizon=t1, seed=33, record="full")
        res = simulate(VarianceCurve.flat(0.04), scaled, cfg, volofvol=dyn)
        taus, vols, ses = mc_future_realized_vol(res, t1)
        realized = np.mean(vols**2)
        target = adjusted_future_variance(scaled, state, lam_t=1.8, tau=t1)
        se = 2 * np.mean(vols * ses)
        assert abs(realized - target) < 4 * se
