import numpy as np
import pytest

from vardyn.curves import VarianceCurve, forward_var_strike
from vardyn.kernels import g, h, l
from vardyn.model import ModelParams
from vardyn.spotvol import NonlinearFit
from vardyn.analytics import (
    return_skewness,
    return_skewness_flat,
    skew_stickiness_ratio,
    smile_impact,
    smile_impact_flat_closed_form,
    varswap_total_variance,
)

FLAT = VarianceCurve.flat(0.04)
DT = 1.0 / 252.0


def linear_fit(b=(0.44, 0.66), zeta=0.0, kappa=0.0):
    b = np.asarray(b, float)
    return NonlinearFit(a=np.zeros(2), b=b, gamma=np.sqrt(1 - b**2),
                        u_corr=np.eye(2), zeta=zeta, kappa=kappa)


def ref():
    return ModelParams.reference_calibration()


class TestReturnSkewness:
    def test_zero_vol_of_vol_scaling(self):
        p = ModelParams(k=np.array([10.25, 1.05]), theta=np.zeros(2), rho=0.51)
        fit = linear_fit()
        zeta = -0.6
        for t, n in [(1 / 12, 21), (0.25, 63)]:
            assert return_skewness_flat(p, fit, t, zeta, n) == pytest.approx(
                zeta / np.sqrt(n), rel=1e-12)

    def test_single_factor_reduction(self):
        p = ModelParams(k=np.array([2.0]), theta=np.array([1.0]), rho=np.eye(1))
        fit = NonlinearFit(a=np.zeros(1), b=np.array([0.5]), gamma=np.array([0.8]),
                           u_corr=np.eye(1), zeta=0.0, kappa=0.0)
        t = 0.5
        want = -3 * np.sqrt(t) * 1.0 * 0.5 * h(2.0 * t)
        assert return_skewness_flat(p, fit, t, 0.0, 126) == pytest.approx(want, rel=1e-12)

    def test_grid_version_matches_flat_form(self):
        fit = linear_fit()
        p = ref()
        for t in (1 / 12, 0.25, 0.5):
            grid = return_skewness(FLAT, p, fit, t, zeta=-0.5)
            flat = return_skewness_flat(p, fit, t, -0.5, round(252 * t))
            # continuum h vs daily grid differ at O(k dt)
            assert grid == pytest.approx(flat, rel=0.06)

    def test_mc_skewness_perturbative(self):
        from vardyn.montecarlo import SimConfig, mc_realized_skewness, simulate
        lam = 0.25
        p = ref().with_theta_scale(lam)
        p = ModelParams(k=p.k, theta=p.theta, rho=p.rho, mu=np.zeros(2))
        fit = linear_fit()
        t = 0.25
        cfg = SimConfig(paths=120_000, horizon=t, seed=41, record="full")
        res = simulate(FLAT, p, cfg, fit=fit)
        mc, se = mc_realized_skewness(res, t)
        pred = return_skewness(FLAT, ref(), fit, t, zeta=0.0) * lam
        assert abs(mc - pred) < 3 * se


class TestSmileImpact:
    def test_zero_scale_zero_impact(self):
        out = smile_impact(FLAT, ref(), linear_fit(), 0.25, lambda_scale=0.0)
        assert out.atm_spread == 0.0
        assert out.skew == 0.0

    def test_linear_flat_closed_forms(self):
        fit = linear_fit()
        p = ref()
        t = 0.25
        sigma_vs = forward_var_strike(FLAT, 0.0, t).value
        cf = smile_impact_flat_closed_form(p, fit, t, sigma_vs)
        hb = np.sum(p.theta * fit.b * h(p.k * t))
        assert cf.skew == pytest.approx(-hb / 2, rel=1e-12)
        assert cf.atm_spread == pytest.approx(-hb / 4 * t * sigma_vs**2, rel=1e-12)
        # spread = (T sigma_vs^2 / 2) * skew
        assert cf.atm_spread == pytest.approx(t * sigma_vs**2 / 2 * cf.skew, rel=1e-12)
        dbl = smile_impact(FLAT, p, fit, t)
        # daily-grid evaluation carries an O(dt) slope residual
        assert dbl.atm_spread == pytest.approx(t * sigma_vs**2 / 2 * dbl.skew, rel=2e-4)

    def test_linear_identity_with_skewness(self):
        # the two independent code paths agree to 1e-3 relative
        fit = linear_fit()
        p = ref()
        for t in (1 / 12, 0.25, 0.5):
            skew = smile_impact(FLAT, p, fit, t).skew
            ident = return_skewness(FLAT, p, fit, t, zeta=0.0) / (6 * np.sqrt(t))
            assert skew == pytest.approx(ident, rel=1e-3)

    def test_nonlinear_difference_formula(self):
        from vardyn.synthetic import default_nonlinear_truth
        fit = default_nonlinear_truth()
        p = ref()
        t = 0.25
        sigma_vs = forward_var_strike(FLAT, 0.0, t).value
        out = smile_impact(FLAT, p, fit, t)
        # Skew - zeta_T/(6 sqrt(T)) = sum theta_a a_a h(k_a T)/2 sigma sqrt(dt)
        want = np.sum(p.theta * fit.a * h(p.k * t)) / 2 * sigma_vs * np.sqrt(DT)
        got = out.skew - out.skew_linear
        assert got == pytest.approx(want, rel=0.06)   # grid h vs continuum h
        # spread difference carries the printed ((T sigma^2/4) - 1) factor
        want_spread = want * (t * sigma_vs**2 / 4 - 1.0)
        assert out.atm_spread_nonlinear == pytest.approx(want_spread, rel=0.06)

    def test_large_strike_offset_rejected(self):
        with pytest.raises(ValueError, match="first-order"):
            smile_impact(FLAT, ref(), linear_fit(), 0.25, dk_rel=0.5)

    def test_mc_implied_vols(self):
        from vardyn.montecarlo import SimConfig, mc_implied_vols, simulate
        lam = 0.25
        fit = linear_fit()
        base = ref()
        p = ModelParams(k=base.k, theta=base.theta * lam, rho=base.rho,
                        mu=np.zeros(2))
        t = 0.25
        cfg = SimConfig(paths=300_000, horizon=t, seed=42, record="full")
        res = simulate(FLAT, p, cfg, fit=fit)
        out = mc_implied_vols(res, t, [0.98, 1.0, 1.02])
        assert out["skipped"] == 0
        sigma_vs = forward_var_strike(FLAT, 0.0, t).value
        pred = smile_impact(FLAT, base, fit, t, dk_rel=0.02, lambda_scale=lam)
        mc_spread = out["vol"][1] - sigma_vs
        mc_skew = (out["vol"][2] - out["vol"][0]) / 0.04
        se_skew = np.hypot(out["se"][0], out["se"][2]) / 0.04
        assert abs(mc_spread - pred.atm_spread) < 3 * out["se"][1]
        assert abs(mc_skew - pred.skew) < 3 * se_skew


class TestSkewStickiness:
    fit = linear_fit()

    def test_short_maturity_limit(self):
        out = skew_stickiness_ratio(ref(), self.fit, 1e-7)
        assert out["ratio"] == pytest.approx(2.0, abs=1e-3)

    def test_long_maturity_limit(self):
        out = skew_stickiness_ratio(ref(), self.fit, 2000.0)
        assert out["ratio"] == pytest.approx(1.0, abs=1e-3)

    def test_single_factor_unit_value(self):
        p = ModelParams(k=np.array([1.0]), theta=np.array([1.0]), rho=np.eye(1))
        fit = NonlinearFit(a=np.zeros(1), b=np.array([0.5]), gamma=np.array([0.8]),
                           u_corr=np.eye(1), zeta=0.0, kappa=0.0)
        out = skew_stickiness_ratio(p, fit, 1.0)
        assert out["ratio"] == pytest.approx(g(1.0) / h(1.0), rel=1e-12)
        assert out["ratio"] == pytest.approx(1.718, abs=1e-3)

    def test_monotone_between_limits(self):
        p = ModelParams(k=np.array([2.0]), theta=np.array([1.0]), rho=np.eye(1))
        fit = NonlinearFit(a=np.zeros(1), b=np.array([0.5]), gamma=np.array([0.8]),
                           u_corr=np.eye(1), zeta=0.0, kappa=0.0)
        ts = np.logspace(-3, 2.5, 40)
        vals = [skew_stickiness_ratio(p, fit, t)["ratio"] for t in ts]
        assert all(a >= b - 1e-12 for a, b in zip(vals, vals[1:]))
        assert vals[0] <= 2.0 + 1e-9 and vals[-1] >= 1.0 - 1e-9

    def test_b_zero_undefined(self):
        fit = NonlinearFit(a=np.zeros(2), b=np.zeros(2), gamma=np.ones(2),
                           u_corr=np.eye(2), zeta=0.0, kappa=0.0)
        with pytest.raises(ZeroDivisionError):
            skew_stickiness_ratio(ref(), fit, 0.5)


class TestVarSwap:
    def test_pure_discretization(self):
        p = ModelParams(k=np.array([10.25, 1.05]), theta=np.zeros(2), rho=0.51)
        fit = NonlinearFit(a=np.zeros(2), b=np.zeros(2), gamma=np.ones(2),
                           u_corr=np.eye(2), zeta=0.0, kappa=0.0)
        for dt_swap in (1 / 12, 0.25, 1.0):
            n = round(252 * dt_swap)
            out = varswap_total_variance(p, fit, kappa=0.0, zeta=0.0,
                                         delta_t=dt_swap)
            assert out.total == pytest.approx(2.0 / (n * dt_swap), rel=1e-14)
            assert out.implied == out.shocks == 0.0

    def test_replica_magnitudes(self):
        from vardyn.synthetic import default_nonlinear_truth
        fit = default_nonlinear_truth()
        out = varswap_total_variance(ref(), fit, kappa=fit.kappa, zeta=fit.zeta,
                                     delta_t=0.25)
        assert np.all((out.rho_shocks > 0.10) & (out.rho_shocks < 0.40))
        assert 0.05 < out.shocks / out.total < 0.15

    def test_term_asymptotes(self):
        p = ref()
        fit = linear_fit()
        # small maturity: l -> 1/3 and h -> 1/2
        small = 1e-4
        out = varswap_total_variance(p, fit, kappa=0.0, zeta=-0.5, delta_t=small,
                                     n_returns=max(1, round(252 * small)))
        want_implied = p.omega.sum() / 3.0
        assert out.implied == pytest.approx(want_implied, rel=0.01)
        # large maturity: l -> 1/(ka kb dT^2), h -> 1/(ka dT)
        big = 1e3
        out = varswap_total_variance(p, fit, kappa=0.0, zeta=-0.5, delta_t=big)
        want = np.einsum("ab,ab->", p.omega,
                         1.0 / np.outer(p.k, p.k)) / big**2
        assert out.implied == pytest.approx(want, rel=0.01)
        hs = h(p.k * big)
        np.testing.assert_allclose(hs, 1.0 / (p.k * big), rtol=0.01)

    def test_mc_mark_to_market(self):
        from vardyn.montecarlo import SimConfig, mc_varswap_variance, simulate
        # quarter vol-of-vol scale: the first-order decomposition's
        # frozen-level assumption stays inside the MC noise there
        from vardyn.synthetic import default_nonlinear_truth
        fit = default_nonlinear_truth()
        base = ref()
        lam = 0.25
        p = ModelParams(k=base.k, theta=base.theta * lam, rho=base.rho,
                        mu=np.zeros(2))
        for t2, paths, seed in [(1 / 12, 4000, 51), (0.25, 4000, 52),
                                (0.5, 4000, 53)]:
            cfg = SimConfig(paths=paths, horizon=t2, seed=seed, record="full",
                            innovation="skewed", zeta=fit.zeta, kappa=fit.kappa)
            res = simulate(FLAT, p, cfg, fit=fit)
            mc, se = mc_varswap_variance(res, t2)
            pred = varswap_total_variance(p, fit, kappa=fit.kappa,
                                          zeta=fit.zeta, delta_t=t2).total
            assert abs(mc - pred) < 3 * se
