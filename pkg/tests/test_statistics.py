import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from vardyn.model import ModelParams
from vardyn.statistics import (
    autocorr_check,
    distance_correlation,
    kl_modes,
    model_modes,
    moments,
    risk_premium_stats,
)

DT = 1.0 / 252.0


class TestMoments:
    def test_gaussian_null(self):
        rng = np.random.default_rng(0)
        x = rng.standard_normal(1_000_000) * np.sqrt(DT)
        rep = moments(x)
        # 3 standard errors of skew/kurtosis estimators at this n
        assert abs(rep.skew) < 3 * np.sqrt(6 / x.size)
        assert abs(rep.excess_kurtosis) < 3 * np.sqrt(24 / x.size)
        assert rep.vol == pytest.approx(1.0, rel=5e-3)

    def test_constant_series_flagged(self):
        rep = moments(np.full(300, 0.01))
        assert rep.degenerate
        assert rep.vol == 0.0
        assert rep.skew is None

    def test_student_t_tail_index(self):
        rng = np.random.default_rng(1)
        x = rng.standard_t(df=4, size=400_000)
        rep = moments(x, dt=1.0)
        assert rep.tail_upper == pytest.approx(4.0, abs=1.2)
        assert rep.tail_lower == pytest.approx(4.0, abs=1.2)

    def test_too_short(self):
        with pytest.raises(ValueError):
            moments(np.ones(10))


class TestRiskPremium:
    def test_reference_magnitudes(self):
        out = risk_premium_stats(sigma_z=0.8, kappa_z=1.59)
        assert out["premium"] == pytest.approx(0.36, abs=1e-12)
        assert out["premium_vol"] == pytest.approx(np.sqrt(3.59) * 0.64, rel=1e-12)
        assert out["premium_vol"] == pytest.approx(1.21, abs=0.01)

    def test_risk_neutral_world(self):
        out = risk_premium_stats(sigma_z=1.0, kappa_z=0.0)
        assert out["premium"] == 0.0
        assert out["premium_vol"] == pytest.approx(np.sqrt(2.0))

    def test_synthetic_recovery(self):
        rng = np.random.default_rng(2)
        sigma_z = 0.85
        dz = sigma_z * np.sqrt(DT) * rng.standard_normal(100_000)
        sig_hat = dz.std() / np.sqrt(DT)
        out = risk_premium_stats(sigma_z=sig_hat, kappa_z=0.0)
        assert out["premium"] == pytest.approx(1 - sigma_z**2, abs=0.01)


def simulate_curve_moves(params, grid, days, noise=0.0, seed=0, linear=True):
    """Daily relative curve moves on a tenor grid from the factor model."""
    rng = np.random.default_rng(seed)
    w = np.exp(-np.multiply.outer(grid, params.k))       # (grid, n)
    dw = rng.standard_normal((days, params.n)) @ params.tri.T * np.sqrt(DT)
    moves = dw @ (params.theta[None, :] * w).T
    if noise:
        moves = moves + noise * rng.standard_normal(moves.shape)
    return moves


class TestModes:
    grid = np.arange(1, 27) / 52.0  # weekly tenors to six months

    def test_two_factor_noise_free_rank(self):
        p = ModelParams.reference_calibration()
        moves = simulate_curve_moves(p, self.grid, days=1500, seed=3)
        dec = kl_modes(moves, self.grid)
        assert dec.shares[:2].sum() >= 0.999

    def test_noisy_modes_match_model(self):
        p = ModelParams.reference_calibration()
        moves = simulate_curve_moves(p, self.grid, days=1500, noise=0.004, seed=4)
        dec = kl_modes(moves, self.grid)
        ref = model_modes(p, self.grid)
        assert dec.shares[:2].sum() >= 0.99
        for i in range(2):
            assert abs(dec.modes[:, i] @ ref.modes[:, i]) > 0.99

    def test_single_factor_shape(self):
        p = ModelParams(k=np.array([3.0]), theta=np.array([1.0]), rho=np.eye(1))
        moves = simulate_curve_moves(p, self.grid, days=800, seed=5)
        dec = kl_modes(moves, self.grid)
        assert dec.shares[0] >= 0.9999
        kernel = np.exp(-3.0 * self.grid)
        kernel = kernel / np.linalg.norm(kernel)
        assert abs(dec.modes[:, 0] @ kernel) > 0.9999

    def test_model_modes_structure(self):
        p = ModelParams.reference_calibration()
        dec = model_modes(p, self.grid)
        assert dec.shares.sum() == pytest.approx(1.0, abs=1e-12)
        gram = dec.modes.T @ dec.modes
        np.testing.assert_allclose(gram, np.eye(gram.shape[0]), atol=1e-10)
        # first mode carries roughly 95% on the six-month grid
        assert 0.90 < dec.shares[0] < 0.985

    def test_separated_kernels_when_uncorrelated(self):
        p = ModelParams(k=np.array([50.0, 0.1]), theta=np.array([1.0, 1.0]),
                        rho=0.0)
        dec = model_modes(p, self.grid)
        k1 = np.exp(-50.0 * self.grid)
        k2 = np.exp(-0.1 * self.grid)
        k1, k2 = k1 / np.linalg.norm(k1), k2 / np.linalg.norm(k2)
        # with well-separated decays the modes align with the kernels
        align = sorted([abs(dec.modes[:, 0] @ k2), abs(dec.modes[:, 0] @ k1)])
        assert align[-1] > 0.99

    def test_kl_shares_sum_to_one(self):
        p = ModelParams.reference_calibration()
        moves = simulate_curve_moves(p, self.grid, days=300, noise=0.002, seed=6)
        dec = kl_modes(moves, self.grid)
        assert dec.shares.sum() == pytest.approx(1.0, abs=1e-12)
        gram = dec.modes.T @ dec.modes
        np.testing.assert_allclose(gram, np.eye(gram.shape[0]), atol=1e-10)


class TestDistanceCorrelation:
    def test_identity(self):
        x = np.random.default_rng(7).standard_normal(500)
        assert distance_correlation(x, x) == pytest.approx(1.0, abs=1e-12)

    def test_independent_null(self):
        rng = np.random.default_rng(8)
        x, y = rng.standard_normal(2000), rng.standard_normal(2000)
        assert distance_correlation(x, y) < 0.1

    def test_quadratic_dependence_detected(self):
        rng = np.random.default_rng(9)
        x = rng.standard_normal(600)
        y = x**2
        val = distance_correlation(x, y)
        assert val > 0.3
        assert abs(np.corrcoef(x, y)[0, 1]) < 0.15  # Pearson is blind here
        # O(n^2) direct-definition oracle
        n = x.size
        ax = np.abs(x[:, None] - x[None, :])
        ay = np.abs(y[:, None] - y[None, :])
        axc = ax - ax.mean(0) - ax.mean(1)[:, None] + ax.mean()
        ayc = ay - ay.mean(0) - ay.mean(1)[:, None] + ay.mean()
        dcov2 = (axc * ayc).sum() / n**2
        dcor = np.sqrt(dcov2 / np.sqrt((axc**2).sum() / n**2 * (ayc**2).sum() / n**2))
        assert val == pytest.approx(dcor, rel=1e-10)

    def test_constant_input_warns(self):
        with pytest.warns(UserWarning):
            assert distance_correlation(np.ones(100), np.arange(100.0)) == 0.0

    @given(st.floats(min_value=0.1, max_value=10.0),
           st.floats(min_value=-5.0, max_value=5.0))
    @settings(max_examples=25, deadline=None)
    def test_affine_invariance(self, scale, shift):
        rng = np.random.default_rng(11)
        x = rng.standard_normal(200)
        y = rng.standard_normal(200) + 0.5 * x
        base = distance_correlation(x, y)
        assert distance_correlation(scale * x + shift, y) == pytest.approx(base,
                                                                           rel=1e-9)


class TestAutocorr:
    def test_iid_within_bands(self):
        rng = np.random.default_rng(12)
        x = rng.standard_normal(5000)
        out = autocorr_check(x, lags=range(1, 21))
        inside = sum(abs(v) <= out["band"] for v in out["acf"].values())
        assert inside >= 17  # ~95% coverage

    def test_ar1_acf(self):
        rng = np.random.default_rng(13)
        n, phi = 200_000, 0.5
        x = np.empty(n)
        x[0] = 0.0
        eps = rng.standard_normal(n)
        for t in range(1, n):
            x[t] = phi * x[t - 1] + eps[t]
        out = autocorr_check(x, lags=[1, 2])
        assert out["acf"][1] == pytest.approx(0.5, abs=0.01)
        assert out["acf"][2] == pytest.approx(0.25, abs=0.01)

    def test_abs_factor_moves_cluster_under_stochastic_scale(self):
        # |dW| picks up autocorrelation once the vol-of-vol scale wanders
        from vardyn.curves import VarianceCurve
        from vardyn.montecarlo import LambdaDynamics, SimConfig, simulate
        p = ModelParams.reference_calibration()
        cfg = SimConfig(paths=2, horizon=8.0, seed=14, record="full",
                        antithetic=False)
        # a persistent scale (half-life ~6 weeks) makes the effect stand
        # clear of the white-noise band at this sample size
        dyn = LambdaDynamics(k_lambda=4.0, sigma_lambda=1.52, lam_inf=1.26,
                             lam0=1.26)
        curve = VarianceCurve.flat(0.04, max_tenor=10.0)
        res = simulate(curve, p, cfg, volofvol=dyn)
        series = np.abs(res.dw[0, :, 0])
        out = autocorr_check(series, lags=[1, 2, 3])
        assert out["acf"][1] > out["band"]
        assert np.mean(list(out["acf"].values())) > out["band"]
