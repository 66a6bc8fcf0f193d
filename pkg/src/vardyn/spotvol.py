"""Quadratic spot/vol coupling and its consequences.

Daily normalized vol-factor moves are modeled as

    wbar_a = f_a(zbar) + gamma_a * U_a,     f_a(z) = a_a (z^2 - 1) - b_a z

with zbar the normalized spot factor and U_a exogenous Gaussians. The
(a, b) coefficients follow from moments of the joint sample; gamma picks
up the variance the functional leaves unexplained. The same coefficients
drive the leverage-correlation and volatility-clustering curves and the
asymmetric-GARCH reduction of the model.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelParams

__all__ = [
    "TRADING_DT",
    "NonlinearFit",
    "GarchCoefficients",
    "ModelInconsistencyError",
    "fit_nonlinear",
    "sigma_v",
    "leverage_correlation",
    "volatility_clustering",
    "clustering_nonlinear_share",
    "garch_map",
    "fit_garch_direct",
]

TRADING_DT = 1.0 / 252.0


class ModelInconsistencyError(RuntimeError):
    """The moment formulas produced gamma^2 < 0 for this sample."""


@dataclass(frozen=True)
class NonlinearFit:
    """Fitted quadratic coupling per factor.

    ``u_corr`` is the correlation matrix of the exogenous residuals; the
    ``zeta``/``kappa`` fields are the in-sample skew and excess kurtosis of
    the normalized spot factor that the moment formulas were built from.
    """

    a: np.ndarray
    b: np.ndarray
    gamma: np.ndarray
    u_corr: np.ndarray
    zeta: float
    kappa: float

    def __post_init__(self):
        for name in ("a", "b", "gamma"):
            object.__setattr__(self, name, np.atleast_1d(np.asarray(getattr(self, name), float)))
        object.__setattr__(self, "u_corr", np.atleast_2d(np.asarray(self.u_corr, float)))
        if np.any(self.gamma < 0) or np.any(self.gamma > 1 + 1e-9):
            raise ValueError("gamma must lie in [0, 1]")

    @property
    def n(self) -> int:
        return self.a.size

    def f(self, zbar):
        """Quadratic functional per factor; returns shape (n,) + zbar.shape."""
        zbar = np.asarray(zbar, float)
        return (self.a[(...,) + (None,) * zbar.ndim] * (zbar**2 - 1.0)
                - self.b[(...,) + (None,) * zbar.ndim] * zbar)

    def spot_vol_corr(self) -> np.ndarray:
        """E[zbar wbar_a] = a_a zeta - b_a, the leverage carrier."""
        return self.a * self.zeta - self.b

    def clustering_carrier(self) -> np.ndarray:
        """E[zbar^2 wbar_a] = a_a (2 + kappa) - b_a zeta."""
        return self.a * (2.0 + self.kappa) - self.b * self.zeta

    def rho_implied(self) -> np.ndarray:
        """Factor correlation implied by the fit (consistency diagnostic)."""
        a, b, gam, z, kp = self.a, self.b, self.gamma, self.zeta, self.kappa
        out = (np.outer(gam, gam) * self.u_corr
               + (2.0 + kp) * np.outer(a, a) + np.outer(b, b)
               - z * np.outer(a, b) - z * np.outer(b, a))
        return out


def fit_nonlinear(zbar, wbar, raise_on_mismatch: bool = True) -> NonlinearFit:
    """Fit the quadratic coupling by the closed-form moment expressions.

    Args:
        zbar: normalized spot-factor series, shape (T,). Re-standardized
            in-sample so the moment identities are exact.
        wbar: normalized vol-factor series, shape (T,) or (T, n); centered
            in-sample.
        raise_on_mismatch: keep the internal moment-vs-regression
            agreement assertion (1e-10); disable only for diagnostics.

    The closed forms solve the same normal equations as a least-squares
    regression of wbar on (zbar^2 - 1, -zbar); both are computed and
    compared. gamma^2 < 0 raises :class:`ModelInconsistencyError`.
    """
    z = np.asarray(zbar, dtype=float)
    w = np.asarray(wbar, dtype=float)
    if w.ndim == 1:
        w = w[:, None]
    if z.ndim != 1 or w.shape[0] != z.size:
        raise ValueError("zbar must be (T,) and wbar (T, n)")
    if z.size < 30:
        raise ValueError("need at least 30 samples")

    z = z - z.mean()
    z = z / z.std()
    w = w - w.mean(axis=0)

    zeta = float(np.mean(z**3))
    kappa = float(np.mean(z**4) - 3.0)
    det = 2.0 + kappa - zeta**2
    if det <= 0:
        raise ModelInconsistencyError(f"2 + kappa - zeta^2 = {det:.3g} <= 0")

    m_wz = w.T @ z / z.size
    m_wz2 = w.T @ (z**2) / z.size
    a = (m_wz2 - zeta * m_wz) / det
    b = (zeta * m_wz2 - (2.0 + kappa) * m_wz) / det

    # independent route: least squares on the explicit regressors
    design = np.column_stack([z**2 - 1.0, -z])
    coef, *_ = np.linalg.lstsq(design, w, rcond=None)
    if raise_on_mismatch:
        err = max(np.abs(coef[0] - a).max(), np.abs(coef[1] - b).max())
        if err > 1e-10:
            raise AssertionError(f"moment/least-squares mismatch {err:.3g}")

    var_w = np.mean(w**2, axis=0)
    gamma_sq = var_w - a**2 * (2.0 + kappa) - b**2 + 2.0 * a * b * zeta
    if np.any(gamma_sq < 0):
        raise ModelInconsistencyError(
            f"gamma^2 = {gamma_sq} < 0; quadratic model invalid for this sample")
    gamma = np.sqrt(gamma_sq)

    resid = w - design @ np.vstack([a, b])
    u_corr = np.eye(w.shape[1])
    pos = gamma > 0
    if pos.any():
        u = resid[:, pos] / gamma[pos]
        u_corr[np.ix_(pos, pos)] = (u.T @ u) / z.size
    return NonlinearFit(a=a, b=b, gamma=gamma, u_corr=u_corr, zeta=zeta, kappa=kappa)


def sigma_v(fit: NonlinearFit, params: ModelParams, tau):
    """Exogenous vol of curve moves at tenor tau (annualized).

    sqrt(sum_ab Omega_ab w_a(tau) w_b(tau) gamma_a gamma_b E[U_a U_b]);
    decreasing in tau, zero when the coupling is fully spot-driven.
    """
    tau = np.asarray(tau, dtype=float)
    w = np.exp(-np.multiply.outer(params.k, tau))
    core = params.omega * np.outer(fit.gamma, fit.gamma) * fit.u_corr
    out = np.sqrt(np.einsum("ab,a...,b...->...", core, w, w))
    return float(out) if out.ndim == 0 else out


def leverage_correlation(fit: NonlinearFit, params: ModelParams, delta,
                         dt: float = TRADING_DT):
    """Correlation of today's return with the squared return at lag delta.

    sum_a theta_a e^{-k_a delta} (a_a zeta - b_a) sqrt(dt); negative for
    equity-like parameters (b > 0) and decaying with the kernels.
    """
    delta = np.asarray(delta, dtype=float)
    if np.any(delta <= 0):
        raise ValueError("lag must be positive")
    w = np.exp(-np.multiply.outer(params.k, delta))
    out = np.einsum("a,a...->...", params.theta * fit.spot_vol_corr(), w) * np.sqrt(dt)
    return float(out) if out.ndim == 0 else out


def volatility_clustering(fit: NonlinearFit, params: ModelParams, delta,
                          dt: float = TRADING_DT):
    """Correlation of today's and lag-delta squared returns.

    sum_a theta_a e^{-k_a delta} (a_a (2+kappa) - b_a zeta) sqrt(dt);
    requires non-linearity or skew to be non-zero.
    """
    delta = np.asarray(delta, dtype=float)
    if np.any(delta <= 0):
        raise ValueError("lag must be positive")
    w = np.exp(-np.multiply.outer(params.k, delta))
    out = np.einsum("a,a...->...", params.theta * fit.clustering_carrier(), w) * np.sqrt(dt)
    return float(out) if out.ndim == 0 else out


def clustering_nonlinear_share(fit: NonlinearFit, params: ModelParams,
                               delta: float) -> float:
    """Share of the clustering amplitude due to the quadratic term a(2+kappa)."""
    w = np.exp(-params.k * delta)
    nonlin = float(np.sum(params.theta * w * fit.a * (2.0 + fit.kappa)))
    total = float(np.sum(params.theta * w * fit.clustering_carrier()))
    if total == 0:
        raise ZeroDivisionError("clustering amplitude is zero")
    return nonlin / total


@dataclass(frozen=True)
class GarchCoefficients:
    """Coefficients of the asymmetric-GARCH reduction.

    Units as in the regression  var_{t+1} = phi0 + phi1 r^2/dt
    + phi2-term + (1+phi3) var_t + noise: phi0 carries variance/day,
    phi1..phi3 are dimensionless, phi4 is the annualized exogenous vol.
    """

    phi0: float
    phi1: float
    phi2: float
    phi3: float
    phi4: float

    def __post_init__(self):
        if self.phi4 < 0:
            raise ValueError("phi4 must be >= 0")

    def as_tuple(self) -> tuple[float, float, float, float, float]:
        return (self.phi0, self.phi1, self.phi2, self.phi3, self.phi4)


def garch_map(fit: NonlinearFit, params: ModelParams, curve_slope: float,
              mu_z: float, sigma_z: float,
              mu_w_annual: np.ndarray | None = None,
              dt: float = TRADING_DT) -> GarchCoefficients:
    """Map the stochastic model onto asymmetric-GARCH coefficients.

    Args:
        curve_slope: d xi/du at the anchor (variance per year).
        mu_z, sigma_z: annualized trend and vol of the spot factor.
        mu_w_annual: annualized factor drifts; defaults to the drifts
            implied by ``params.mu``.

    The implied-variance recursion reads
    ``xi_{t+dt} ~ phi0 + phi1 r^2/dt - phi2 sqrt(xi) r/sqrt(dt)
    + (1+phi3) xi + xi phi4 V sqrt(dt)``.
    """
    if sigma_z <= 0:
        raise ValueError("sigma_z must be positive")
    if mu_w_annual is None:
        mu_w_annual = params.factor_drift_annual()
    mu_w_annual = np.asarray(mu_w_annual, dtype=float)
    sq = np.sqrt(dt)
    theta_bar = params.theta * np.exp(-params.k * dt)

    phi0 = curve_slope * dt
    phi1 = float(np.sum(theta_bar * fit.a) / sigma_z**2 * sq)
    phi2 = float(np.sum(theta_bar * (2.0 * fit.a * mu_z / sigma_z**2 * sq
                                     + fit.b / sigma_z)) * sq)
    phi3 = float(np.sum(theta_bar * mu_w_annual) * dt
                 - np.sum(theta_bar * fit.a) * sq
                 + np.sum(theta_bar * (fit.a * mu_z**2 / sigma_z**2 * sq
                                       + fit.b * mu_z / sigma_z)) * dt)
    phi4 = float(sigma_v(fit, params, dt))
    return GarchCoefficients(phi0=phi0, phi1=phi1, phi2=phi2, phi3=phi3, phi4=phi4)


def fit_garch_direct(returns, variance_proxy, dt: float = TRADING_DT) -> GarchCoefficients:
    """Least-squares fit of the asymmetric-GARCH recursion on data.

    Regresses ``var_{t+1}`` on ``(1, r_t^2/dt, r_t/sqrt(dt), var_t)``;
    the residual scale is reported as the phi4 analogue
    ``std(resid)/(mean(var) sqrt(dt))``.
    """
    r = np.asarray(returns, dtype=float)
    v = np.asarray(variance_proxy, dtype=float)
    if r.size != v.size - 1 and r.size != v.size:
        raise ValueError("need len(returns) = len(variance_proxy) or one less")
    n = min(r.size, v.size - 1)
    if n < 250:
        raise ValueError("need at least 250 aligned observations")
    y = v[1:n + 1]
    design = np.column_stack([np.ones(n), r[:n]**2 / dt, r[:n] / np.sqrt(dt), v[:n]])
    coef, _, rank, _ = np.linalg.lstsq(design, y, rcond=None)
    if rank < 4:
        raise np.linalg.LinAlgError("collinear GARCH regressors")
    resid = y - design @ coef
    phi4 = float(resid.std() / (v[:n].mean() * np.sqrt(dt)))
    return GarchCoefficients(phi0=float(coef[0]), phi1=float(coef[1]),
                             phi2=float(coef[2]), phi3=float(coef[3] - 1.0),
                             phi4=phi4)
