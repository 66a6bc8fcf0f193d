"""Vol-of-vol analytics: futures variance term structure, the model VVIX,
and the mean-reverting multiplicative scale on the factor vols.

The scale ratio lambda_t (squared external VVIX over the model value)
follows an OU process in logs; its fitted parameters feed an adjusted
futures-variance integral that steepens the term structure when
lambda_t sits above its long-run level.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy.integrate import quad

from .kernels import g
from .model import VIX_WINDOW_YEARS, ModelParams

__all__ = [
    "VolOfVolState",
    "vix_future_total_variance",
    "model_vvix",
    "fit_lambda_process",
    "lambda_expectation",
    "adjusted_future_variance",
]

_DT = 1.0 / 252.0


@dataclass(frozen=True)
class VolOfVolState:
    """Fitted OU-in-logs dynamics of the vol-of-vol ratio lambda_t."""

    lam_inf: float
    k_lambda: float
    sigma_lambda: float
    mu_lambda: float = 0.0
    resid_skew: float | None = None
    resid_kurtosis: float | None = None
    factor_correlations: dict | None = None

    def __post_init__(self):
        if self.lam_inf <= 0:
            raise ValueError("lam_inf must be positive")
        if self.k_lambda < 0 or self.sigma_lambda < 0:
            raise ValueError("k_lambda and sigma_lambda must be >= 0")

    @property
    def half_life_days(self) -> float:
        if self.k_lambda == 0:
            return np.inf
        return np.log(2.0) / self.k_lambda * 252.0


def _omega_g(params: ModelParams, delta_t: float) -> np.ndarray:
    gv = g(params.k * delta_t)
    return params.omega * np.outer(gv, gv)


def vix_future_total_variance(params: ModelParams, tau,
                              delta_t: float = VIX_WINDOW_YEARS):
    """Expected average squared relative move of a future with expiry tau.

    (1/4) sum_ab Omega_ab g_a(dT) g_b(dT) g((k_a+k_b) tau); decreasing in
    tau and consistent with the squared short-end vol at tau -> 0.
    """
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("time to expiry must be >= 0")
    og = _omega_g(params, delta_t)
    kk = params.k[:, None] + params.k[None, :]
    gmat = g(np.multiply.outer(kk, tau))
    out = 0.25 * np.einsum("ab,ab...->...", og, gmat)
    return float(out) if out.ndim == 0 else out


def model_vvix(params: ModelParams, tau1: float, tau2: float | None = None) -> float:
    """Model value of the VVIX built from expiries tau1 < tau2.

    sqrt( sum_ab (Omega_ab/4) g_a g_b (2 g_{a+b}(tau2)
          - e^{-(k_a+k_b) tau1} g_{a+b}(dT)) ).
    """
    if tau2 is None:
        tau2 = tau1 + VIX_WINDOW_YEARS
    if not 0 <= tau1 < tau2:
        raise ValueError("need 0 <= tau1 < tau2")
    delta_t = tau2 - tau1
    og = _omega_g(params, VIX_WINDOW_YEARS)
    kk = params.k[:, None] + params.k[None, :]
    inner = 2.0 * g(kk * tau2) - np.exp(-kk * tau1) * g(kk * delta_t)
    val = 0.25 * float(np.sum(og * inner))
    if val < 0:
        raise ValueError("negative squared VVIX; parameters outside regime")
    return float(np.sqrt(val))


def fit_lambda_process(lam_series, dt: float = _DT,
                       factor_series: dict | None = None) -> VolOfVolState:
    """Exact discrete AR(1) fit of log lambda.

    log lam_{t+1} = c + phi log lam_t + eps maps to k = -log(phi)/dt,
    log lam_inf = c/(1-phi), sigma^2 = var(eps) * 2k/(1-phi^2). Residual
    skew/kurtosis and correlations with supplied factor series are
    reported alongside.
    """
    lam = np.asarray(lam_series, dtype=float)
    if lam.size < 250:
        raise ValueError("need at least 250 points")
    if np.any(lam <= 0):
        raise ValueError("lambda series must be positive")
    x = np.log(lam)
    if np.allclose(x, x[0]):
        return VolOfVolState(lam_inf=float(lam[0]), k_lambda=0.0, sigma_lambda=0.0)
    x0, x1 = x[:-1], x[1:]
    phi = float(np.cov(x0, x1, ddof=0)[0, 1] / np.var(x0))
    c = float(x1.mean() - phi * x0.mean())
    if not 0 < phi < 1:
        raise ValueError(f"AR(1) coefficient {phi:.3f} outside (0, 1); "
                         "series is not mean-reverting at this sampling")
    k_lambda = -np.log(phi) / dt
    resid = x1 - c - phi * x0
    var_eps = float(resid.var(ddof=2))
    sigma_lambda = float(np.sqrt(var_eps * 2.0 * k_lambda / (1.0 - phi**2)))
    lam_inf = float(np.exp(c / (1.0 - phi)))
    mu_lambda = float(np.diff(x).mean() / dt)
    z = (resid - resid.mean()) / resid.std(ddof=0)
    corrs = None
    if factor_series:
        corrs = {}
        for name, series in factor_series.items():
            s = np.asarray(series, dtype=float)[:resid.size]
            corrs[name] = float(np.corrcoef(resid[:s.size], s)[0, 1])
    return VolOfVolState(lam_inf=lam_inf, k_lambda=float(k_lambda),
                         sigma_lambda=sigma_lambda, mu_lambda=mu_lambda,
                         resid_skew=float(np.mean(z**3)),
                         resid_kurtosis=float(np.mean(z**4) - 3.0),
                         factor_correlations=corrs)


def lambda_expectation(state: VolOfVolState, lam_t: float, horizon):
    """Conditional expectations of lambda at the given horizon (years).

    Returns ``(level, log)``: the log expectation is exact for the OU,
    E_t[log lam_u] = log lam_inf + (log lam_t - log lam_inf) e^{-k h};
    the level expectation uses the short-horizon variance growth
    lam_inf (lam_t/lam_inf)^{e^{-k h}} e^{sigma^2 h / 2}.
    """
    if lam_t <= 0:
        raise ValueError("lam_t must be positive")
    h = np.asarray(horizon, dtype=float)
    if np.any(h < 0):
        raise ValueError("horizon must be >= 0")
    decay = np.exp(-state.k_lambda * h)
    log_exp = np.log(state.lam_inf) + (np.log(lam_t) - np.log(state.lam_inf)) * decay
    level = state.lam_inf * (lam_t / state.lam_inf) ** decay \
        * np.exp(0.5 * state.sigma_lambda**2 * h)
    if level.ndim == 0:
        return float(level), float(log_exp)
    return level, log_exp


def adjusted_future_variance(params: ModelParams, state: VolOfVolState,
                             lam_t: float, tau, delta_t: float = VIX_WINDOW_YEARS,
                             epsrel: float = 1e-8):
    """Futures total variance under the mean-reverting vol-of-vol scale.

    sum_ab (Omega^g_ab / (4 tau)) int_0^tau E_t[lam_u]/lam_inf
    e^{-(k_a+k_b)(tau-u)} du, evaluated by adaptive quadrature; reduces to
    the constant-scale term structure when sigma_lambda = 0 and
    lam_t = lam_inf, and steepens the short end when lam_t > lam_inf.
    """
    tau_arr = np.atleast_1d(np.asarray(tau, dtype=float))
    if np.any(tau_arr <= 0):
        raise ValueError("time to expiry must be positive")
    og = _omega_g(params, delta_t)
    kk = params.k[:, None] + params.k[None, :]

    def one(tau_i: float) -> float:
        total = 0.0
        for a in range(params.n):
            for b in range(a, params.n):
                mult = 1.0 if a == b else 2.0
                f = lambda u: (lambda_expectation(state, lam_t, u)[0] / state.lam_inf
                               * np.exp(-kk[a, b] * (tau_i - u)))
                val, err = quad(f, 0.0, tau_i, epsabs=0.0, epsrel=epsrel, limit=200)
                if not np.isfinite(val):
                    raise RuntimeError("quadrature failure in adjusted variance")
                total += mult * og[a, b] / (4.0 * tau_i) * val
        return total

    out = np.array([one(t) for t in tau_arr])
    return float(out[0]) if out.size == 1 and np.ndim(tau) == 0 else out
