"""The n-factor lognormal forward-variance model.

The curve is driven by correlated Brownian factors through exponential
kernels:

    d xi_t^u / xi_t^u = sum_a theta_a * exp(-k_a (u - t)) dW_t^a

Factors are ordered fast-first (``k[0]`` is the largest decay speed).
The real-measure factor drift is carried in U-space: with TrI the Cholesky
factor of the correlation matrix, U = TrI^-1 dW / sqrt(dt) has independent
unit components and E[U] = mu per daily step.

A VIX future priced in this model sits below its forward variance strike
by a convexity correction proportional to the factor covariance Omega.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field

import numpy as np

from .curves import VarianceCurve, forward_var_strike, kernel_weighted_strike
from .kernels import g

__all__ = [
    "ModelParams",
    "VixFuturePrice",
    "ConvexityRegimeError",
    "price_vix_future",
    "approx_convexity",
    "future_dynamics_loadings",
    "instantaneous_var_vol",
    "vix_future_vol_approx",
]

VIX_WINDOW_YEARS = 30.0 / 365.0
_EIGENVALUE_FLOOR = 1e-10


class ConvexityRegimeError(RuntimeError):
    """Vol-of-vol too large for the first-order pricing expansion."""


@dataclass(frozen=True)
class ModelParams:
    """Factor decays, vols, correlations and real-measure drifts.

    Args:
        k: decay speeds per factor (1/years), strictly decreasing
            (index 0 = fast factor).
        theta: lognormal vol-of-variance per factor (annualized).
        rho: factor correlation matrix (or the scalar off-diagonal
            correlation when n = 2).
        mu: real-measure drift of the normalized, decorrelated factors
            (E[U] per daily step); zero under the pricing measure.
    """

    k: np.ndarray
    theta: np.ndarray
    rho: np.ndarray
    mu: np.ndarray | None = None

    def __post_init__(self):
        k = np.atleast_1d(np.asarray(self.k, dtype=float))
        theta = np.atleast_1d(np.asarray(self.theta, dtype=float))
        n = k.size
        rho = np.asarray(self.rho, dtype=float)
        if rho.ndim == 0:
            if n != 2:
                raise ValueError("scalar rho only valid for two factors")
            rho = np.array([[1.0, float(rho)], [float(rho), 1.0]])
        mu = np.zeros(n) if self.mu is None else np.atleast_1d(np.asarray(self.mu, float))
        if theta.size != n or mu.size != n or rho.shape != (n, n):
            raise ValueError("inconsistent parameter dimensions")
        if np.any(k <= 0):
            raise ValueError("decay speeds must be positive")
        if n > 1 and np.any(np.diff(k) >= 0):
            raise ValueError("decay speeds must be strictly decreasing (fast factor first)")
        if np.any(theta < 0):
            # theta = 0 is admitted: it is the Black-Scholes degeneration
            # used as a reference point throughout.
            raise ValueError("factor vols must be >= 0")
        if not np.allclose(rho, rho.T) or not np.allclose(np.diag(rho), 1.0):
            raise ValueError("rho must be symmetric with unit diagonal")
        eigvals, eigvecs = np.linalg.eigh(rho)
        if eigvals.min() < -1e-8:
            raise ValueError("rho must be positive semi-definite")
        if eigvals.min() < _EIGENVALUE_FLOOR:
            eigvals = np.maximum(eigvals, _EIGENVALUE_FLOOR)
            rho = eigvecs @ np.diag(eigvals) @ eigvecs.T
            d = np.sqrt(np.diag(rho))
            rho = rho / np.outer(d, d)
        object.__setattr__(self, "k", k)
        object.__setattr__(self, "theta", theta)
        object.__setattr__(self, "rho", rho)
        object.__setattr__(self, "mu", mu)

    @property
    def n(self) -> int:
        return self.k.size

    @property
    def omega(self) -> np.ndarray:
        """Covariance Omega_ab = theta_a theta_b rho_ab."""
        return np.outer(self.theta, self.theta) * self.rho

    @property
    def tri(self) -> np.ndarray:
        """Lower-triangular TrI with TrI TrI^T = rho."""
        return np.linalg.cholesky(self.rho)

    @property
    def sqrt_omega(self) -> np.ndarray:
        """Theta * TrI, the likelihood's sqrt(Omega)."""
        return np.diag(self.theta) @ self.tri

    def factor_drift_annual(self) -> np.ndarray:
        """Annualized drift of W per factor: TrI mu / sqrt(dt), dt = 1/252."""
        return self.tri @ self.mu * np.sqrt(252.0)

    def with_theta_scale(self, scale: float) -> "ModelParams":
        """Scaled copy theta -> scale*theta (the lambda knob of the smile study)."""
        if scale <= 0:
            raise ValueError("scale must be positive")
        return ModelParams(k=self.k.copy(), theta=self.theta * scale,
                           rho=self.rho.copy(), mu=self.mu.copy())

    def to_json(self) -> str:
        return json.dumps({"k": self.k.tolist(), "theta": self.theta.tolist(),
                           "rho": self.rho.tolist(), "mu": self.mu.tolist()})

    @classmethod
    def from_json(cls, text: str) -> "ModelParams":
        doc = json.loads(text)
        return cls(k=np.asarray(doc["k"], float), theta=np.asarray(doc["theta"], float),
                   rho=np.asarray(doc["rho"], float), mu=np.asarray(doc["mu"], float))

    @classmethod
    def reference_calibration(cls) -> "ModelParams":
        """The two-factor parameter set of the reference calibration."""
        return cls(k=np.array([10.25, 1.05]), theta=np.array([1.80, 0.92]),
                   rho=0.51, mu=np.array([-0.075, -0.004]))


@dataclass(frozen=True)
class VixFuturePrice:
    strike: float
    convexity_correction: float
    price: float = field(init=False)

    def __post_init__(self):
        if not 0.0 <= self.convexity_correction < 1.0:
            raise ValueError("convexity correction must lie in [0, 1)")
        object.__setattr__(self, "price", self.strike * (1.0 - self.convexity_correction))


def convexity_exact(curve: VarianceCurve, params: ModelParams,
                    t1: float, t2: float) -> float:
    """First-order convexity correction with the exact time integral.

    For exponential kernels the integral over the exposure window [0, t1]
    of the kernel-weighted curve means collapses to

        sum_ab Omega_ab/8 * (e^{(k_a+k_b) t1} - 1)/(k_a+k_b)
                          * (K^a)^2 (K^b)^2 / K^4

    with K^a the kernel-weighted strike (kernel measured from t = 0).
    """
    strike = forward_var_strike(curve, t1, t2).value
    ksq = np.array([kernel_weighted_strike(curve, t1, t2, decay=ka) ** 2
                    for ka in params.k])
    omega = params.omega
    total = 0.0
    for a in range(params.n):
        for b in range(params.n):
            kk = params.k[a] + params.k[b]
            total += omega[a, b] / 8.0 * np.expm1(kk * t1) / kk \
                * ksq[a] * ksq[b] / strike**4
    return float(total)


def price_vix_future(curve: VarianceCurve, params: ModelParams,
                     t1: float, t2: float | None = None) -> VixFuturePrice:
    """Pricing equation: future = strike * (1 - convexity correction)."""
    if t2 is None:
        t2 = t1 + VIX_WINDOW_YEARS
    strike = forward_var_strike(curve, t1, t2).value
    cc = convexity_exact(curve, params, t1, t2)
    if cc >= 1.0:
        raise ConvexityRegimeError(
            f"convexity correction {cc:.3f} >= 1; vol-of-vol outside the "
            "first-order pricing regime")
    return VixFuturePrice(strike=strike, convexity_correction=cc)


def approx_convexity(params: ModelParams, tau1: float,
                     delta_t: float = VIX_WINDOW_YEARS) -> float:
    """Flat-curve convexity: (1/8) sum Omega g_a g_b (1-e^{-(ka+kb) tau1})/(ka+kb).

    Converges to (1/8) sum Omega g_a g_b/(ka+kb) for long expiries; scales
    quadratically in the vol-of-vol.
    """
    if tau1 < 0:
        raise ValueError("time to expiry must be >= 0")
    gv = g(params.k * delta_t)
    omega = params.omega
    total = 0.0
    for a in range(params.n):
        for b in range(params.n):
            kk = params.k[a] + params.k[b]
            total += omega[a, b] * gv[a] * gv[b] * (-np.expm1(-kk * tau1)) / kk
    return float(total / 8.0)


def future_dynamics_loadings(curve: VarianceCurve, params: ModelParams,
                             t1: float, t2: float | None = None) -> np.ndarray:
    """Per-factor lognormal loadings of the future: (theta_a/2) (K^a / V)^2."""
    if t2 is None:
        t2 = t1 + VIX_WINDOW_YEARS
    price = price_vix_future(curve, params, t1, t2).price
    ksq = np.array([kernel_weighted_strike(curve, t1, t2, decay=ka) ** 2
                    for ka in params.k])
    return params.theta / 2.0 * ksq / price**2


def instantaneous_var_vol(params: ModelParams, tau) -> np.ndarray | float:
    """Vol of instantaneous variance at tenor tau: sqrt(sum Omega w^a w^b)."""
    tau = np.asarray(tau, dtype=float)
    if np.any(tau < 0):
        raise ValueError("tenor must be >= 0")
    w = np.exp(-np.multiply.outer(params.k, tau))  # (n, ...) kernels
    out = np.sqrt(np.einsum("ab,a...,b...->...", params.omega, w, w))
    return float(out) if out.ndim == 0 else out


def vix_future_vol_approx(params: ModelParams, tau1,
                          delta_t: float = VIX_WINDOW_YEARS):
    """Flat-curve lognormal vol of a VIX future with time-to-expiry tau1.

    (1/2) sqrt(sum_ab Omega_ab g_a(dT) g_b(dT) e^{-(k_a+k_b) tau1});
    decreasing in tau1 and slightly below half the variance vol.
    """
    tau1 = np.asarray(tau1, dtype=float)
    if np.any(tau1 < 0):
        raise ValueError("time to expiry must be >= 0")
    gv = g(params.k * delta_t)
    w = np.exp(-np.multiply.outer(params.k, tau1))
    omg = params.omega * np.outer(gv, gv)
    out = 0.5 * np.sqrt(np.einsum("ab,a...,b...->...", omg, w, w))
    return float(out) if out.ndim == 0 else out
