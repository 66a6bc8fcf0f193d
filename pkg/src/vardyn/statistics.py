"""Empirical characterization of extracted factor series and curves."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .model import ModelParams

__all__ = [
    "MomentReport",
    "ModeDecomposition",
    "moments",
    "risk_premium_stats",
    "kl_modes",
    "model_modes",
    "distance_correlation",
    "autocorr_check",
]

_DT = 1.0 / 252.0


@dataclass(frozen=True)
class MomentReport:
    """Annualized sample moments plus Hill tail exponents."""

    mean: float
    vol: float
    skew: float | None
    excess_kurtosis: float | None
    tail_upper: float | None
    tail_lower: float | None
    degenerate: bool = False


def _hill_exponent(values: np.ndarray) -> float | None:
    """Hill estimator on the exceedances handed in (already tail-selected)."""
    values = values[values > 0]
    if values.size < 5:
        return None
    ref = values.min()
    logs = np.log(values / ref)
    mean_log = logs[logs > 0].mean() if np.any(logs > 0) else 0.0
    return float(1.0 / mean_log) if mean_log > 0 else None


def moments(series, dt: float = _DT) -> MomentReport:
    """Sample moments, annualized via dt; tails from the 2%/98% quantiles."""
    x = np.asarray(series, dtype=float)
    if x.size < 30:
        raise ValueError("need at least 30 samples")
    mean = float(x.mean() / dt)
    vol = float(x.std(ddof=1) / np.sqrt(dt))
    if x.std() == 0.0:
        return MomentReport(mean=mean, vol=0.0, skew=None, excess_kurtosis=None,
                            tail_upper=None, tail_lower=None, degenerate=True)
    z = (x - x.mean()) / x.std(ddof=0)
    n = x.size
    # bias-corrected skew and excess kurtosis
    g1 = float(np.mean(z**3))
    g2 = float(np.mean(z**4) - 3.0)
    skew = g1 * np.sqrt(n * (n - 1)) / (n - 2)
    kurt = (n - 1) / ((n - 2) * (n - 3)) * ((n + 1) * g2 + 6.0)
    q_lo, q_hi = np.quantile(x, [0.02, 0.98])
    tail_up = _hill_exponent(x[x > q_hi] - x.mean())
    tail_lo = _hill_exponent(-(x[x < q_lo] - x.mean()))
    return MomentReport(mean=mean, vol=vol, skew=skew, excess_kurtosis=kurt,
                        tail_upper=tail_up, tail_lower=tail_lo)


def risk_premium_stats(sigma_z: float, kappa_z: float,
                       mu_w_annual=None) -> dict:
    """Volatility-risk-premium magnitudes.

    ``premium = 1 - sigma_z^2`` (implied minus subsequently realized
    variance, as a fraction) and ``premium_vol = sqrt(2 + kappa) sigma_z^2``.
    """
    out = {
        "premium": 1.0 - sigma_z**2,
        "premium_vol": float(np.sqrt(2.0 + kappa_z) * sigma_z**2),
    }
    if mu_w_annual is not None:
        out["factor_drifts"] = np.asarray(mu_w_annual, dtype=float)
    return out


@dataclass(frozen=True)
class ModeDecomposition:
    """Eigenmodes of curve-deformation covariance, descending shares."""

    shares: np.ndarray
    modes: np.ndarray   # (grid, n_modes), orthonormal columns
    grid: np.ndarray

    def __post_init__(self):
        if not np.isclose(self.shares.sum(), 1.0, atol=1e-9):
            raise ValueError("variance shares must sum to one")


def kl_modes(rel_moves: np.ndarray, grid) -> ModeDecomposition:
    """Karhunen-Loeve decomposition of relative curve moves.

    Args:
        rel_moves: (days, grid) matrix of d(xi)/xi sampled on the tenor grid.
        grid: tenor grid in years.
    """
    rel = np.asarray(rel_moves, dtype=float)
    if rel.ndim != 2 or rel.shape[0] < 100:
        raise ValueError("need a (days >= 100, grid) matrix of curve moves")
    rel = rel - rel.mean(axis=0, keepdims=True)
    cov = rel.T @ rel / rel.shape[0]
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.maximum(evals[order], 0.0)
    total = evals.sum()
    if total <= 0:
        raise ValueError("degenerate covariance")
    return ModeDecomposition(shares=evals / total, modes=evecs[:, order],
                             grid=np.asarray(grid, dtype=float))


def model_modes(params: ModelParams, grid) -> ModeDecomposition:
    """Eigenmodes implied by the factor covariance on the same grid."""
    grid = np.asarray(grid, dtype=float)
    w = np.exp(-np.multiply.outer(params.k, grid))        # (n, grid)
    cov = np.einsum("ab,ai,bj->ij", params.omega, w, w)
    evals, evecs = np.linalg.eigh(cov)
    order = np.argsort(evals)[::-1]
    evals = np.maximum(evals[order], 0.0)
    return ModeDecomposition(shares=evals / evals.sum(), modes=evecs[:, order],
                             grid=grid)


def distance_correlation(x, y) -> float:
    """Szekely distance correlation between two equal-length series."""
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    if x.size != y.size or x.size < 30:
        raise ValueError("need equal-length series with >= 30 points")
    if x.std() == 0 or y.std() == 0:
        import warnings
        warnings.warn("constant input; distance correlation set to 0")
        return 0.0

    def centered(v):
        d = np.abs(v[:, None] - v[None, :])
        return d - d.mean(axis=0) - d.mean(axis=1)[:, None] + d.mean()

    ax, ay = centered(x), centered(y)
    dcov2 = (ax * ay).mean()
    dvar_x = (ax * ax).mean()
    dvar_y = (ay * ay).mean()
    if dvar_x <= 0 or dvar_y <= 0:
        return 0.0
    return float(np.sqrt(dcov2 / np.sqrt(dvar_x * dvar_y)))


def autocorr_check(series, lags) -> dict:
    """Sample ACF with Bartlett white-noise bands +-1.96/sqrt(n)."""
    x = np.asarray(series, dtype=float)
    if x.size < 100:
        raise ValueError("need at least 100 samples")
    x = x - x.mean()
    denom = float(x @ x)
    acf = {}
    for lag in lags:
        if lag <= 0 or lag >= x.size:
            raise ValueError(f"lag {lag} out of range")
        acf[int(lag)] = float(x[:-lag] @ x[lag:] / denom)
    band = 1.96 / np.sqrt(x.size)
    return {"acf": acf, "band": band}
