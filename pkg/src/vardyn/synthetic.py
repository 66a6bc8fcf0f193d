"""Synthetic market generator: a ground-truth model plays the data vendor.

One simulated path of the two-factor model produces daily curves; live
futures are priced off them with the convexity correction, perturbed by
liquidity-scaled multiplicative noise, de-adjusted by the return-count
factor (so ingestion re-applies it), and written in the same CSV schemas
the loaders expect. ``truth.json`` records everything injected.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .market_data import (
    TRADING_DAYS,
    VIX_WINDOW_DAYS,
    BusinessCalendar,
    vix_adjustment_factor,
)
from .model import ModelParams
from .montecarlo import standardized_innovation_sampler
from .spotvol import NonlinearFit

__all__ = ["SyntheticSpec", "SyntheticTruth", "generate", "replica_truth"]

_DT = 1.0 / TRADING_DAYS


@dataclass(frozen=True)
class SyntheticSpec:
    """Ground truth and sampling plan of a synthetic dataset."""

    params: ModelParams
    xi0: float = 0.04
    days: int = 1500
    n_futures: int = 7
    start: dt.date = dt.date(2016, 1, 4)
    seed: int = 12345
    spot0: float = 2000.0
    mu_z: float = 0.33
    sigma_z: float = 0.796
    zeta: float = -0.5
    kappa: float = 1.0
    fit: NonlinearFit | None = None
    # per-tenor relative level-noise of the quotes, front month first;
    # the matching volumes come out of c^2/(2 s^2) so the liquidity map
    # reproduces exactly the injected variation noise
    level_noise: tuple = (0.002, 0.0025, 0.003, 0.004, 0.0055, 0.0075, 0.010)
    vix_cash_noise: float = 0.002

    def __post_init__(self):
        if self.days < 10:
            raise ValueError("need at least 10 days")
        if len(self.level_noise) != self.n_futures:
            raise ValueError("one noise scale per live future")

    def volumes(self) -> np.ndarray:
        s = np.asarray(self.level_noise)
        return 1.0 / (2.0 * s**2)


def default_nonlinear_truth() -> NonlinearFit:
    """Quadratic-coupling truth used by the reference synthetic dataset.

    The exogenous correlation is solved so the implied factor correlation
    matches rho = 0.51 exactly.
    """
    a = np.array([0.0367, 0.0])
    b = np.array([0.44, 0.66])
    zeta, kappa = -0.5, 1.0
    gamma_sq = 1.0 - a**2 * (2 + kappa) - b**2 + 2 * a * b * zeta
    gamma = np.sqrt(gamma_sq)
    rho_target = 0.51
    fixed = ((2 + kappa) * a[0] * a[1] + b[0] * b[1]
             - zeta * a[0] * b[1] - zeta * a[1] * b[0])
    off = (rho_target - fixed) / (gamma[0] * gamma[1])
    u_corr = np.array([[1.0, off], [off, 1.0]])
    return NonlinearFit(a=a, b=b, gamma=gamma, u_corr=u_corr,
                        zeta=zeta, kappa=kappa)


def replica_truth() -> SyntheticSpec:
    """The reference 1500-day dataset spec (table parameters, coupled spot)."""
    return SyntheticSpec(params=ModelParams.reference_calibration(),
                         fit=default_nonlinear_truth())


@dataclass(frozen=True)
class SyntheticTruth:
    spec: SyntheticSpec
    expiries: tuple
    files: dict

    def to_json(self) -> str:
        p = self.spec.params
        return json.dumps({
            "params": {"k": p.k.tolist(), "theta": p.theta.tolist(),
                       "rho": p.rho.tolist(), "mu": p.mu.tolist()},
            "xi0": self.spec.xi0,
            "days": self.spec.days,
            "n_futures": self.spec.n_futures,
            "seed": self.spec.seed,
            "spot": {"mu_z": self.spec.mu_z, "sigma_z": self.spec.sigma_z,
                     "zeta": self.spec.zeta, "kappa": self.spec.kappa},
            "level_noise": list(self.spec.level_noise),
            "volumes": self.spec.volumes().tolist(),
            "expiries": [e.isoformat() for e in self.expiries],
            "files": self.files,
        }, indent=2)


def _third_wednesday(year: int, month: int) -> dt.date:
    d = dt.date(year, month, 1)
    offset = (2 - d.weekday()) % 7  # first Wednesday
    return d + dt.timedelta(days=offset + 14)


def _monthly_expiries(start: dt.date, count: int) -> list[dt.date]:
    out = []
    y, m = start.year, start.month
    while len(out) < count:
        e = _third_wednesday(y, m)
        if e > start:
            out.append(e)
        m += 1
        if m > 12:
            m, y = 1, y + 1
    return out


def generate(spec: SyntheticSpec, outdir) -> SyntheticTruth:
    """Write futures.csv / spot.csv / vix.csv / truth.json into ``outdir``."""
    outdir = Path(outdir)
    outdir.mkdir(parents=True, exist_ok=True)
    calendar = BusinessCalendar()
    params = spec.params
    n = params.n
    rng = np.random.default_rng(spec.seed)

    dates = [spec.start if calendar.is_business_day(spec.start)
             else calendar.add_business_days(spec.start, 1)]
    while len(dates) < spec.days:
        dates.append(calendar.add_business_days(dates[-1], 1))
    expiries = _monthly_expiries(dates[0], spec.days // 18 + spec.n_futures + 3)

    sq = np.sqrt(_DT)
    k = params.k
    theta = params.theta
    omega = params.omega
    tri = params.tri
    mu_w_step = sq * (tri @ params.mu)
    fit = spec.fit

    innovate = standardized_innovation_sampler(spec.zeta, spec.kappa)

    x = np.zeros(n)
    y_acc = np.zeros((n, n))
    spot = spec.spot0
    decay_step = np.exp(-k * _DT)
    decay_pair = np.exp(-(k[:, None] + k[None, :]) * _DT)

    gl_nodes, gl_weights = np.polynomial.legendre.leggauss(24)

    def xi_window_mean(t1: float, t2: float, decays: np.ndarray) -> np.ndarray:
        mid, half = 0.5 * (t1 + t2), 0.5 * (t2 - t1)
        taus = mid + half * gl_nodes
        w = half * gl_weights / (t2 - t1)
        log_xi = (np.log(spec.xi0)
                  + np.einsum("a,am->m", theta, np.exp(-np.multiply.outer(k, taus)) * x[:, None])
                  - 0.5 * np.einsum("ab,abm->m", omega,
                                    np.exp(-np.multiply.outer(k[:, None] + k[None, :], taus))
                                    * y_acc[:, :, None]))
        return np.array([np.dot(w, np.exp(log_xi) * np.exp(-d * taus)) for d in decays])

    fut_rows, spot_rows, vix_rows, factor_rows = [], [], [], []
    live_start = 0
    for date in dates:
        while expiries[live_start] <= date:
            live_start += 1
        live = expiries[live_start:live_start + spec.n_futures]

        # spot and instantaneous variance (all kernels are one at tenor 0)
        xi_tt = spec.xi0 * float(np.exp(theta @ x - 0.5 * np.sum(omega * y_acc)))
        spot_rows.append((date, spot))

        for i, expiry in enumerate(live):
            t1 = calendar.year_fraction(date, expiry)
            n_ret = calendar.count_window(expiry, expiry + dt.timedelta(days=VIX_WINDOW_DAYS))
            t2 = t1 + n_ret / TRADING_DAYS
            means = xi_window_mean(t1, t2, np.concatenate([[0.0], k]))
            strike = np.sqrt(means[0])
            cc = 0.0
            for a in range(n):
                for b in range(n):
                    kk = k[a] + k[b]
                    cc += omega[a, b] / 8.0 * np.expm1(kk * t1) / kk \
                        * means[1 + a] * means[1 + b] / means[0] ** 2
            price = strike * (1.0 - cc)
            noisy = price * (1.0 + spec.level_noise[i] * rng.standard_normal())
            raw = noisy * 100.0 / vix_adjustment_factor(n_ret)
            fut_rows.append((date, expiry, raw, spec.volumes()[i]))

        # VIX cash: the time-t strike of the next-30-days window
        n_ret = calendar.count_window(date, date + dt.timedelta(days=VIX_WINDOW_DAYS))
        cash = np.sqrt(xi_window_mean(0.0, n_ret / TRADING_DAYS, np.array([0.0]))[0])
        cash_noisy = cash * (1.0 + spec.vix_cash_noise * rng.standard_normal())
        vix_rows.append((date, cash_noisy * 100.0 / vix_adjustment_factor(n_ret)))

        # advance the state by one trading day
        zbar = float(innovate(rng.standard_normal(1))[0])
        if fit is not None:
            u = np.linalg.cholesky(fit.u_corr) @ rng.standard_normal(n)
            wbar = fit.f(np.array([zbar]))[:, 0] + fit.gamma * u
            dw = mu_w_step + sq * wbar
        else:
            dw = sq * (tri @ (params.mu + rng.standard_normal(n)))
        dz = spec.mu_z * _DT + spec.sigma_z * sq * zbar
        factor_rows.append((date, dw.copy(), zbar))
        spot = spot * (1.0 + np.sqrt(xi_tt) * dz)
        x = decay_step * (x + dw)
        y_acc = decay_pair * (y_acc + _DT)

    files = {"futures": "futures.csv", "spot": "spot.csv", "vix": "vix.csv",
             "truth": "truth.json", "factors": "factors.csv"}
    with open(outdir / files["futures"], "w") as fh:
        fh.write("date,expiry,settle,volume\n")
        for date, expiry, raw, vol in fut_rows:
            fh.write(f"{date},{expiry},{raw:.8f},{vol:.2f}\n")
    with open(outdir / files["spot"], "w") as fh:
        fh.write("date,close\n")
        for date, close in spot_rows:
            fh.write(f"{date},{close:.6f}\n")
    with open(outdir / files["vix"], "w") as fh:
        fh.write("date,level\n")
        for date, level in vix_rows:
            fh.write(f"{date},{level:.8f}\n")
    with open(outdir / files["factors"], "w") as fh:
        cols = ",".join(f"dw_{i}" for i in range(n))
        fh.write(f"date,{cols},zbar\n")
        for date, dw, zbar in factor_rows:
            row = ",".join(f"{v:.10f}" for v in dw)
            fh.write(f"{date},{row},{zbar:.10f}\n")
    truth = SyntheticTruth(spec=spec, expiries=tuple(expiries), files=files)
    (outdir / files["truth"]).write_text(truth.to_json())
    return truth
