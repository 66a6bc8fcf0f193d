"""Full-model simulator and the library's universal validation oracle.

The curve is advanced with the exact lognormal step: per-factor
accumulators X and pairwise decay accumulators Y make the exponential
kernels Markovian, so positivity and the martingale property hold at
every step. A ``linear`` scheme (first-order perturbation, used for
rank-structure checks) is available as well.

Optional plug-ins: a quadratic spot/vol coupling (wbar = f(zbar) + gamma U)
via :class:`~vardyn.spotvol.NonlinearFit`, stochastic vol-of-vol through a
mean-reverting multiplicative scale, and skewed/kurtotic spot innovations
matched to target moments by a Johnson-SU fit.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field

import numpy as np
from scipy import optimize, stats

from . import blackscholes
from .curves import VarianceCurve
from .model import VIX_WINDOW_YEARS, ModelParams
from .spotvol import NonlinearFit

__all__ = [
    "SimConfig",
    "LambdaDynamics",
    "SimResult",
    "simulate",
    "mc_vix_future",
    "mc_estimators",
    "standardized_innovation_sampler",
    "dump_paths",
]

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


@dataclass(frozen=True)
class SimConfig:
    """Simulation controls; a fixed seed makes runs bit-reproducible."""

    paths: int
    horizon: float
    dt: float = 1.0 / 252.0
    seed: int = 0
    lambda_scale: float = 1.0       # theta -> lambda_scale * theta
    scheme: str = "exact"           # "exact" | "linear"
    innovation: str = "gaussian"    # "gaussian" | "skewed"
    zeta: float = 0.0               # target skew of the spot innovation
    kappa: float = 0.0              # target excess kurtosis
    antithetic: bool = True
    real_measure: bool = False      # apply factor drifts mu and spot stats
    mu_z: float = 0.0               # annualized spot-factor trend
    sigma_z: float = 1.0            # spot-factor vol (risk-premium scale)
    record: str = "final"           # "final" | "full"

    def __post_init__(self):
        if self.paths < 1:
            raise ValueError("paths must be >= 1")
        if self.horizon <= 0 or self.dt <= 0:
            raise ValueError("horizon and dt must be positive")
        if self.scheme not in ("exact", "linear"):
            raise ValueError(f"unknown scheme {self.scheme!r}")
        if self.innovation not in ("gaussian", "skewed"):
            raise ValueError(f"unknown innovation {self.innovation!r}")
        if self.record not in ("final", "full"):
            raise ValueError(f"unknown record mode {self.record!r}")
        if self.antithetic and self.paths % 2:
            raise ValueError("antithetic sampling needs an even path count")

    @property
    def steps(self) -> int:
        return int(round(self.horizon / self.dt))


@dataclass(frozen=True)
class LambdaDynamics:
    """Mean-reverting multiplicative vol-of-vol scale (OU in logs)."""

    k_lambda: float
    sigma_lambda: float
    lam_inf: float = 1.0
    lam0: float = 1.0

    def __post_init__(self):
        if self.k_lambda <= 0 or self.sigma_lambda < 0:
            raise ValueError("need k_lambda > 0 and sigma_lambda >= 0")
        if self.lam_inf <= 0 or self.lam0 <= 0:
            raise ValueError("lambda levels must be positive")


def standardized_innovation_sampler(zeta: float, kappa: float):
    """Return a map N(0,1) draws -> standardized draws with target (zeta, kappa).

    Uses a Johnson-SU fit matched to the target skew and excess kurtosis
    (exact moments); the Gaussian case short-circuits to the identity.
    """
    if zeta == 0.0 and kappa == 0.0:
        return lambda z: z
    if kappa <= 0.0:
        raise ValueError("Johnson-SU matching needs positive excess kurtosis")

    def eqs(p):
        a, logb = p
        _, _, s, k = stats.johnsonsu.stats(a, np.exp(logb), moments="mvsk")
        return [s - zeta, k - kappa]

    sol = optimize.fsolve(eqs, x0=[-np.sign(zeta) * 0.5, np.log(2.0)], full_output=True)
    (a, logb), info, ok, msg = sol
    if ok != 1 or max(abs(np.asarray(info["fvec"]))) > 1e-9:
        raise RuntimeError(f"Johnson-SU moment match failed for "
                           f"(zeta={zeta}, kappa={kappa}): {msg}")
    b = float(np.exp(logb))
    m, v = stats.johnsonsu.stats(a, b, moments="mv")
    scale = 1.0 / np.sqrt(float(v))

    def sampler(z):
        return (np.sinh((z - a) / b) - float(m)) * scale

    return sampler


@dataclass
class SimResult:
    """Simulated ensemble with enough state to rebuild any curve point."""

    config: SimConfig
    params: ModelParams
    curve0: VarianceCurve
    fit: NonlinearFit | None
    times: np.ndarray
    x_final: np.ndarray            # (paths, n) factor accumulators at horizon
    y_final: np.ndarray            # (paths, n, n) decay accumulators at horizon
    spot: np.ndarray | None = None       # (paths, steps+1)
    xi_spot: np.ndarray | None = None    # (paths, steps+1) instantaneous variance
    dzbar: np.ndarray | None = None      # (paths, steps)
    dwbar: np.ndarray | None = None      # (paths, steps, n)
    dw: np.ndarray | None = None         # (paths, steps, n) raw increments
    x_series: np.ndarray | None = None   # (paths, steps+1, n)
    y_series: np.ndarray | None = None   # (paths, steps+1, n, n)
    lam: np.ndarray | None = None        # (paths, steps+1)
    theta_eff: np.ndarray = field(default=None)

    def xi_at(self, step: int, taus) -> np.ndarray:
        """xi_t^{t+tau} across paths at time-step ``step``; shape (paths, len(taus))."""
        taus = np.atleast_1d(np.asarray(taus, dtype=float))
        if self.x_series is not None:
            x = self.x_series[:, step]
            y = self.y_series[:, step]
        elif step == self.config.steps:
            x, y = self.x_final, self.y_final
        else:
            raise ValueError("per-step state not recorded; rerun with record='full'")
        t = self.times[step]
        base = self.curve0.xi(t + taus)[None, :]
        k = self.params.k
        decay = np.exp(-np.multiply.outer(taus, k))          # (m, n)
        drift_kernel = np.exp(-np.multiply.outer(taus, k[:, None] + k[None, :]))
        omega = np.outer(self.theta_eff, self.theta_eff) * self.params.rho
        if self.config.scheme == "linear":
            shock = 1.0 + np.einsum("a,ma,pa->pm", self.theta_eff, decay, x)
            return base * np.maximum(shock, 1e-12)
        log_shock = (np.einsum("a,ma,pa->pm", self.theta_eff, decay, x)
                     - 0.5 * np.einsum("ab,mab,pab->pm", omega, drift_kernel, y))
        return base * np.exp(log_shock)

    def step_of(self, t: float) -> int:
        step = int(round(t / self.config.dt))
        if not 0 <= step <= self.config.steps:
            raise ValueError(f"time {t} outside simulated horizon")
        return step


def _correlated_u(rng, half: int, corr: np.ndarray, antithetic: bool) -> np.ndarray:
    z = rng.standard_normal((half, corr.shape[0]))
    if antithetic:
        z = np.vstack([z, -z])
    return z @ np.linalg.cholesky(corr).T


def simulate(curve0: VarianceCurve, params: ModelParams, config: SimConfig,
             fit: NonlinearFit | None = None,
             volofvol: LambdaDynamics | None = None) -> SimResult:
    """Simulate the joint spot/curve system day by day.

    Per step: the curve moves lognormally under the factor shocks (exact
    scheme keeps it a positive martingale when drifts are off); the spot
    realizes r = sqrt(xi_t^t) dZ. With ``fit`` supplied the factor shocks
    are the quadratic functional of the spot innovation plus exogenous
    noise; with ``volofvol`` the factor vols carry sqrt(lam_t/lam_inf).
    """
    cfg = config
    n = params.n
    steps = cfg.steps
    dt = cfg.dt
    sq = np.sqrt(dt)
    # independent deterministic child streams: enabling the lambda layer
    # must not perturb the base factor draws
    children = np.random.SeedSequence(cfg.seed).spawn(2)
    rng = np.random.default_rng(children[0])
    rng_lam = np.random.default_rng(children[1])
    half = cfg.paths // 2 if cfg.antithetic else cfg.paths

    theta_eff = params.theta * cfg.lambda_scale
    omega_eff = np.outer(theta_eff, theta_eff) * params.rho
    decay_step = np.exp(-params.k * dt)
    decay_pair = np.exp(-(params.k[:, None] + params.k[None, :]) * dt)
    tri = params.tri
    mu_u = params.mu if cfg.real_measure else np.zeros(n)
    mu_w_step = sq * (tri @ mu_u)    # per-step drift of raw dW

    innovate = standardized_innovation_sampler(cfg.zeta, cfg.kappa) \
        if cfg.innovation == "skewed" else (lambda z: z)

    full = cfg.record == "full"
    x = np.zeros((cfg.paths, n))
    y = np.zeros((cfg.paths, n, n))
    spot = np.ones(cfg.paths)
    lam_state = None
    if volofvol is not None:
        lam_state = np.full(cfg.paths, volofvol.lam0)

    if full:
        spot_series = np.empty((cfg.paths, steps + 1))
        xi_series = np.empty((cfg.paths, steps + 1))
        dzbar_series = np.empty((cfg.paths, steps))
        dwbar_series = np.empty((cfg.paths, steps, n))
        dw_series = np.empty((cfg.paths, steps, n))
        x_series = np.empty((cfg.paths, steps + 1, n))
        y_series = np.empty((cfg.paths, steps + 1, n, n))
        lam_series = np.empty((cfg.paths, steps + 1)) if volofvol else None
        spot_series[:, 0] = spot
        x_series[:, 0] = x
        y_series[:, 0] = y
        if volofvol:
            lam_series[:, 0] = lam_state

    base_xi0 = float(curve0.xi(0.0))
    times = np.arange(steps + 1) * dt

    for step in range(steps):
        t = times[step]
        xi_tt = _xi_now(curve0, params, theta_eff, omega_eff, cfg.scheme, t, x, y)
        if full:
            xi_series[:, step] = xi_tt

        zn = rng.standard_normal(half)
        if cfg.antithetic:
            zn = np.concatenate([zn, -zn])
        dzbar = innovate(zn)

        if fit is not None:
            un = rng.standard_normal((half, n))
            if cfg.antithetic:
                un = np.vstack([un, -un])
            u = un @ np.linalg.cholesky(fit.u_corr).T
            dwbar = fit.f(dzbar).T + fit.gamma[None, :] * u
            dw = mu_w_step[None, :] + sq * dwbar
        else:
            un = rng.standard_normal((half, n))
            if cfg.antithetic:
                un = np.vstack([un, -un])
            u = (mu_u[None, :] + un) @ tri.T
            dw = sq * u
            dwbar = (dw - mu_w_step[None, :]) / sq

        if volofvol is not None:
            scale = np.sqrt(lam_state / volofvol.lam_inf)
            zl = rng_lam.standard_normal(half)
            if cfg.antithetic:
                zl = np.concatenate([zl, -zl])
            phi = np.exp(-volofvol.k_lambda * dt)
            stat_sd = volofvol.sigma_lambda * np.sqrt(-np.expm1(-2 * volofvol.k_lambda * dt)
                                                      / (2 * volofvol.k_lambda))
            log_lam = (np.log(volofvol.lam_inf)
                       + phi * (np.log(lam_state) - np.log(volofvol.lam_inf))
                       + stat_sd * zl)
            new_lam = np.exp(log_lam)
        else:
            scale = 1.0

        dz = cfg.mu_z * dt + cfg.sigma_z * sq * dzbar if cfg.real_measure else sq * dzbar
        spot = spot * (1.0 + np.sqrt(xi_tt) * dz)

        scaled_dw = dw * (scale[:, None] if volofvol is not None else 1.0)
        x = decay_step[None, :] * (x + scaled_dw)
        lam_ratio = (lam_state / volofvol.lam_inf)[:, None, None] if volofvol is not None else 1.0
        y = decay_pair[None, :, :] * (y + lam_ratio * dt)

        if volofvol is not None:
            lam_state = new_lam

        if full:
            spot_series[:, step + 1] = spot
            dzbar_series[:, step] = dzbar
            dwbar_series[:, step] = dwbar
            dw_series[:, step] = scaled_dw
            x_series[:, step + 1] = x
            y_series[:, step + 1] = y
            if volofvol:
                lam_series[:, step + 1] = lam_state

    result = SimResult(
        config=cfg, params=params, curve0=curve0, fit=fit, times=times,
        x_final=x, y_final=y, theta_eff=theta_eff)
    if full:
        xi_series[:, steps] = _xi_now(curve0, params, theta_eff, omega_eff,
                                      cfg.scheme, times[steps], x, y)
        result.spot = spot_series
        result.xi_spot = xi_series
        result.dzbar = dzbar_series
        result.dwbar = dwbar_series
        result.dw = dw_series
        result.x_series = x_series
        result.y_series = y_series
        result.lam = lam_series
    return result


def _xi_now(curve0, params, theta_eff, omega_eff, scheme, t, x, y) -> np.ndarray:
    base = float(curve0.xi(t))
    if scheme == "linear":
        return base * np.maximum(1.0 + x @ theta_eff, 1e-12)
    log_shock = x @ theta_eff - 0.5 * np.einsum("ab,pab->p", omega_eff, y)
    return base * np.exp(log_shock)


def _pair_stats(values: np.ndarray, antithetic: bool) -> tuple[float, float]:
    """Mean and standard error; antithetic pairs are averaged first."""
    if antithetic:
        half = values.shape[0] // 2
        values = 0.5 * (values[:half] + values[half:])
    mean = float(values.mean())
    se = float(values.std(ddof=1) / np.sqrt(values.shape[0]))
    return mean, se


def mc_vix_future(result: SimResult, t1: float, t2: float | None = None
                  ) -> tuple[float, float]:
    """Sample mean and SE of sqrt(mean of xi_{T1} over the window)."""
    if t2 is None:
        t2 = t1 + VIX_WINDOW_YEARS
    step = result.step_of(t1)
    if abs(result.times[step] - t1) > 1e-9:
        raise ValueError("t1 must align with the simulation grid")
    mid = 0.5 * (t1 + t2) - t1
    halfw = 0.5 * (t2 - t1)
    taus = mid + halfw * _GL_NODES
    weights = halfw * _GL_WEIGHTS / (t2 - t1)
    xi = result.xi_at(step, taus)
    payoff = np.sqrt(xi @ weights)
    return _pair_stats(payoff, result.config.antithetic)


def mc_future_realized_vol(result: SimResult, t1: float,
                           t2: float | None = None):
    """Per-step realized vol of a simulated future with expiry t1.

    Returns (times_to_expiry, vols, ses): at each step the cross-path rms
    of the one-day relative mark move, annualized.
    """
    if result.spot is None:
        raise ValueError("needs record='full'")
    if t2 is None:
        t2 = t1 + VIX_WINDOW_YEARS
    last = result.step_of(t1)
    dtv = result.config.dt
    marks = np.empty((result.config.paths, last + 1))
    for step in range(last + 1):
        t = result.times[step]
        lo, hi = t1 - t, t2 - t
        mid, halfw = 0.5 * (lo + hi), 0.5 * (hi - lo)
        taus = mid + halfw * _GL_NODES
        weights = halfw * _GL_WEIGHTS / (hi - lo)
        marks[:, step] = np.sqrt(result.xi_at(step, taus) @ weights)
    rel = np.diff(marks, axis=1) / marks[:, :-1]
    taus_to_exp = t1 - result.times[:last]
    sq = rel**2 / dtv
    vols = np.sqrt(sq.mean(axis=0))
    se_msq = sq.std(axis=0, ddof=1) / np.sqrt(sq.shape[0])
    ses = se_msq / (2.0 * vols)
    return taus_to_exp, vols, ses


def mc_leverage(result: SimResult, lag_steps: int) -> tuple[float, float]:
    """Conditional leverage correlation at a lag of ``lag_steps`` days.

    Standardizes today's return by the current instantaneous variance and
    the lagged squared return by the time-t forward variance point, so the
    estimator targets the model's conditional covariance (the persistent
    variance level drops out).
    """
    return _lagged_moment(result, lag_steps, power=1)


def mc_clustering(result: SimResult, lag_steps: int) -> tuple[float, float]:
    """Conditional volatility-clustering correlation at a lag (days)."""
    return _lagged_moment(result, lag_steps, power=2)


def _lagged_moment(result: SimResult, lag: int, power: int):
    if result.spot is None or result.x_series is None:
        raise ValueError("needs record='full'")
    cfg = result.config
    dtv = cfg.dt
    steps = cfg.steps
    if lag >= steps:
        raise ValueError("lag exceeds the simulated horizon")
    r = np.diff(result.spot, axis=1) / result.spot[:, :-1]
    z1 = r[:, :steps - lag] / np.sqrt(result.xi_spot[:, :steps - lag] * dtv)
    fwd = np.empty((cfg.paths, steps - lag))
    for t in range(steps - lag):
        fwd[:, t] = result.xi_at(t, np.array([lag * dtv]))[:, 0]
    z2f = r[:, lag:] ** 2 / (fwd * dtv) - 1.0
    x = z1 if power == 1 else z1**2 - 1.0
    per_path = (x * z2f).mean(axis=1)
    if cfg.antithetic:
        half = cfg.paths // 2
        per_path = 0.5 * (per_path[:half] + per_path[half:])
    value = float(per_path.mean())
    se = float(per_path.std(ddof=1) / np.sqrt(per_path.size))
    return value, se


def mc_realized_skewness(result: SimResult, t: float) -> tuple[float, float]:
    """Sample skew of log S_T/S_0 with a jackknife-free moment-based SE."""
    if result.spot is None:
        raise ValueError("needs record='full'")
    step = result.step_of(t)
    logret = np.log(result.spot[:, step] / result.spot[:, 0])
    x = logret - logret.mean()
    skew = (x**3).mean() / (x**2).mean() ** 1.5

    # block SE: antithetic mates must share a block to stay independent
    blocks = 40
    if result.config.antithetic:
        half = x.size // 2
        pairs = np.stack([x[:half], x[half:]], axis=1)
        chunks = np.array_split(pairs, blocks)
        chunks = [c.ravel() for c in chunks]
    else:
        chunks = np.array_split(x, blocks)
    vals = [(c**3).mean() / (c**2).mean() ** 1.5 for c in chunks]
    se = np.std(vals, ddof=1) / np.sqrt(len(vals))
    return float(skew), float(se)


def mc_implied_vols(result: SimResult, t: float, strikes_rel) -> dict:
    """Implied vols of MC call prices at relative strikes; shares paths.

    Prices outside the arbitrage bounds (MC noise) are skipped and counted.
    """
    if result.spot is None:
        raise ValueError("needs record='full'")
    step = result.step_of(t)
    s_t = result.spot[:, step]
    out = {"strikes": [], "vol": [], "se": [], "skipped": 0}
    for krel in np.atleast_1d(strikes_rel):
        payoff = np.maximum(s_t - krel, 0.0)
        price, pse = _pair_stats(payoff, result.config.antithetic)
        try:
            vol = blackscholes.implied_vol(price, 1.0, float(krel), t)
        except ValueError:
            out["skipped"] += 1
            continue
        vol_se = pse / max(blackscholes.vega(1.0, float(krel), t, vol), 1e-12)
        out["strikes"].append(float(krel))
        out["vol"].append(vol)
        out["se"].append(vol_se)
    return out


def mc_varswap_variance(result: SimResult, t2: float,
                        normalization: str = "anchor") -> tuple[float, float]:
    """Realized (1/dT) sum (dV/V)^2 of the variance-swap mark-to-market.

    The swap runs over [0, t2]; the mark combines accrued realized
    variance with the remaining implied window integral off the simulated
    curve. With ``normalization="anchor"`` the moves are measured against
    the inception mark (the flat-term-structure convention the closed-form
    decomposition is derived under); ``"running"`` divides by the running
    mark and picks up an O(1/N) inflation from its realized noise.
    """
    if result.spot is None:
        raise ValueError("needs record='full'")
    last = result.step_of(t2)
    dtv = result.config.dt
    r = np.diff(result.spot[:, :last + 1], axis=1) / result.spot[:, :last]
    accrued = np.concatenate([np.zeros((r.shape[0], 1)), np.cumsum(r**2, axis=1)],
                             axis=1)
    marks = np.empty((r.shape[0], last + 1))
    for step in range(last + 1):
        t = result.times[step]
        rem = t2 - t
        if rem <= 1e-12:
            implied = 0.0
        else:
            mid, halfw = 0.5 * rem, 0.5 * rem
            taus = mid + halfw * _GL_NODES
            implied = result.xi_at(step, taus) @ (halfw * _GL_WEIGHTS)
        marks[:, step] = (accrued[:, step] + implied) / t2
    if normalization == "anchor":
        rel = np.diff(marks, axis=1) / marks[:, :1]
    elif normalization == "running":
        rel = np.diff(marks, axis=1) / marks[:, :-1]
    else:
        raise ValueError(f"unknown normalization {normalization!r}")
    per_path = (rel**2).sum(axis=1) / t2
    return _pair_stats(per_path, result.config.antithetic)


def mc_estimators(result: SimResult, targets: dict) -> dict:
    """Dispatch a batch of estimator requests; each entry gets (value, se).

    Supported keys: ``vix_future`` (t1), ``implied_vol`` (t, strikes),
    ``skewness`` (t), ``leverage``/``clustering`` (lag_steps list),
    ``varswap`` (t2).
    """
    report: dict = {}
    for name, spec in targets.items():
        if name == "vix_future":
            report[name] = mc_vix_future(result, **spec)
        elif name == "implied_vol":
            report[name] = mc_implied_vols(result, **spec)
        elif name == "skewness":
            report[name] = mc_realized_skewness(result, **spec)
        elif name == "leverage":
            report[name] = {lag: mc_leverage(result, lag) for lag in spec["lags"]}
        elif name == "clustering":
            report[name] = {lag: mc_clustering(result, lag) for lag in spec["lags"]}
        elif name == "varswap":
            report[name] = mc_varswap_variance(result, **spec)
        else:
            raise KeyError(f"unknown estimator {name!r}")
    return report


def dump_paths(result: SimResult, path, tenor_grid) -> None:
    """Binary per-path dump (little-endian).

    Header: magic ``b'VDMC'``, uint64 paths, uint64 steps+1, uint64 grid
    size, grid tenors as float64. Body: per path, row-major float64 rows
    ``[spot, xi(tenor_0), ..., xi(tenor_{m-1})]`` for each recorded step.
    """
    if result.spot is None:
        raise ValueError("needs record='full'")
    grid = np.asarray(tenor_grid, dtype="<f8")
    steps = result.config.steps
    with open(path, "wb") as fh:
        fh.write(b"VDMC")
        fh.write(struct.pack("<QQQ", result.config.paths, steps + 1, grid.size))
        fh.write(grid.tobytes())
        for step in range(steps + 1):
            xi = result.xi_at(step, grid)
            block = np.concatenate([result.spot[:, step:step + 1], xi], axis=1)
            fh.write(block.astype("<f8").tobytes())
