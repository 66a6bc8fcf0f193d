"""Iterative calibration of the factor model to daily futures variations.

The loop alternates three steps until the total log-likelihood settles:

1. *Modeling*: given the current parameter set, extract a smooth variance
   curve per day by inverting the pricing equation for each quote.
2. *Expectation*: compute the kernel-weighted window integrals, i.e. the
   loading matrices M_t(i, a) = (1/2) (K_t^{Ti,a} / V_t^{Ti})^2.
3. *Maximisation*: with the decay speeds pinned to a spanning grid,
   maximize the marginalized likelihood of the observed daily variations
   over (theta_F, theta_S, rho, mu) at every grid point; keep the argmax.

The per-day likelihood marginalizes the latent factor increments in
closed form (the joint density is a product of Gaussians), and the same
posterior yields the MAP factor extraction afterwards.
"""

from __future__ import annotations

import datetime as dt
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import minimize

from .curves import DEFAULT_KNOTS, VarianceCurve, fit_curve
from .market_data import TRADING_DAYS, ObservationSet, SpotSeries, VIX_WINDOW_DAYS
from .model import ModelParams

__all__ = [
    "CalibrationConfig",
    "CalibrationWorkspace",
    "CalibrationResult",
    "CalibrationError",
    "FactorSeries",
    "day_loglik",
    "calibrate",
    "extract_factors",
    "fit_day_curves",
]

_DT = 1.0 / TRADING_DAYS
_LOG2PI = np.log(2.0 * np.pi)


class CalibrationError(RuntimeError):
    """Calibration failed; carries the best iterate and diagnostics."""

    def __init__(self, message, best=None, diagnostics=None):
        super().__init__(message)
        self.best = best
        self.diagnostics = diagnostics


@dataclass(frozen=True)
class CalibrationConfig:
    """Grids, tolerances and priors of the calibration loop."""

    k_fast_grid: tuple = tuple(float(v) for v in np.arange(5.0, 16.5, 1.0))
    k_slow_grid: tuple = tuple(float(v) for v in np.round(np.arange(0.3, 1.65, 0.1), 10))
    max_outer: int = 10
    rel_tol: float = 1e-6
    restarts: int = 5
    seed: int = 0
    theta0: tuple = (1.2, 0.7)
    smoothness_weight: float = 1e-5
    vix_cash_rel_noise: float = 0.01   # level-noise equivalent of the cash anchor
    n_factors: int = 2                 # 1/3-factor modes exist but overfit easily
    max_tenor: float = 1.0

    def __post_init__(self):
        if self.n_factors not in (1, 2, 3):
            raise ValueError("n_factors must be 1, 2 or 3")


@dataclass(frozen=True)
class CalibrationWorkspace:
    """One day-pair of the variation likelihood.

    ``loadings`` is M_t, ``error_vols`` the diagonal of D_t, ``variation``
    the observed relative quote moves between the paired days.
    """

    date: dt.date
    loadings: np.ndarray     # (m, n)
    error_vols: np.ndarray   # (m,)
    variation: np.ndarray    # (m,)

    def __post_init__(self):
        m, n = self.loadings.shape
        if self.error_vols.shape != (m,) or self.variation.shape != (m,):
            raise ValueError("inconsistent workspace dimensions")
        if np.any(self.loadings <= 0):
            raise ValueError("loadings must be positive")
        if np.any(self.error_vols <= 0):
            raise ValueError("error vols must be positive")


def day_loglik(ws: CalibrationWorkspace, params: ModelParams,
               dt_step: float = _DT) -> float:
    """Exact log density of one day's variation vector.

    Marginalizes the factor increments in closed form:

        log p(y) = -1/2 [ m log 2pi + log|D^2| + log|A| + y^T D^-2 y
                          + mu^T mu - J^T A^-1 J ]

    with A = I + sqrtOmega^T M^T D^-2 M sqrtOmega dt and
    J = mu + sqrtOmega^T M^T D^-2 y sqrt(dt). Matches brute-force
    quadrature marginalization including constants.
    """
    m = ws.variation.size
    sqrt_omega = params.sqrt_omega
    d2inv = 1.0 / ws.error_vols**2
    ms = ws.loadings @ sqrt_omega                      # (m, n)
    a_mat = np.eye(params.n) + (ms.T * d2inv) @ ms * dt_step
    j_vec = params.mu + ms.T @ (d2inv * ws.variation) * np.sqrt(dt_step)
    sign, logdet_a = np.linalg.slogdet(a_mat)
    if sign <= 0:
        raise np.linalg.LinAlgError("non-PSD inner matrix; check error vols")
    quad = ws.variation @ (d2inv * ws.variation) + params.mu @ params.mu \
        - j_vec @ np.linalg.solve(a_mat, j_vec)
    logdet_d2 = 2.0 * np.sum(np.log(ws.error_vols))
    return float(-0.5 * (m * _LOG2PI + logdet_d2 + logdet_a + quad))


def _posterior_mean(ws: CalibrationWorkspace, params: ModelParams,
                    dt_step: float = _DT) -> np.ndarray:
    """MAP (= posterior mean) of the day's raw factor increments dW."""
    sqrt_omega = params.sqrt_omega
    d2inv = 1.0 / ws.error_vols**2
    ms = ws.loadings @ sqrt_omega
    a_mat = np.eye(params.n) + (ms.T * d2inv) @ ms * dt_step
    j_vec = params.mu + ms.T @ (d2inv * ws.variation) * np.sqrt(dt_step)
    u_hat = np.linalg.solve(a_mat, j_vec)
    return np.sqrt(dt_step) * params.tri @ u_hat


# ---------------------------------------------------------------------------
# curve extraction (modeling step)
# ---------------------------------------------------------------------------

def _window_tenors(obs, calendar):
    """Trading-time (t1, t2) per future plus the cash window, for one day."""
    rows = []
    for q in obs.futures:
        t1 = calendar.year_fraction(obs.date, q.expiry)
        n_ret = calendar.count_window(q.expiry,
                                      q.expiry + dt.timedelta(days=VIX_WINDOW_DAYS))
        rows.append((t1, t1 + n_ret / TRADING_DAYS))
    cash = None
    if obs.vix_cash is not None:
        n_ret = calendar.count_window(obs.date,
                                      obs.date + dt.timedelta(days=VIX_WINDOW_DAYS))
        cash = (0.0, n_ret / TRADING_DAYS)
    return rows, cash


def _convexity_from_cache(params, t1, ksq_by_factor, ksq_total):
    total = 0.0
    omega = params.omega
    for a in range(params.n):
        for b in range(params.n):
            kk = params.k[a] + params.k[b]
            total += omega[a, b] / 8.0 * np.expm1(kk * t1) / kk \
                * ksq_by_factor[a] * ksq_by_factor[b] / ksq_total**2
    return total


def fit_day_curve(obs, params: ModelParams, calendar, config: CalibrationConfig,
                  initial: VarianceCurve | None = None) -> VarianceCurve:
    """Invert the pricing equation for one day's quotes into a curve."""
    windows, cash_window = _window_tenors(obs, calendar)
    curve = initial

    for _ in range(2):  # quote -> strike conversion, then one convexity refresh
        targets = []
        for (t1, t2), q in zip(windows, obs.futures):
            if curve is None:
                cc = 0.0
            else:
                ksq_a = [curve.mean_variance(t1, t2, decay=ka) for ka in params.k]
                cc = _convexity_from_cache(params, t1, ksq_a,
                                           curve.mean_variance(t1, t2))
            level_noise = q.liquidity_sigma / np.sqrt(2.0)
            weight = 1.0 / (q.price * level_noise) ** 2
            targets.append((t1, t2, q.price / (1.0 - cc), weight))
        if cash_window is not None and obs.vix_cash is not None:
            weight = 1.0 / (obs.vix_cash * config.vix_cash_rel_noise) ** 2
            targets.append((*cash_window, obs.vix_cash, weight))
        curve = fit_curve(targets, smoothness_weight=config.smoothness_weight,
                          anchor_date=obs.date, max_tenor=config.max_tenor,
                          initial=initial)
    return curve


def fit_day_curves(observations: ObservationSet, params: ModelParams,
                   config: CalibrationConfig) -> list[VarianceCurve]:
    """Modeling step over all days; warm-starts each day from the previous."""
    curves = []
    prev = None
    for obs in observations:
        prev = fit_day_curve(obs, params, observations.calendar, config, initial=prev)
        curves.append(prev)
    return curves


# ---------------------------------------------------------------------------
# expectation step: cached window integrals and workspaces
# ---------------------------------------------------------------------------

_N_NODES = 24
_NODES, _WEIGHTS = np.polynomial.legendre.leggauss(_N_NODES)


@dataclass
class _DayCache:
    date: dt.date
    expiries: tuple
    t1: np.ndarray          # (m,)
    xi_nodes: np.ndarray    # (m, q) curve values at quadrature nodes
    u_nodes: np.ndarray     # (m, q) node tenors
    w_nodes: np.ndarray     # (m, q) weights including the 1/(t2-t1) factor
    error_vols: np.ndarray  # (m,)
    quotes: np.ndarray      # (m,)
    xi_spot: float


def _build_caches(observations, curves, calendar) -> list[_DayCache]:
    caches = []
    for obs, curve in zip(observations, curves):
        windows, _ = _window_tenors(obs, calendar)
        m = len(windows)
        t1 = np.array([w[0] for w in windows])
        t2 = np.array([w[1] for w in windows])
        mid = 0.5 * (t1 + t2)
        half = 0.5 * (t2 - t1)
        u = mid[:, None] + half[:, None] * _NODES[None, :]
        w = half[:, None] * _WEIGHTS[None, :] / (t2 - t1)[:, None]
        caches.append(_DayCache(
            date=obs.date, expiries=obs.expiries, t1=t1,
            xi_nodes=curve.xi(u), u_nodes=u, w_nodes=w,
            error_vols=np.array([q.liquidity_sigma for q in obs.futures]),
            quotes=np.array([q.price for q in obs.futures]),
            xi_spot=float(curve.xi(0.0))))
    return caches


def _build_workspaces(caches, params: ModelParams) -> list[CalibrationWorkspace]:
    """Pair consecutive days on common expiries and assemble M, D, y."""
    out = []
    k = params.k
    for today, nxt in zip(caches, caches[1:]):
        common = [i for i, e in enumerate(today.expiries) if e in nxt.expiries]
        if len(common) == 0:
            continue
        idx_next = [nxt.expiries.index(today.expiries[i]) for i in common]
        idx = np.array(common)
        ksq = np.einsum("mq,amq->ma", today.w_nodes * today.xi_nodes,
                        np.exp(-np.multiply.outer(k, today.u_nodes)))[idx]
        ksq_tot = np.einsum("mq,mq->m", today.w_nodes, today.xi_nodes)[idx]
        cc = np.array([
            _convexity_from_cache(params, today.t1[i], ksq[j], ksq_tot[j])
            for j, i in enumerate(idx)])
        model_price = np.sqrt(ksq_tot) * (1.0 - cc)
        loadings = 0.5 * ksq / model_price[:, None] ** 2
        variation = nxt.quotes[idx_next] / today.quotes[idx] - 1.0
        out.append(CalibrationWorkspace(
            date=today.date, loadings=loadings,
            error_vols=today.error_vols[idx], variation=variation))
    return out


class _FlatCache:
    """All days' window integrals flattened for fast per-grid-point work.

    Rebuilding the loadings at a new decay-speed grid point is then a
    handful of einsums over (rows, nodes) arrays instead of per-day loops.
    """

    def __init__(self, caches):
        self.xi = np.concatenate([c.xi_nodes for c in caches])    # (R, q)
        self.u = np.concatenate([c.u_nodes for c in caches])
        self.wxi = np.concatenate([c.w_nodes * c.xi_nodes for c in caches])
        self.t1 = np.concatenate([c.t1 for c in caches])
        self.err = np.concatenate([c.error_vols for c in caches])
        self.quote = np.concatenate([c.quotes for c in caches])
        self.ksq_tot = self.wxi.sum(axis=1)

        offsets = np.cumsum([0] + [len(c.expiries) for c in caches])
        groups: dict[int, list] = {}
        for d, (today, nxt) in enumerate(zip(caches, caches[1:])):
            common = [i for i, e in enumerate(today.expiries) if e in nxt.expiries]
            if not common:
                continue
            idx_next = [nxt.expiries.index(today.expiries[i]) for i in common]
            rows_t = offsets[d] + np.asarray(common)
            rows_n = offsets[d + 1] + np.asarray(idx_next)
            groups.setdefault(len(common), []).append((rows_t, rows_n, today.date))
        self.groups = {
            m: (np.stack([g[0] for g in lst]), np.stack([g[1] for g in lst]),
                [g[2] for g in lst])
            for m, lst in sorted(groups.items())}

    def loadings_for(self, params: ModelParams, k_vec: np.ndarray) -> np.ndarray:
        """Per-row loading vectors M(i, a) at the grid decay speeds."""
        ksq = np.einsum("rq,arq->ra", self.wxi,
                        np.exp(-np.multiply.outer(k_vec, self.u)))
        omega = np.outer(params.theta, params.theta) * params.rho
        cc = np.zeros(self.t1.size)
        for a in range(k_vec.size):
            for b in range(k_vec.size):
                kk = k_vec[a] + k_vec[b]
                cc += omega[a, b] / 8.0 * np.expm1(kk * self.t1) / kk \
                    * ksq[:, a] * ksq[:, b] / self.ksq_tot**2
        price = np.sqrt(self.ksq_tot) * (1.0 - cc)
        return 0.5 * ksq / price[:, None] ** 2


# ---------------------------------------------------------------------------
# maximisation step: batched likelihood and the (theta, rho, mu) optimizer
# ---------------------------------------------------------------------------

class _BatchedLikelihood:
    """Total variation log-likelihood, vectorized across day-pairs."""

    def __init__(self, workspaces: list[CalibrationWorkspace], n: int,
                 dt_step: float = _DT):
        self.n = n
        self.dt = dt_step
        self.groups = []
        by_m: dict[int, list[CalibrationWorkspace]] = {}
        for ws in workspaces:
            by_m.setdefault(ws.variation.size, []).append(ws)
        self.const = 0.0
        for m, group in sorted(by_m.items()):
            mats = np.stack([ws.loadings for ws in group])       # (d, m, n)
            d2inv = np.stack([1.0 / ws.error_vols**2 for ws in group])
            y = np.stack([ws.variation for ws in group])
            self._add_group(m, mats, d2inv, y)

    def _add_group(self, m, mats, d2inv, y):
        p_mat = np.einsum("dma,dm,dmb->dab", mats, d2inv, mats)
        q_vec = np.einsum("dma,dm,dm->da", mats, d2inv, y)
        c_quad = np.einsum("dm,dm,dm->d", y, d2inv, y)
        logdet_d2 = -np.log(d2inv).sum(axis=1)
        self.const += float(np.sum(m * _LOG2PI + logdet_d2 + c_quad))
        self.groups.append((p_mat, q_vec))

    def _call_two_factor(self, s_mat: np.ndarray, mu: np.ndarray) -> float:
        """Closed-form n=2 evaluation; s_mat is lower-triangular."""
        s00, s10, s11 = s_mat[0, 0], s_mat[1, 0], s_mat[1, 1]
        sq = np.sqrt(self.dt)
        total = -0.5 * self.const
        for p_mat, q_vec in self.groups:
            p00, p01, p11 = p_mat[:, 0, 0], p_mat[:, 0, 1], p_mat[:, 1, 1]
            b00 = s00 * s00 * p00 + 2.0 * s00 * s10 * p01 + s10 * s10 * p11
            b01 = s11 * (s00 * p01 + s10 * p11)
            b11 = s11 * s11 * p11
            a00 = 1.0 + self.dt * b00
            a01 = self.dt * b01
            a11 = 1.0 + self.dt * b11
            det = a00 * a11 - a01 * a01
            j0 = mu[0] + sq * (s00 * q_vec[:, 0] + s10 * q_vec[:, 1])
            j1 = mu[1] + sq * s11 * q_vec[:, 1]
            quad_j = (a11 * j0 * j0 - 2.0 * a01 * j0 * j1 + a00 * j1 * j1) / det
            total += -0.5 * float(np.sum(np.log(det) - quad_j)) \
                - 0.5 * det.size * float(mu @ mu)
        return total

    @classmethod
    def from_flat(cls, flat: "_FlatCache", loadings: np.ndarray, n: int,
                  dt_step: float = _DT) -> "_BatchedLikelihood":
        self = cls.__new__(cls)
        self.n = n
        self.dt = dt_step
        self.groups = []
        self.const = 0.0
        for m, (rows_t, rows_n, _dates) in flat.groups.items():
            mats = loadings[rows_t]
            d2inv = 1.0 / flat.err[rows_t] ** 2
            y = flat.quote[rows_n] / flat.quote[rows_t] - 1.0
            self._add_group(m, mats, d2inv, y)
        return self

    def __call__(self, sqrt_omega: np.ndarray, mu: np.ndarray) -> float:
        if self.n == 2:
            return self._call_two_factor(sqrt_omega, mu)
        total = -0.5 * self.const
        n = self.n
        sq = np.sqrt(self.dt)
        for p_mat, q_vec in self.groups:
            b = np.einsum("ca,dcb->dab", sqrt_omega,
                          np.einsum("dcb,be->dce", p_mat, sqrt_omega)) * self.dt
            a = b + np.eye(n)[None]
            j = mu[None, :] + q_vec @ sqrt_omega * sq
            if n == 1:
                det = a[:, 0, 0]
                quad_j = j[:, 0] ** 2 / det
                logdet = np.log(det)
            elif n == 2:
                det = a[:, 0, 0] * a[:, 1, 1] - a[:, 0, 1] * a[:, 1, 0]
                quad_j = (a[:, 1, 1] * j[:, 0]**2 - 2 * a[:, 0, 1] * j[:, 0] * j[:, 1]
                          + a[:, 0, 0] * j[:, 1]**2) / det
                logdet = np.log(det)
            else:
                sign, logdet = np.linalg.slogdet(a)
                quad_j = np.einsum("da,da->d", j, np.linalg.solve(a, j))
            total += -0.5 * float(np.sum(logdet - quad_j)) \
                - 0.5 * a.shape[0] * float(mu @ mu)
        return total


def _pack(theta, rho_offdiag, mu):
    return np.concatenate([theta, np.arctanh(rho_offdiag), mu])


def _unpack(x, n):
    theta = np.abs(x[:n])
    n_off = n * (n - 1) // 2
    rho = np.eye(n)
    vals = np.tanh(x[n:n + n_off])
    iu = np.triu_indices(n, 1)
    rho[iu] = vals
    rho[(iu[1], iu[0])] = vals
    mu = x[n + n_off:]
    return theta, rho, mu


def _mle_at_grid_point(like: _BatchedLikelihood, k: np.ndarray,
                       config: CalibrationConfig, rng, warm=None):
    n = k.size

    def negloglik(x):
        theta, rho, mu = _unpack(x, n)
        eig = np.linalg.eigvalsh(rho)
        if eig.min() < 1e-8:
            return 1e12
        tri = np.linalg.cholesky(rho)
        return -like(np.diag(theta) @ tri, mu)

    starts = []
    if warm is not None:
        starts.append(warm)
    theta0 = np.asarray(config.theta0[:n], dtype=float)
    for _ in range(config.restarts):
        theta = theta0 * np.exp(0.5 * rng.standard_normal(n))
        rho_off = rng.uniform(-0.3, 0.7, n * (n - 1) // 2)
        mu = rng.normal(0.0, 0.05, n)
        starts.append(_pack(theta, rho_off, mu))

    best_x, best_val = None, np.inf
    for x0 in starts:
        res = minimize(negloglik, x0, method="Nelder-Mead",
                       options={"maxiter": 300 * (n + 1), "xatol": 1e-4,
                                "fatol": 1e-4, "adaptive": True})
        if res.fun < best_val:
            best_x, best_val = res.x, res.fun
    theta, rho, mu = _unpack(best_x, n)
    return theta, rho, mu, -best_val, best_x


@dataclass
class CalibrationResult:
    params: ModelParams
    curves: list[VarianceCurve]
    loglik: float
    diagnostics: list[dict] = field(default_factory=list)
    outer_iterations: int = 0
    converged: bool = True

    def diagnostics_csv(self) -> str:
        header = "outer,k_fast,k_slow,theta_fast,theta_slow,rho,mu_fast,mu_slow,loglik"
        lines = [header]
        for row in self.diagnostics:
            lines.append(",".join(str(row[c]) for c in header.split(",")))
        return "\n".join(lines) + "\n"


def _grid_points(config: CalibrationConfig):
    if config.n_factors == 1:
        return [np.array([kf]) for kf in config.k_fast_grid]
    if config.n_factors == 2:
        return [np.array([kf, ks]) for kf in config.k_fast_grid
                for ks in config.k_slow_grid if kf > ks]
    mid = [3.0]
    return [np.array([kf, km, ks]) for kf in config.k_fast_grid for km in mid
            for ks in config.k_slow_grid if kf > km > ks]


def calibrate(observations: ObservationSet,
              config: CalibrationConfig | None = None,
              initial_params: ModelParams | None = None) -> CalibrationResult:
    """Run the three-step loop; returns parameters, curves and diagnostics.

    Raises :class:`CalibrationError` with the best iterate attached when
    the outer loop fails to converge or the data is degenerate.
    """
    config = config or CalibrationConfig()
    if len(observations) < 3:
        raise CalibrationError("need at least 3 observation days")
    n = config.n_factors

    if initial_params is None:
        k0 = np.array([np.median(config.k_fast_grid), np.median(config.k_slow_grid)][:n])
        if n == 3:
            k0 = np.array([np.median(config.k_fast_grid), 3.0, np.median(config.k_slow_grid)])
        params = ModelParams(k=np.sort(k0)[::-1],
                             theta=np.asarray(config.theta0[:n]),
                             rho=np.eye(n), mu=np.zeros(n))
    else:
        params = initial_params

    diagnostics: list[dict] = []
    prev_ll = -np.inf
    curves = None
    converged = False
    outer = 0
    for outer in range(1, config.max_outer + 1):
        rng = np.random.default_rng(config.seed)  # same restart draws per pass
        curves = fit_day_curves(observations, params, config)
        caches = _build_caches(observations, curves, observations.calendar)

        best = None
        flat = _FlatCache(caches)
        warm_by_ks: dict[float, np.ndarray] = {}
        for k_vec in _grid_points(config):
            like = _BatchedLikelihood.from_flat(flat, flat.loadings_for(params, k_vec), n)
            warm = warm_by_ks.get(round(float(k_vec[-1]), 6))
            theta, rho, mu, ll, x_opt = _mle_at_grid_point(like, k_vec, config,
                                                           rng, warm=warm)
            warm_by_ks[round(float(k_vec[-1]), 6)] = x_opt
            diagnostics.append({
                "outer": outer, "k_fast": float(k_vec[0]), "k_slow": float(k_vec[-1]),
                "theta_fast": float(theta[0]), "theta_slow": float(theta[-1]),
                "rho": float(rho[0, -1]), "mu_fast": float(mu[0]),
                "mu_slow": float(mu[-1]), "loglik": ll})
            if best is None or ll > best[0]:
                best = (ll, k_vec, theta, rho, mu)

        ll, k_vec, theta, rho, mu = best
        if np.all(theta < 1e-6):
            raise CalibrationError("degenerate data: flat quotes drive theta to 0",
                                   best=params, diagnostics=diagnostics)
        params = ModelParams(k=k_vec, theta=theta, rho=rho, mu=mu)
        # one-sided: converged once the total log-likelihood stops improving
        if prev_ll > -np.inf and ll - prev_ll <= config.rel_tol * abs(prev_ll):
            converged = True
            prev_ll = ll
            break
        prev_ll = ll

    result = CalibrationResult(params=params, curves=curves, loglik=prev_ll,
                               diagnostics=diagnostics, outer_iterations=outer,
                               converged=converged or config.max_outer == 1)
    if not result.converged and outer >= config.max_outer:
        raise CalibrationError(
            f"no convergence after {config.max_outer} outer iterations",
            best=result, diagnostics=diagnostics)
    return result


# ---------------------------------------------------------------------------
# factor extraction
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class FactorSeries:
    """Daily latent factor increments and the normalized spot factor.

    ``dw`` has shape (T, n); ``dz`` is r_t / sqrt(xi_t^t) in sqrt-year
    units. Normalized series subtract the in-sample trend and scale by the
    in-sample vol, so they have mean 0 and variance dt by construction.
    """

    dates: tuple
    dw: np.ndarray
    dz: np.ndarray
    dzbar: np.ndarray
    dwbar: np.ndarray
    mu_z: float
    sigma_z: float
    mu_w: np.ndarray
    sigma_w: np.ndarray
    zeta_z: float
    kappa_z: float

    def __post_init__(self):
        if self.dw.shape[0] != len(self.dates) or self.dz.size != len(self.dates):
            raise ValueError("inconsistent series lengths")


def extract_factors(observations: ObservationSet, curves: list[VarianceCurve],
                    params: ModelParams, spot: SpotSeries) -> FactorSeries:
    """MAP extraction of daily factor increments plus the spot factor."""
    caches = _build_caches(observations, curves, observations.calendar)
    workspaces = _build_workspaces(caches, params)
    by_date = {ws.date: ws for ws in workspaces}
    spot_ret = {d: r for d, r in zip(spot.dates[:-1], spot.returns)}
    xi_by_date = {c.date: c.xi_spot for c in caches}

    dates, dw_rows, dz_rows = [], [], []
    for obs, nxt in zip(observations.observations, observations.observations[1:]):
        ws = by_date.get(obs.date)
        if ws is None or obs.date not in spot_ret:
            continue
        dates.append(obs.date)
        dw_rows.append(_posterior_mean(ws, params))
        dz_rows.append(spot_ret[obs.date] / np.sqrt(xi_by_date[obs.date]))

    if len(dates) < 30:
        raise CalibrationError("too few extractable days")
    dw = np.vstack(dw_rows)
    dz = np.asarray(dz_rows)
    sq = np.sqrt(_DT)
    mu_z = float(dz.mean() / _DT)
    sigma_z = float(dz.std() / sq)
    dzbar = (dz - mu_z * _DT) / (sigma_z * sq)
    mu_w = dw.mean(axis=0) / _DT
    sigma_w = dw.std(axis=0) / sq
    dwbar = (dw - mu_w[None, :] * _DT) / (sigma_w[None, :] * sq)
    return FactorSeries(
        dates=tuple(dates), dw=dw, dz=dz, dzbar=dzbar, dwbar=dwbar,
        mu_z=mu_z, sigma_z=sigma_z, mu_w=mu_w, sigma_w=sigma_w,
        zeta_z=float(np.mean(dzbar**3)), kappa_z=float(np.mean(dzbar**4) - 3.0))
