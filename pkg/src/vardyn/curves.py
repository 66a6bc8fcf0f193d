"""Instantaneous forward-variance curves xi(tau) on a smooth basis.

A curve is ``xi(tau) = exp(sum_j c_j B_j(tau))`` with cubic B-splines B_j
on a fixed tenor knot grid; working in log space keeps the curve positive
by construction. Beyond the last knot the curve extends flat (the long
end is not identified by short-dated futures and should not be trusted).

Window integrals are evaluated with 16-point Gauss-Legendre per inter-knot
segment, which resolves exp(cubic) integrands to near machine precision.
"""

from __future__ import annotations

import datetime as dt
import json
from dataclasses import dataclass, field

import numpy as np
from scipy.interpolate import BSpline

__all__ = ["DEFAULT_KNOTS", "VarianceCurve", "VarStrike", "fit_curve", "CurveFitError"]

# tenor knots in years: {0, 2w, 1m, 2m, 3m, 4m, 5m, 6m, 8m}
DEFAULT_KNOTS = (0.0, 2 / 52, 1 / 12, 2 / 12, 3 / 12, 4 / 12, 5 / 12, 6 / 12, 8 / 12)
_DEGREE = 3

_GL_NODES, _GL_WEIGHTS = np.polynomial.legendre.leggauss(16)


class CurveFitError(RuntimeError):
    """Curve fit failed to converge; carries the best iterate found."""

    def __init__(self, message: str, best: "VarianceCurve | None" = None):
        super().__init__(message)
        self.best = best


def _knot_vector(knots: np.ndarray) -> np.ndarray:
    return np.concatenate([[knots[0]] * _DEGREE, knots, [knots[-1]] * _DEGREE])


def _n_basis(knots: np.ndarray) -> int:
    return len(knots) + _DEGREE - 1


@dataclass(frozen=True)
class VarianceCurve:
    """Forward-variance term structure anchored at ``anchor_date``.

    ``coeffs`` are log-variance spline coefficients; ``eval`` takes tenors
    in years (trading-time convention upstream, but the curve itself is
    agnostic).
    """

    coeffs: np.ndarray
    knots: tuple[float, ...] = DEFAULT_KNOTS
    anchor_date: dt.date | None = None
    max_tenor: float = 1.0

    def __post_init__(self):
        knots = np.asarray(self.knots, dtype=float)
        coeffs = np.asarray(self.coeffs, dtype=float)
        if coeffs.size != _n_basis(knots):
            raise ValueError(f"expected {_n_basis(knots)} coefficients, got {coeffs.size}")
        if self.max_tenor < knots[-1]:
            raise ValueError("max_tenor must cover the knot grid")
        object.__setattr__(self, "coeffs", coeffs)
        spline = BSpline(_knot_vector(knots), coeffs, _DEGREE, extrapolate=False)
        object.__setattr__(self, "_spline", spline)

    @classmethod
    def flat(cls, level: float, knots=DEFAULT_KNOTS, anchor_date=None,
             max_tenor: float = 1.0) -> "VarianceCurve":
        """Curve with xi(tau) = level everywhere."""
        if level <= 0:
            raise ValueError("variance level must be positive")
        n = _n_basis(np.asarray(knots, float))
        return cls(coeffs=np.full(n, np.log(level)), knots=tuple(knots),
                   anchor_date=anchor_date, max_tenor=max_tenor)

    def _check_domain(self, tau: np.ndarray):
        if np.any(tau < -1e-12) or np.any(tau > self.max_tenor + 1e-12):
            raise ValueError(
                f"tenor outside curve domain [0, {self.max_tenor}]: "
                f"[{tau.min()}, {tau.max()}]")

    def log_xi(self, tau):
        tau = np.asarray(tau, dtype=float)
        self._check_domain(tau)
        clipped = np.clip(tau, 0.0, self.knots[-1])  # flat beyond last knot
        return self._spline(clipped)

    def xi(self, tau):
        """Instantaneous variance at tenor ``tau`` (years)."""
        return np.exp(self.log_xi(tau))

    def __call__(self, tau):
        return self.xi(tau)

    def _segments(self, t1: float, t2: float) -> np.ndarray:
        cuts = np.asarray(self.knots)
        inner = cuts[(cuts > t1) & (cuts < t2)]
        return np.concatenate([[t1], inner, [t2]])

    def _quad_nodes(self, t1: float, t2: float):
        """Gauss-Legendre nodes/weights over [t1, t2], split at knots."""
        edges = self._segments(t1, t2)
        mid = 0.5 * (edges[1:] + edges[:-1])
        half = 0.5 * (edges[1:] - edges[:-1])
        nodes = (mid[:, None] + half[:, None] * _GL_NODES[None, :]).ravel()
        weights = (half[:, None] * _GL_WEIGHTS[None, :]).ravel()
        return nodes, weights

    def mean_variance(self, t1: float, t2: float, decay: float = 0.0) -> float:
        """(1/(t2-t1)) * int_t1^t2 xi(u) exp(-decay*u) du."""
        if not 0.0 <= t1 < t2:
            raise ValueError(f"need 0 <= t1 < t2, got [{t1}, {t2}]")
        self._check_domain(np.asarray([t2]))
        nodes, weights = self._quad_nodes(t1, t2)
        vals = self.xi(nodes)
        if decay != 0.0:
            vals = vals * np.exp(-decay * nodes)
        return float(np.dot(weights, vals) / (t2 - t1))

    def basis_mean(self, t1: float, t2: float, decay: float = 0.0) -> np.ndarray:
        """Gradient of mean_variance w.r.t. the log coefficients."""
        nodes, weights = self._quad_nodes(t1, t2)
        design = BSpline.design_matrix(
            np.clip(nodes, 0.0, self.knots[-1]), _knot_vector(np.asarray(self.knots)),
            _DEGREE).toarray()
        vals = self.xi(nodes)
        if decay != 0.0:
            vals = vals * np.exp(-decay * nodes)
        return (weights * vals) @ design / (t2 - t1)

    def to_json(self) -> str:
        return json.dumps({
            "anchor_date": self.anchor_date.isoformat() if self.anchor_date else None,
            "knots": list(self.knots),
            "log_coeffs": self.coeffs.tolist(),
            "max_tenor": self.max_tenor,
        })

    @classmethod
    def from_json(cls, text: str) -> "VarianceCurve":
        doc = json.loads(text)
        anchor = doc.get("anchor_date")
        return cls(coeffs=np.asarray(doc["log_coeffs"], float),
                   knots=tuple(doc["knots"]),
                   anchor_date=dt.date.fromisoformat(anchor) if anchor else None,
                   max_tenor=doc.get("max_tenor", 1.0))


@dataclass(frozen=True)
class VarStrike:
    """Forward-starting variance strike sqrt(mean xi) over [t1, t2]."""

    t1: float
    t2: float
    value: float

    def __post_init__(self):
        if self.value <= 0:
            raise ValueError("strike must be positive")


def forward_var_strike(curve: VarianceCurve, t1: float, t2: float) -> VarStrike:
    """K = sqrt((1/(t2-t1)) int xi du); K^2 lies between min and max of xi."""
    return VarStrike(t1, t2, float(np.sqrt(curve.mean_variance(t1, t2))))


def kernel_weighted_strike(curve: VarianceCurve, t1: float, t2: float,
                           decay: float) -> float:
    """sqrt((1/(t2-t1)) int xi(u) e^{-decay*u} du); <= plain strike for decay > 0."""
    if decay < 0:
        raise ValueError("kernel decay must be >= 0")
    return float(np.sqrt(curve.mean_variance(t1, t2, decay=decay)))


def _smoothness_gram(knots: np.ndarray, level: float) -> np.ndarray:
    """Gram matrix of int (d2/dtau2 log xi)^2, scaled by level^2.

    At a flat level ``xi'' = xi * (log xi)''``, so the scaled log-space
    penalty matches int (xi'')^2 at leading order while staying quadratic
    in the coefficients.
    """
    kv = _knot_vector(knots)
    n = _n_basis(knots)
    gram = np.zeros((n, n))
    nodes, weights = np.polynomial.legendre.leggauss(8)
    for a, b in zip(knots[:-1], knots[1:]):
        mid, half = 0.5 * (a + b), 0.5 * (b - a)
        xs = mid + half * nodes
        ws = half * weights
        d2 = np.empty((xs.size, n))
        for j in range(n):
            cj = np.zeros(n)
            cj[j] = 1.0
            d2[:, j] = BSpline(kv, cj, _DEGREE)(xs, nu=2)
        gram += (d2 * ws[:, None]).T @ d2
    return level**2 * gram


def fit_curve(targets: list[tuple[float, float, float, float]],
              smoothness_weight: float = 1e-5,
              knots=DEFAULT_KNOTS,
              anchor_date: dt.date | None = None,
              max_tenor: float = 1.0,
              initial: VarianceCurve | None = None,
              max_iter: int = 60,
              tol: float = 1e-12) -> VarianceCurve:
    """Fit a curve to strike targets by penalized Gauss-Newton.

    Args:
        targets: list of ``(t1, t2, strike, weight)`` rows; ``strike`` is a
            decimal vol for the window ``[t1, t2]`` and ``weight`` scales the
            squared residual (typically 1/quote-noise^2).
        smoothness_weight: multiplier on the curvature penalty.

    Returns:
        The fitted curve. Raises :class:`CurveFitError` carrying the best
        iterate when Gauss-Newton fails to reduce the objective.
    """
    if len(targets) < 2:
        raise ValueError("need at least two targets to identify a curve")
    knots_arr = np.asarray(knots, dtype=float)
    rows = [(float(t1), float(t2), float(kv), float(w)) for t1, t2, kv, w in targets]
    if any(w <= 0 for *_, w in rows):
        raise ValueError("weights must be positive")
    if any(not 0 <= t1 < t2 for t1, t2, *_ in rows):
        raise ValueError("degenerate target window")

    level = float(np.average([kv**2 for _, _, kv, _ in rows],
                             weights=[w for *_, w in rows]))
    gram = _smoothness_gram(knots_arr, level) * smoothness_weight
    # gram is PSD with a null space of log-linear curves; jitter keeps the
    # Cholesky factor usable as a penalty square root
    jitter = 1e-10 * max(np.trace(gram) / gram.shape[0], 1e-30)
    chol = np.linalg.cholesky(gram + jitter * np.eye(gram.shape[0]))

    curve = initial if initial is not None else VarianceCurve.flat(
        level, knots=tuple(knots), anchor_date=anchor_date, max_tenor=max_tenor)

    sw = np.sqrt([w for *_, w in rows])

    def objective(c: VarianceCurve):
        resid = np.array([c.mean_variance(t1, t2) ** 0.5 - kv
                          for t1, t2, kv, _ in rows])
        return resid, float(np.dot(sw * resid, sw * resid) + c.coeffs @ gram @ c.coeffs)

    resid, obj = objective(curve)
    best, best_obj = curve, obj
    for _ in range(max_iter):
        jac = np.empty((len(rows), curve.coeffs.size))
        for i, (t1, t2, _, _) in enumerate(rows):
            strike = np.sqrt(curve.mean_variance(t1, t2))
            jac[i] = curve.basis_mean(t1, t2) / (2.0 * strike)
        a_mat = np.vstack([sw[:, None] * jac, chol.T])
        rhs = np.concatenate([-sw * resid, -chol.T @ curve.coeffs])
        step, *_ = np.linalg.lstsq(a_mat, rhs, rcond=None)

        improved = False
        damping = 1.0
        for _ in range(12):
            cand = VarianceCurve(coeffs=curve.coeffs + damping * step,
                                 knots=tuple(knots), anchor_date=anchor_date,
                                 max_tenor=max_tenor)
            cand_resid, cand_obj = objective(cand)
            if cand_obj < obj:
                curve, resid, obj = cand, cand_resid, cand_obj
                improved = True
                break
            damping *= 0.5
        if obj < best_obj:
            best, best_obj = curve, obj
        if not improved:
            break
        if abs(np.dot(step, step)) < tol:
            return curve
    if obj <= best_obj + 1e-15 and np.dot(step, step) < 1e-6:
        return curve
    raise CurveFitError("curve fit did not converge", best=best)
