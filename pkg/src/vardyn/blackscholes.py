"""Black-Scholes call pricing and implied-vol inversion (zero rates)."""

from __future__ import annotations

import math

import numpy as np
from scipy.optimize import brentq

__all__ = ["call_price", "vega", "implied_vol"]


def _d1(spot: float, strike: float, t: float, sigma: float) -> float:
    return (math.log(spot / strike) + 0.5 * sigma**2 * t) / (sigma * math.sqrt(t))


def call_price(spot: float, strike: float, t: float, sigma: float) -> float:
    if t <= 0 or sigma <= 0:
        return max(spot - strike, 0.0)
    from math import erf, sqrt
    d1 = _d1(spot, strike, t, sigma)
    d2 = d1 - sigma * math.sqrt(t)
    cdf = lambda x: 0.5 * (1.0 + erf(x / sqrt(2.0)))
    return spot * cdf(d1) - strike * cdf(d2)


def vega(spot: float, strike: float, t: float, sigma: float) -> float:
    d1 = _d1(spot, strike, t, sigma)
    return spot * math.sqrt(t) * math.exp(-0.5 * d1**2) / math.sqrt(2.0 * math.pi)


def implied_vol(price: float, spot: float, strike: float, t: float,
                lo: float = 1e-9, hi: float = 10.0) -> float:
    """Bracketed implied-vol root find to 1e-10.

    Raises ValueError when the price violates the arbitrage bounds
    (callers skip such Monte Carlo outliers and count them).
    """
    intrinsic = max(spot - strike, 0.0)
    if not intrinsic <= price < spot:
        raise ValueError(f"call price {price} outside arbitrage bounds "
                         f"[{intrinsic}, {spot})")
    f = lambda s: call_price(spot, strike, t, s) - price
    if f(lo) > 0:
        return 0.0
    return float(brentq(f, lo, hi, xtol=1e-10, rtol=8.9e-16))
