"""Ingestion of daily spot and VIX-futures data.

File formats (all prices quoted in vol points, e.g. ``20.0`` = 20% vol;
they are converted to decimals of 1 at this module's boundary):

* ``spot.csv``:    ``date,close``
* ``futures.csv``: ``date,expiry,settle,volume``
* ``vix.csv``:     ``date,level``

Dates are ISO-8601. Quotes are rescaled by the return-count factor
``sqrt(252/365 * 30/n_returns)`` where ``n_returns`` counts the business
days inside the 30-calendar-day variance window behind each quote.
"""

from __future__ import annotations

import csv
import datetime as dt
import math
from dataclasses import dataclass, field

import numpy as np

__all__ = [
    "TRADING_DAYS",
    "BusinessCalendar",
    "SpotSeries",
    "FuturesQuote",
    "FuturesObservation",
    "ObservationSet",
    "LiquidityConfig",
    "vix_adjustment_factor",
    "adjust_vix_quote",
    "liquidity_sigma",
    "load_spot",
    "load_futures",
    "load_vix",
    "build_observation_set",
]

TRADING_DAYS = 252
VIX_WINDOW_DAYS = 30  # calendar days covered by a VIX-style variance window


class ParseError(ValueError):
    """Malformed input row; carries the offending line number."""


class BusinessCalendar:
    """Weekday-only business-day calendar with an optional holiday list."""

    def __init__(self, holidays: list[dt.date] | None = None):
        self.holidays = sorted(set(holidays or []))
        self._np_holidays = np.array(self.holidays, dtype="datetime64[D]")

    def is_business_day(self, d: dt.date) -> bool:
        return bool(np.is_busday(np.datetime64(d, "D"), holidays=self._np_holidays))

    def count(self, start: dt.date, end: dt.date) -> int:
        """Business days in the half-open interval [start, end)."""
        return int(np.busday_count(np.datetime64(start, "D"),
                                   np.datetime64(end, "D"),
                                   holidays=self._np_holidays))

    def count_window(self, start: dt.date, end: dt.date) -> int:
        """Business days in the half-open interval (start, end]."""
        n = self.count(start, end)
        n -= 1 if self.is_business_day(start) else 0
        n += 1 if self.is_business_day(end) else 0
        return n

    def year_fraction(self, start: dt.date, end: dt.date) -> float:
        """Trading-time year fraction: business days / 252."""
        return self.count(start, end) / TRADING_DAYS

    def add_business_days(self, d: dt.date, n: int) -> dt.date:
        out = np.busday_offset(np.datetime64(d, "D"), n, roll="forward",
                               holidays=self._np_holidays)
        return out.astype(dt.date)


def vix_adjustment_factor(n_returns: float) -> float:
    """Return-count rescaling sqrt(252/365 * 30/n_returns).

    Equals one exactly when the window holds 30*252/365 ~ 20.71 returns.
    """
    if n_returns <= 0:
        raise ValueError("variance window contains no business days")
    return math.sqrt(TRADING_DAYS / 365.0 * VIX_WINDOW_DAYS / n_returns)


def adjust_vix_quote(raw: float, expiry: dt.date,
                     calendar: BusinessCalendar | None = None) -> float:
    """Rescale a raw VIX-style quote by the return-count factor of its window.

    The window runs over the 30 calendar days following ``expiry`` (for the
    cash index, pass the observation date itself).
    """
    calendar = calendar or BusinessCalendar()
    window_end = expiry + dt.timedelta(days=VIX_WINDOW_DAYS)
    n_ret = calendar.count_window(expiry, window_end)
    return raw * vix_adjustment_factor(n_ret)


@dataclass(frozen=True)
class LiquidityConfig:
    """Scale and floor for the volume -> quote-error-vol map."""

    scale: float = 1.0
    volume_floor: float = 1.0

    def __post_init__(self):
        if self.scale <= 0 or self.volume_floor <= 0:
            raise ValueError("liquidity scale and floor must be positive")


def liquidity_sigma(volume: float, config: LiquidityConfig | None = None) -> float:
    """Per-day error vol of a quote variation: c / sqrt(max(volume, floor))."""
    config = config or LiquidityConfig()
    if volume < 0:
        raise ValueError("volume must be >= 0")
    return config.scale / math.sqrt(max(volume, config.volume_floor))


@dataclass(frozen=True)
class SpotSeries:
    """Daily close series with simple returns r_t = S_{t+1}/S_t - 1."""

    dates: tuple[dt.date, ...]
    closes: np.ndarray
    returns: np.ndarray = field(init=False, compare=False)

    def __post_init__(self):
        closes = np.asarray(self.closes, dtype=float)
        if len(self.dates) != closes.size:
            raise ValueError("dates and closes length mismatch")
        if np.any(closes <= 0):
            raise ValueError("non-positive close price")
        if any(b <= a for a, b in zip(self.dates, self.dates[1:])):
            raise ValueError("dates must be strictly increasing")
        object.__setattr__(self, "closes", closes)
        object.__setattr__(self, "returns", np.diff(closes) / closes[:-1])

    def __len__(self) -> int:
        return len(self.dates)


@dataclass(frozen=True)
class FuturesQuote:
    expiry: dt.date
    price: float       # adjusted, decimal vol (0.20 = 20 vol points)
    volume: float
    liquidity_sigma: float

    def __post_init__(self):
        if self.price <= 0:
            raise ValueError(f"non-positive futures price for {self.expiry}")
        if self.liquidity_sigma <= 0:
            raise ValueError("liquidity sigma must be positive")


@dataclass(frozen=True)
class FuturesObservation:
    """One trading day: adjusted VIX cash plus the live futures strip.

    The cash index is kept for curve extraction but is non-tradable and is
    never used in the variation likelihood.
    """

    date: dt.date
    vix_cash: float | None
    futures: tuple[FuturesQuote, ...]

    def __post_init__(self):
        exps = [f.expiry for f in self.futures]
        if any(b <= a for a, b in zip(exps, exps[1:])):
            raise ValueError(f"{self.date}: expiries must be strictly increasing")
        if any(e < self.date for e in exps):
            raise ValueError(f"{self.date}: expiry before observation date")
        if self.vix_cash is not None and self.vix_cash <= 0:
            raise ValueError(f"{self.date}: non-positive VIX cash")

    @property
    def expiries(self) -> tuple[dt.date, ...]:
        return tuple(f.expiry for f in self.futures)


@dataclass(frozen=True)
class ObservationSet:
    observations: tuple[FuturesObservation, ...]
    calendar: BusinessCalendar = field(default_factory=BusinessCalendar, compare=False)

    def __post_init__(self):
        dates = [o.date for o in self.observations]
        if len(set(dates)) != len(dates):
            raise ValueError("duplicate observation dates")
        if any(b <= a for a, b in zip(dates, dates[1:])):
            raise ValueError("observations must be date-ordered")

    def __len__(self) -> int:
        return len(self.observations)

    def __iter__(self):
        return iter(self.observations)

    @property
    def dates(self) -> list[dt.date]:
        return [o.date for o in self.observations]


def _read_rows(path, expected_header: list[str]):
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        header = next(reader, None)
        if header is None or [c.strip() for c in header] != expected_header:
            raise ParseError(f"{path}: expected header {','.join(expected_header)}")
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            if len(row) != len(expected_header):
                raise ParseError(f"{path}:{lineno}: expected "
                                 f"{len(expected_header)} fields, got {len(row)}")
            yield lineno, [c.strip() for c in row]


def _parse_date(text: str, path, lineno: int) -> dt.date:
    try:
        return dt.date.fromisoformat(text)
    except ValueError as exc:
        raise ParseError(f"{path}:{lineno}: bad date {text!r}") from exc


def _parse_float(text: str, path, lineno: int) -> float:
    try:
        return float(text)
    except ValueError as exc:
        raise ParseError(f"{path}:{lineno}: bad number {text!r}") from exc


def load_spot(path) -> SpotSeries:
    """Load ``date,close`` rows, sort by date, reject duplicates."""
    rows = []
    seen = set()
    for lineno, (d, c) in _read_rows(path, ["date", "close"]):
        date = _parse_date(d, path, lineno)
        close = _parse_float(c, path, lineno)
        if date in seen:
            raise ParseError(f"{path}:{lineno}: duplicate date {date}")
        if close <= 0:
            raise ParseError(f"{path}:{lineno}: non-positive close {close}")
        seen.add(date)
        rows.append((date, close))
    rows.sort()
    return SpotSeries(dates=tuple(r[0] for r in rows),
                      closes=np.array([r[1] for r in rows]))


def load_vix(path) -> dict[dt.date, float]:
    """Load ``date,level`` rows; levels in vol points, unadjusted."""
    out: dict[dt.date, float] = {}
    for lineno, (d, v) in _read_rows(path, ["date", "level"]):
        date = _parse_date(d, path, lineno)
        if date in out:
            raise ParseError(f"{path}:{lineno}: duplicate date {date}")
        level = _parse_float(v, path, lineno)
        if level <= 0:
            raise ParseError(f"{path}:{lineno}: non-positive level {level}")
        out[date] = level
    return out


def load_futures(path) -> dict[dt.date, list[tuple[dt.date, float, float]]]:
    """Load ``date,expiry,settle,volume`` rows grouped by observation date."""
    out: dict[dt.date, list[tuple[dt.date, float, float]]] = {}
    seen = set()
    for lineno, (d, e, s, v) in _read_rows(path, ["date", "expiry", "settle", "volume"]):
        date = _parse_date(d, path, lineno)
        expiry = _parse_date(e, path, lineno)
        settle = _parse_float(s, path, lineno)
        volume = _parse_float(v, path, lineno)
        if settle <= 0:
            raise ParseError(f"{path}:{lineno}: non-positive settle {settle}")
        if volume < 0:
            raise ParseError(f"{path}:{lineno}: negative volume {volume}")
        if (date, expiry) in seen:
            raise ParseError(f"{path}:{lineno}: duplicate (date, expiry)")
        seen.add((date, expiry))
        out.setdefault(date, []).append((expiry, settle, volume))
    for date in out:
        out[date].sort()
    return out


def build_observation_set(futures_path, vix_path=None,
                          calendar: BusinessCalendar | None = None,
                          liquidity: LiquidityConfig | None = None) -> ObservationSet:
    """Assemble per-day observations: adjust quotes, attach liquidity vols.

    Vol-point quotes become decimals here (20.0 -> 0.20). A missing future
    on a date simply shrinks that day's strip.
    """
    calendar = calendar or BusinessCalendar()
    liquidity = liquidity or LiquidityConfig()
    futures = load_futures(futures_path)
    vix = load_vix(vix_path) if vix_path is not None else {}

    observations = []
    for date in sorted(futures):
        quotes = []
        for expiry, settle, volume in futures[date]:
            adjusted = adjust_vix_quote(settle, expiry, calendar) / 100.0
            quotes.append(FuturesQuote(
                expiry=expiry, price=adjusted, volume=volume,
                liquidity_sigma=liquidity_sigma(volume, liquidity)))
        cash = vix.get(date)
        if cash is not None:
            cash = adjust_vix_quote(cash, date, calendar) / 100.0
        observations.append(FuturesObservation(
            date=date, vix_cash=cash, futures=tuple(quotes)))
    return ObservationSet(observations=tuple(observations), calendar=calendar)
