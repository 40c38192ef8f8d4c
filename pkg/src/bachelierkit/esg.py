"""ESG score adjustment of observed stock prices.

A company's score is benchmark-normalized into a relative score, the market's
ESG affinity gamma scales that into a price adjustment, and two convex score
transforms (exponential and geometric) are available as optional
preprocessing that rewards improvements near the top of the scale more than
near the bottom.  The adjusted price is linear in gamma and may be negative.
"""

from __future__ import annotations

import datetime as _dt
import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from .errors import InputError, UnidentifiableError

__all__ = [
    "year_fraction",
    "EsgRecord",
    "EsgAffinity",
    "relative_score",
    "esg_adjusted_price",
    "exp_transform",
    "geo_transform",
    "transformed_relative_score",
    "implied_affinity",
    "record_at",
]

_EPOCH = _dt.date(1970, 1, 1)


def year_fraction(timestamp) -> float:
    """Fractional-year timestamp: dates count actual days from 1970-01-01
    over a fixed 365-day year; numbers pass through unchanged."""
    if isinstance(timestamp, _dt.datetime):
        timestamp = timestamp.date()
    if isinstance(timestamp, _dt.date):
        return (timestamp - _EPOCH).days / 365.0
    value = float(timestamp)
    if not math.isfinite(value):
        raise InputError(f"timestamp must be finite, got {value}")
    return value


@dataclass(frozen=True)
class EsgRecord:
    """One observation: stock price plus company and benchmark scores.

    The timestamp may be a date or a fractional year; it is normalized to a
    fractional year on construction.  Scores live on the [0, 100] scale and
    the benchmark score must be positive (it divides the relative score).
    """

    timestamp: float
    stock_price: float
    company_score: float
    benchmark_score: float

    def __post_init__(self):
        object.__setattr__(self, "timestamp", year_fraction(self.timestamp))
        for name in ("stock_price", "company_score", "benchmark_score"):
            value = float(getattr(self, name))
            if not math.isfinite(value):
                raise InputError(f"{name} must be finite, got {value}")
            object.__setattr__(self, name, value)
        if self.stock_price <= 0.0:
            raise InputError(
                f"stock_price must be > 0, got {self.stock_price}"
            )
        for name in ("company_score", "benchmark_score"):
            value = getattr(self, name)
            if not 0.0 <= value <= 100.0:
                raise InputError(
                    f"{name} must lie in [0, 100], got {value}"
                )
        if self.benchmark_score == 0.0:
            raise InputError("benchmark_score must be > 0 (it is a divisor)")


@dataclass(frozen=True)
class EsgAffinity:
    """Market-wide ESG affinity gamma; any finite real, negative included."""

    gamma: float

    def __post_init__(self):
        if not math.isfinite(self.gamma):
            raise InputError(f"gamma must be finite, got {self.gamma}")


def relative_score(record: EsgRecord) -> float:
    """Company score relative to benchmark: (company - benchmark)/benchmark.

    Zero iff the company matches its benchmark; never below -1 because
    scores are nonnegative.
    """
    return (record.company_score - record.benchmark_score) / record.benchmark_score


def esg_adjusted_price(record: EsgRecord, affinity: EsgAffinity) -> float:
    """Observed price scaled by ESG appeal: S * (1 + gamma * relative score).

    Linear in gamma with slope S * relative score; a negative result is
    legal and signals a market that punishes the ESG profile heavily.
    """
    return record.stock_price * (1.0 + affinity.gamma * relative_score(record))


def _check_score(score) -> np.ndarray:
    arr = np.asarray(score, dtype=float)
    if not np.all(np.isfinite(arr)):
        raise InputError("score must be finite")
    if np.any(arr < 0.0) or np.any(arr > 100.0):
        raise InputError(f"score must lie in [0, 100], got {score}")
    return arr


def exp_transform(score, a: float):
    """Exponential score transform (e^(a*x) - 1)/a.

    Strictly increasing and convex on [0, 100] with f(0) = 0; tends to the
    identity as a -> 0+.  Accepts scalars or arrays.
    """
    if not a > 0.0:
        raise InputError(f"a must be > 0, got {a}")
    arr = _check_score(score)
    out = np.expm1(a * arr) / a
    return float(out) if np.ndim(score) == 0 else out


def geo_transform(score, b: float):
    """Geometric score transform 100/(100 + b - x) - 100/(100 + b).

    Strictly increasing and convex on [0, 100] with f(0) = 0; requires
    0 < b < 1 so the pole sits just above the top of the scale.
    """
    if not 0.0 < b < 1.0:
        raise InputError(f"b must lie in (0, 1), got {b}")
    arr = _check_score(score)
    out = 100.0 / (100.0 + b - arr) - 100.0 / (100.0 + b)
    return float(out) if np.ndim(score) == 0 else out


def transformed_relative_score(
    record: EsgRecord, transform: Callable[[float], float]
) -> float:
    """Relative score computed on transformed raw scores.

    Applies the transform to both scores before benchmark-normalizing, the
    optional preprocessing route; the transformed benchmark must stay
    positive.
    """
    company = float(transform(record.company_score))
    benchmark = float(transform(record.benchmark_score))
    if benchmark <= 0.0:
        raise InputError(
            f"transformed benchmark score must be > 0, got {benchmark}"
        )
    return (company - benchmark) / benchmark


def implied_affinity(observed_adjusted_price: float, record: EsgRecord) -> float:
    """The gamma that reprices the record to the observed adjusted price.

    gamma = (observed/S - 1)/relative score; round-trips through
    esg_adjusted_price to within 1e-10 relative.

    Raises:
        UnidentifiableError: the relative score is zero, so every gamma
            reproduces the observed price (or none does).
    """
    observed = float(observed_adjusted_price)
    if not math.isfinite(observed):
        raise InputError(f"observed price must be finite, got {observed}")
    rel = relative_score(record)
    if rel == 0.0:
        raise UnidentifiableError(
            "company score equals benchmark score; the adjusted price does "
            "not depend on gamma"
        )
    return (observed / record.stock_price - 1.0) / rel


def record_at(records: Sequence[EsgRecord], timestamp) -> EsgRecord:
    """Left-constant lookup: the latest record stamped at or before the
    query time.  Scores update infrequently, so a daily query between
    observations reads the most recent one.

    Raises:
        InputError: the query precedes the first record, or the records are
            not in increasing time order.
    """
    if not records:
        raise InputError("records must be nonempty")
    stamps = np.asarray([r.timestamp for r in records])
    if np.any(np.diff(stamps) <= 0.0):
        raise InputError("records must be strictly increasing in time")
    when = year_fraction(timestamp)
    idx = int(np.searchsorted(stamps, when, side="right")) - 1
    if idx < 0:
        raise InputError(
            f"query time {when} precedes the first record at {stamps[0]}"
        )
    return records[idx]
