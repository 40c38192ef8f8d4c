"""Closed-form pricing in Bachelier's market model.

The risky asset follows an arithmetic Brownian motion A_t = A_0 + rho*t + v*B_t,
so prices live on all of R (ESG-adjusted prices can be negative).  The riskless
leg is a simple-interest account beta_t = beta_0 + r_si*t rather than a
compounding bank account, which changes the call formula and the measure
change but keeps both in closed form.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass

import numpy as np
from scipy.special import erf

from .errors import DegenerateMarketError, InputError, MaturityError

_SQRT2 = math.sqrt(2.0)
_SQRT_2PI = math.sqrt(2.0 * math.pi)


def norm_cdf(x):
    """Standard normal CDF via the error function; |abs error| <= 1e-10."""
    x = np.asarray(x, dtype=float)
    out = 0.5 * (1.0 + erf(x / _SQRT2))
    return float(out) if out.ndim == 0 else out


def norm_pdf(x):
    """Standard normal density."""
    x = np.asarray(x, dtype=float)
    out = np.exp(-0.5 * x * x) / _SQRT_2PI
    return float(out) if out.ndim == 0 else out


def call_payoff(spot, strike):
    """Terminal call payoff max(spot - strike, 0); prices may be negative."""
    spot = np.asarray(spot, dtype=float)
    out = np.maximum(spot - strike, 0.0)
    return float(out) if out.ndim == 0 else out


def _require_finite(name: str, value: float) -> float:
    value = float(value)
    if not math.isfinite(value):
        raise InputError(f"{name} must be finite, got {value}")
    return value


@dataclass(frozen=True)
class AbmParams:
    """Arithmetic Brownian motion: initial value, drift per year, volatility
    in currency per square-root year.  The initial value may be negative."""

    initial_value: float
    drift: float
    volatility: float

    def __post_init__(self):
        _require_finite("initial_value", self.initial_value)
        _require_finite("drift", self.drift)
        _require_finite("volatility", self.volatility)
        if self.volatility <= 0.0:
            raise InputError(f"volatility must be > 0, got {self.volatility}")


@dataclass(frozen=True)
class SiaParams:
    """Simple-interest account beta_t = initial_balance + simple_rate * t.

    Negative rates are legal; several money markets have traded there.
    """

    initial_balance: float = 1.0
    simple_rate: float = 0.0

    def __post_init__(self):
        _require_finite("initial_balance", self.initial_balance)
        _require_finite("simple_rate", self.simple_rate)
        if self.initial_balance <= 0.0:
            raise InputError(
                f"initial_balance must be > 0, got {self.initial_balance}"
            )


@dataclass(frozen=True)
class VanillaCall:
    """European call: strike (negative strikes are legal) and maturity in years."""

    strike: float
    maturity: float

    def __post_init__(self):
        _require_finite("strike", self.strike)
        _require_finite("maturity", self.maturity)
        if self.maturity <= 0.0:
            raise InputError(f"maturity must be > 0, got {self.maturity}")


@dataclass(frozen=True)
class MarketPriceOfRisk:
    """Excess drift per unit volatility, theta = (rho - r_si) / v."""

    theta: float

    def __post_init__(self):
        _require_finite("theta", self.theta)


def market_price_of_risk(abm: AbmParams, sia: SiaParams) -> MarketPriceOfRisk:
    """theta for the (risky, riskless) pair; warns when the rate swallows the
    drift (theta <= 0), which the model tolerates but flags."""
    theta = (abm.drift - sia.simple_rate) / abm.volatility
    if sia.simple_rate >= abm.drift:
        warnings.warn(
            "simple_rate >= drift gives a nonpositive market price of risk "
            f"(theta = {theta:.6g})",
            RuntimeWarning,
            stacklevel=2,
        )
    return MarketPriceOfRisk(theta)


def _time_to_expiry(opt: VanillaCall, t) -> np.ndarray:
    t = np.asarray(t, dtype=float)
    if np.any(t < 0.0):
        raise MaturityError(f"valuation time must be >= 0, got {t}")
    if np.any(t >= opt.maturity):
        raise MaturityError(
            f"valuation time {t} is at or after maturity {opt.maturity}; "
            "evaluate the payoff with call_payoff instead"
        )
    return opt.maturity - t


def bachelier_call_zero_rate(params: AbmParams, opt: VanillaCall, t, spot):
    """Call value with no riskless yield: (A-K)*Phi(d) + v*sqrt(T-t)*phi(d).

    Args:
        params: asset dynamics; only the volatility enters the formula.
        opt: strike and maturity.
        t: valuation time(s), 0 <= t < maturity.
        spot: current asset value(s); any real number is accepted.
    """
    tau = _time_to_expiry(opt, t)
    spot = np.asarray(spot, dtype=float)
    scale = params.volatility * np.sqrt(tau)
    d = (spot - opt.strike) / scale
    out = (spot - opt.strike) * norm_cdf(d) + scale * norm_pdf(d)
    return float(out) if np.ndim(out) == 0 else out


def bachelier_call_sia(abm: AbmParams, sia: SiaParams, opt: VanillaCall, t, spot):
    """Call value when the riskless leg accrues simple interest.

    With lam0 = spot - K + r_si*(T-t) and lam1 = v*sqrt(T-t), the value is
    lam0*Phi(lam0/lam1) + lam1*phi(lam0/lam1) - r_si*(T-t).  At r_si = 0 this
    reduces exactly to bachelier_call_zero_rate.
    """
    tau = _time_to_expiry(opt, t)
    spot = np.asarray(spot, dtype=float)
    rate = sia.simple_rate
    lam0 = spot - opt.strike + rate * tau
    lam1 = abm.volatility * np.sqrt(tau)
    z = lam0 / lam1
    out = lam0 * norm_cdf(z) + lam1 * norm_pdf(z) - rate * tau
    return float(out) if np.ndim(out) == 0 else out


def bachelier_hedge(abm: AbmParams, opt: VanillaCall, t, spot):
    """Replicating portfolio at zero rate: returns (stock_units, account_units).

    stock_units = Phi(d) and account_units = -K*Phi(d) + v*sqrt(T-t)*phi(d);
    the pair satisfies stock_units*spot + account_units = call value.
    """
    tau = _time_to_expiry(opt, t)
    spot = np.asarray(spot, dtype=float)
    scale = abm.volatility * np.sqrt(tau)
    d = (spot - opt.strike) / scale
    a = norm_cdf(d)
    b = -opt.strike * norm_cdf(d) + scale * norm_pdf(d)
    if np.ndim(a) == 0:
        return float(a), float(b)
    return a, b


def radon_nikodym_weight(theta: MarketPriceOfRisk, brownian_terminal, horizon: float):
    """Measure-change weight exp(-theta*B_T - theta^2*T/2).

    The weight is positive and has expectation 1 over B_T ~ Normal(0, T),
    which Monte Carlo tests exploit as a martingale-mean oracle.
    """
    horizon = float(horizon)
    if horizon <= 0.0:
        raise InputError(f"horizon must be > 0, got {horizon}")
    b = np.asarray(brownian_terminal, dtype=float)
    out = np.exp(-theta.theta * b - 0.5 * theta.theta**2 * horizon)
    return float(out) if out.ndim == 0 else out


def implied_simple_rate(asset1: AbmParams, asset2: AbmParams) -> float:
    """The unique simple rate giving both assets one market price of risk.

    r = (rho1*v2 - rho2*v1) / (v2 - v1); requires distinct volatilities.
    """
    v1, v2 = asset1.volatility, asset2.volatility
    if v1 == v2:
        raise DegenerateMarketError(
            f"equal volatilities ({v1}) leave the riskless rate unidentified"
        )
    return (asset1.drift * v2 - asset2.drift * v1) / (v2 - v1)


@dataclass(frozen=True)
class ParamPath:
    """Piecewise-constant AbmParams on a time grid, left-constant between
    stamps (value at t is the parameter set of the latest stamp <= t)."""

    times: tuple[float, ...]
    params: tuple[AbmParams, ...]

    def __post_init__(self):
        if len(self.times) != len(self.params) or not self.times:
            raise InputError("times and params must be equal-length, nonempty")
        ts = np.asarray(self.times, dtype=float)
        if np.any(~np.isfinite(ts)) or np.any(np.diff(ts) <= 0.0):
            raise InputError("times must be finite and strictly increasing")

    def at(self, t: float) -> AbmParams:
        idx = int(np.searchsorted(self.times, t, side="right")) - 1
        if idx < 0:
            raise InputError(
                f"t = {t} precedes the first parameter stamp {self.times[0]}"
            )
        return self.params[idx]


def implied_simple_rate_path(
    asset1: ParamPath, asset2: ParamPath
) -> tuple[np.ndarray, np.ndarray]:
    """Pointwise implied rate on the union of the two stamp grids.

    Returns (times, rates).  A time stamp where the two assets share one
    volatility is reported by value in the error.
    """
    times = np.union1d(np.asarray(asset1.times), np.asarray(asset2.times))
    times = times[times >= max(asset1.times[0], asset2.times[0])]
    rates = np.empty_like(times)
    for i, t in enumerate(times):
        p1, p2 = asset1.at(float(t)), asset2.at(float(t))
        try:
            rates[i] = implied_simple_rate(p1, p2)
        except DegenerateMarketError as exc:
            raise DegenerateMarketError(
                f"equal volatilities at t = {float(t)}: {exc}"
            ) from exc
    return times, rates
