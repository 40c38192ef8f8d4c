"""Discrete-time binomial pricing engines.

Two engines share the same skeleton but differ in how money enters:

* the classical engine grows the account multiplicatively and discounts by
  1/(1 + r*dt) per step;
* the arithmetic (Bachelier) engine pairs additive price increments with a
  simple-interest account, so the recursion adds a constant r_si*dt term
  instead of discounting.

Both keep the real-world up-probability p and the drift inside the
risk-neutral probability, so prices genuinely depend on (p, drift); tests
pin that property.  The arithmetic engine carries two risk-neutral modes
because the zero-expected-change probability implied by the hedge argument
and the rate-drift probability implied by the continuous-time limit disagree
whenever the simple rate is nonzero; the engine implements both and the CLI
reports both rather than silently picking one.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Callable, Sequence

import numpy as np

from .errors import ArbitrageError, InputError, TreeSizeError

# hard cap for exhaustive path enumeration: 2**24 paths, chunked
_MAX_ENUM_STEPS = 24
_ENUM_CHUNK = 1 << 18

PayoffFn = Callable[[np.ndarray], np.ndarray]


class RnMode(str, Enum):
    """Risk-neutral probability convention for the arithmetic engine.

    AS_WRITTEN removes the whole drift (zero expected price change per step,
    the exact consequence of the one-step hedge argument).  MARTINGALE makes
    the expected price change per step equal r_si*dt, matching the market
    price of risk and the continuous-time limit.  The two coincide at
    r_si = 0.
    """

    AS_WRITTEN = "as-written"
    MARTINGALE = "martingale"


def _check_prob(p: float, label: str) -> float:
    p = float(p)
    if not (0.0 < p < 1.0) or not math.isfinite(p):
        raise InputError(f"{label} must lie in (0, 1), got {p}")
    return p


@dataclass(frozen=True)
class ClassicalTreeSpec:
    """Multiplicative binomial tree driven by arithmetic returns.

    mean_return and variance_return are the instantaneous moments (mu and
    sigma^2) of the one-step return; riskless_rate compounds per step.
    """

    steps: int
    horizon: float
    up_prob: float
    mean_return: float
    variance_return: float
    riskless_rate: float
    initial_price: float

    def __post_init__(self):
        if self.steps < 1:
            raise InputError(f"steps must be >= 1, got {self.steps}")
        if self.horizon <= 0.0:
            raise InputError(f"horizon must be > 0, got {self.horizon}")
        _check_prob(self.up_prob, "up_prob")
        if self.variance_return <= 0.0:
            raise InputError(
                f"variance_return must be > 0, got {self.variance_return}"
            )
        if self.riskless_rate < 0.0:
            raise InputError(
                f"riskless_rate must be >= 0, got {self.riskless_rate}"
            )
        if self.initial_price <= 0.0:
            raise InputError(
                f"initial_price must be > 0, got {self.initial_price}"
            )
        classical_rn_prob(self)  # no-arbitrage gate: fail loudly at build time

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    @property
    def sigma(self) -> float:
        return math.sqrt(self.variance_return)


@dataclass(frozen=True)
class BachelierTreeSpec:
    """Additive binomial tree: constant or per-step up-probabilities.

    up_probs is a single probability (the tree recombines) or a sequence of
    length ``steps`` (priced by exhaustive enumeration unless all entries
    coincide).  The time step is uniform, dt = horizon / steps.
    """

    steps: int
    horizon: float
    up_probs: float | Sequence[float]
    drift: float
    volatility: float
    simple_rate: float = 0.0
    initial_price: float = 0.0
    rn_mode: RnMode = RnMode.AS_WRITTEN

    def __post_init__(self):
        if self.steps < 1:
            raise InputError(f"steps must be >= 1, got {self.steps}")
        if self.horizon <= 0.0:
            raise InputError(f"horizon must be > 0, got {self.horizon}")
        if self.volatility <= 0.0:
            raise InputError(f"volatility must be > 0, got {self.volatility}")
        probs = self.up_probs
        if np.ndim(probs) == 0:
            _check_prob(float(probs), "up_probs")
            object.__setattr__(self, "up_probs", float(probs))
        else:
            probs = tuple(float(p) for p in probs)
            if len(probs) != self.steps:
                raise InputError(
                    f"per-step up_probs needs {self.steps} entries, "
                    f"got {len(probs)}"
                )
            for k, p in enumerate(probs):
                _check_prob(p, f"up_probs[{k}]")
            object.__setattr__(self, "up_probs", probs)
        object.__setattr__(self, "rn_mode", RnMode(self.rn_mode))
        for k in range(self.steps):  # no-arbitrage gate at build time
            bachelier_rn_prob(self, k)

    @property
    def dt(self) -> float:
        return self.horizon / self.steps

    def prob(self, step: int) -> float:
        if not 0 <= step < self.steps:
            raise InputError(f"step {step} outside 0..{self.steps - 1}")
        if isinstance(self.up_probs, float):
            return self.up_probs
        return self.up_probs[step]

    @property
    def recombines(self) -> bool:
        """Constant increments across steps make the lattice recombine."""
        if isinstance(self.up_probs, float):
            return True
        return len(set(self.up_probs)) == 1


def classical_updown(spec: ClassicalTreeSpec) -> tuple[float, float]:
    """One-step returns (u, d) matching the stated return moments:
    p*u + (1-p)*d = mu*dt and the second moment sigma^2*dt to leading order."""
    p = spec.up_prob
    root = spec.sigma * math.sqrt(spec.dt)
    u = spec.mean_return * spec.dt + math.sqrt((1.0 - p) / p) * root
    d = spec.mean_return * spec.dt - math.sqrt(p / (1.0 - p)) * root
    return u, d


def classical_rn_prob(spec: ClassicalTreeSpec) -> float:
    """q = p - theta*sqrt(p*(1-p)*dt) with theta = (mu - r)/sigma."""
    theta = (spec.mean_return - spec.riskless_rate) / spec.sigma
    p = spec.up_prob
    q = p - theta * math.sqrt(p * (1.0 - p) * spec.dt)
    if not (0.0 < q < 1.0):
        raise ArbitrageError(
            f"risk-neutral probability {q} outside (0, 1); "
            "the tree admits arbitrage at this step size",
            value=q,
        )
    return q


def classical_price(spec: ClassicalTreeSpec, payoff: PayoffFn) -> float:
    """Backward induction C = (q*C_up + (1-q)*C_down) / (1 + r*dt).

    ``payoff`` maps the vector of terminal prices to terminal values.  The
    result depends on both the return drift and the up-probability, since q
    keeps them; that dependence is a feature of this engine, not a bug.
    """
    u, d = classical_updown(spec)
    q = classical_rn_prob(spec)
    n = spec.steps
    j = np.arange(n + 1)
    terminal = spec.initial_price * (1.0 + u) ** j * (1.0 + d) ** (n - j)
    values = np.asarray(payoff(terminal), dtype=float)
    if values.shape != terminal.shape:
        raise InputError("payoff must return one value per terminal node")
    disc = 1.0 + spec.riskless_rate * spec.dt
    for _ in range(n):
        values = (q * values[1:] + (1.0 - q) * values[:-1]) / disc
    return float(values[0])


def classical_price_enumerated(spec: ClassicalTreeSpec, payoff: PayoffFn) -> float:
    """Exhaustive-path oracle for the classical engine (steps <= 24)."""
    u, d = classical_updown(spec)
    q = classical_rn_prob(spec)
    growth = np.array([1.0 + d, 1.0 + u])
    weight = np.array([1.0 - q, q])
    total = _enumerate(
        spec.steps,
        lambda bits: spec.initial_price * growth[bits].prod(axis=1),
        lambda bits: weight[bits].prod(axis=1),
        payoff,
    )
    return float(total / (1.0 + spec.riskless_rate * spec.dt) ** spec.steps)


def bachelier_updown(spec: BachelierTreeSpec, step: int = 0) -> tuple[float, float]:
    """One-step additive increments (u, d) in currency for the given step.

    u = rho*dt + sqrt((1-p)/p)*v*sqrt(dt) and d = rho*dt - sqrt(p/(1-p))*
    v*sqrt(dt), so p*u + (1-p)*d = rho*dt exactly."""
    p = spec.prob(step)
    root = spec.volatility * math.sqrt(spec.dt)
    u = spec.drift * spec.dt + math.sqrt((1.0 - p) / p) * root
    d = spec.drift * spec.dt - math.sqrt(p / (1.0 - p)) * root
    return u, d


def bachelier_rn_prob(spec: BachelierTreeSpec, step: int = 0) -> float:
    """Risk-neutral up-probability for the given step under spec.rn_mode.

    AS_WRITTEN: q = p - (rho/v)*sqrt(p*(1-p))*sqrt(dt), equivalently
    q = -d/(u - d): the up/down mix with zero expected price change.
    MARTINGALE: the drift is reduced by the simple rate, so the expected
    price change per step is r_si*dt instead of zero.
    """
    p = spec.prob(step)
    if spec.rn_mode is RnMode.AS_WRITTEN:
        excess = spec.drift
    else:
        excess = spec.drift - spec.simple_rate
    q = p - (excess / spec.volatility) * math.sqrt(p * (1.0 - p) * spec.dt)
    if not (0.0 < q < 1.0):
        raise ArbitrageError(
            f"risk-neutral probability {q} outside (0, 1) at step {step}",
            value=q,
        )
    return q


@dataclass(frozen=True)
class TreeValuation:
    """Root price plus, for recombining trees, the per-node hedge ratios.

    hedges[k][j] is the stock position held over (t_k, t_{k+1}) at the node
    reached by j up-moves, computed as (G_up - G_down)/(u - d).
    """

    price: float
    hedges: tuple[np.ndarray, ...] | None = field(default=None, repr=False)


def bachelier_price(spec: BachelierTreeSpec, payoff: PayoffFn) -> TreeValuation:
    """Price a terminal payoff on the additive tree.

    Backward recursion G = q*G_up + (1-q)*G_down + r_si*dt; note the rate
    term is added, not discounted, mirroring the simple-interest account.
    Recombining specs run an O(n^2) lattice sweep and expose hedge ratios;
    per-step-probability specs fall back to exhaustive enumeration (steps
    <= 24) and return hedges=None.
    """
    if not spec.recombines:
        return TreeValuation(price=bachelier_price_enumerated(spec, payoff))
    u, d = bachelier_updown(spec, 0)
    q = bachelier_rn_prob(spec, 0)
    n = spec.steps
    rate_term = spec.simple_rate * spec.dt
    j = np.arange(n + 1)
    terminal = spec.initial_price + j * u + (n - j) * d
    values = np.asarray(payoff(terminal), dtype=float)
    if values.shape != terminal.shape:
        raise InputError("payoff must return one value per terminal node")
    hedges: list[np.ndarray] = [np.empty(0)] * n
    for k in range(n - 1, -1, -1):
        hedges[k] = (values[1:] - values[:-1]) / (u - d)
        values = q * values[1:] + (1.0 - q) * values[:-1] + rate_term
    return TreeValuation(price=float(values[0]), hedges=tuple(hedges))


def bachelier_price_enumerated(spec: BachelierTreeSpec, payoff: PayoffFn) -> float:
    """Exhaustive-path oracle: q-weighted payoffs plus the accumulated
    additive rate terms (steps <= 24)."""
    n = spec.steps
    # column 0 = down, column 1 = up, indexed by the path bit per step
    ud = np.array([bachelier_updown(spec, k)[::-1] for k in range(n)])
    qs = np.array([bachelier_rn_prob(spec, k) for k in range(n)])
    qw = np.column_stack([1.0 - qs, qs])  # (n, 2)
    cols = np.arange(n)
    total = _enumerate(
        n,
        lambda bits: spec.initial_price + ud[cols, bits].sum(axis=1),
        lambda bits: qw[cols, bits].prod(axis=1),
        payoff,
    )
    return float(total + n * spec.simple_rate * spec.dt)


def _enumerate(steps: int, terminal_of, weight_of, payoff: PayoffFn) -> float:
    if steps > _MAX_ENUM_STEPS:
        raise TreeSizeError(
            f"exhaustive enumeration over 2**{steps} paths exceeds the "
            f"2**{_MAX_ENUM_STEPS} cap; use a recombining spec instead"
        )
    npaths = 1 << steps
    shifts = np.arange(steps, dtype=np.uint32)
    total = 0.0
    for start in range(0, npaths, _ENUM_CHUNK):
        codes = np.arange(start, min(start + _ENUM_CHUNK, npaths),
                          dtype=np.uint32)
        bits = ((codes[:, None] >> shifts[None, :]) & 1).astype(np.intp)
        values = np.asarray(payoff(terminal_of(bits)), dtype=float)
        total += float(np.dot(weight_of(bits), values))
    return total


@dataclass(frozen=True)
class TreePath:
    """One realized tree trajectory plus the deterministic account path.

    Values are the vertex prices at times k*dt; between vertices the price
    process is the right-continuous step function holding the left vertex.
    """

    times: np.ndarray
    prices: np.ndarray
    account: np.ndarray


def _normalize_coins(coins, steps: int) -> np.ndarray:
    arr = np.asarray(coins)
    if arr.shape != (steps,):
        raise InputError(
            f"coin sequence must have length {steps}, got shape {arr.shape}"
        )
    if arr.dtype == bool:
        return arr.astype(np.intp)
    vals = set(np.unique(arr).tolist())
    if vals <= {0, 1}:
        return arr.astype(np.intp)
    if vals <= {-1, 1}:
        return ((np.asarray(arr) + 1) // 2).astype(np.intp)
    raise InputError("coins must be boolean, {0,1}, or {-1,+1} valued")


def tree_to_cadlag_path(
    spec: BachelierTreeSpec, coins, initial_balance: float = 1.0
) -> TreePath:
    """Realize the price path selected by a coin sequence (1/up, 0/down).

    Returns the asset vertices and the companion simple-interest account
    beta_k = initial_balance + r_si*k*dt on the same grid.
    """
    ups = _normalize_coins(coins, spec.steps)
    ud = np.array([bachelier_updown(spec, k) for k in range(spec.steps)])
    incr = np.where(ups == 1, ud[:, 0], ud[:, 1])
    prices = spec.initial_price + np.concatenate([[0.0], np.cumsum(incr)])
    times = np.linspace(0.0, spec.horizon, spec.steps + 1)
    account = initial_balance + spec.simple_rate * times
    return TreePath(times=times, prices=prices, account=account)
