"""Factor-driven, path-dependent pricing.

A tradable factor supplies the up/down sign sequence; those signs are
normalized to mean-0, variance-1 innovations, accumulated into a rescaled
walk X, and fed through a declared feedback function h so the asset's step
volatility depends on the walk's position.  Pricing simulates the signs
under per-step risk-neutral probabilities chosen exactly as in the one-step
hedge argument of the additive tree: the expected asset change per step is
pinned to 0 (as-written mode) or to r_si*dt (martingale mode), given the
realized past.

h is declared as breakpoints plus closed-form pieces (constant or linear
segments, with optional isolated point values), not arbitrary code, so the
piecewise-continuity requirement of the underlying limit theory is checkable
by construction.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

import numpy as np

from ._rng import map_blocks
from .errors import ArbitrageError, EstimationError, InputError
from .trees import RnMode

__all__ = [
    "PiecewiseFn",
    "FactorModelParams",
    "PathDepAssetParams",
    "strip_factor_signs",
    "estimate_factor_sign_probs",
    "factor_tree_path",
    "csyip_pair",
    "pathdep_asset_path",
    "pathdep_price",
]

_CONST = "constant"
_LINEAR = "linear"


@dataclass(frozen=True)
class PiecewiseFn:
    """Piecewise function with finite one-sided limits everywhere.

    ``breakpoints`` split the line into len(breakpoints)+1 intervals, each
    left-closed on its breakpoint: piece i applies on [b_{i-1}, b_i).  Every
    piece is ("constant", c) or ("linear", intercept, slope), and
    ``point_values`` may override isolated breakpoints, which is how the
    sign function represents its value 0 at the origin.
    """

    breakpoints: tuple[float, ...] = ()
    pieces: tuple[tuple, ...] = ((_CONST, 1.0),)
    point_values: tuple[tuple[float, float], ...] = ()

    def __post_init__(self):
        bp = tuple(float(b) for b in self.breakpoints)
        if any(not math.isfinite(b) for b in bp):
            raise InputError("breakpoints must be finite")
        if list(bp) != sorted(set(bp)):
            raise InputError("breakpoints must be strictly increasing")
        if len(self.pieces) != len(bp) + 1:
            raise InputError(
                f"{len(bp)} breakpoints need {len(bp) + 1} pieces, "
                f"got {len(self.pieces)}"
            )
        for piece in self.pieces:
            if piece[0] == _CONST:
                ok = len(piece) == 2 and math.isfinite(piece[1])
            elif piece[0] == _LINEAR:
                ok = (len(piece) == 3 and math.isfinite(piece[1])
                      and math.isfinite(piece[2]))
            else:
                ok = False
            if not ok:
                raise InputError(f"malformed piece {piece!r}")
        for x, v in self.point_values:
            if x not in bp:
                raise InputError(
                    f"point value at {x} must sit on a breakpoint"
                )
            if not math.isfinite(v):
                raise InputError("point values must be finite")
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "pieces", tuple(tuple(p) for p in self.pieces))
        object.__setattr__(
            self, "point_values",
            tuple((float(x), float(v)) for x, v in self.point_values),
        )

    @classmethod
    def constant(cls, value: float) -> "PiecewiseFn":
        return cls(pieces=((_CONST, float(value)),))

    @classmethod
    def linear(cls, intercept: float, slope: float) -> "PiecewiseFn":
        return cls(pieces=((_LINEAR, float(intercept), float(slope)),))

    @classmethod
    def sign(cls) -> "PiecewiseFn":
        """-1 below zero, +1 above, exactly 0 at zero."""
        return cls(
            breakpoints=(0.0,),
            pieces=((_CONST, -1.0), (_CONST, 1.0)),
            point_values=((0.0, 0.0),),
        )

    @classmethod
    def indicator(cls, lo: float, hi: float) -> "PiecewiseFn":
        """1 on [lo, hi), 0 elsewhere."""
        if not lo < hi:
            raise InputError(f"indicator needs lo < hi, got [{lo}, {hi})")
        return cls(
            breakpoints=(float(lo), float(hi)),
            pieces=((_CONST, 0.0), (_CONST, 1.0), (_CONST, 0.0)),
        )

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        scalar = x.ndim == 0
        x = np.atleast_1d(x)
        out = np.empty_like(x)
        idx = np.searchsorted(np.asarray(self.breakpoints), x, side="right")
        for i, piece in enumerate(self.pieces):
            mask = idx == i
            if not mask.any():
                continue
            if piece[0] == _CONST:
                out[mask] = piece[1]
            else:
                out[mask] = piece[1] + piece[2] * x[mask]
        for bx, val in self.point_values:
            out[x == bx] = val
        return float(out[0]) if scalar else out


@dataclass(frozen=True)
class FactorModelParams:
    """Factor price dynamics plus its step-size-dependent up-probability
    p(dt) = p0 + p1*sqrt(dt) + p2*dt."""

    drift: float
    volatility: float
    initial_value: float
    sign_prob_coeffs: tuple[float, float, float]

    def __post_init__(self):
        if self.volatility <= 0.0:
            raise InputError(f"volatility must be > 0, got {self.volatility}")
        if self.initial_value <= 0.0:
            raise InputError(
                f"initial_value must be > 0, got {self.initial_value}"
            )
        coeffs = tuple(float(c) for c in self.sign_prob_coeffs)
        if len(coeffs) != 3 or any(not math.isfinite(c) for c in coeffs):
            raise InputError("sign_prob_coeffs must be three finite numbers")
        if not (0.0 < coeffs[0] < 1.0):
            raise InputError(
                f"leading coefficient must lie in (0, 1), got {coeffs[0]}"
            )
        object.__setattr__(self, "sign_prob_coeffs", coeffs)

    def sign_prob(self, dt: float) -> float:
        p0, p1, p2 = self.sign_prob_coeffs
        p = p0 + p1 * math.sqrt(dt) + p2 * dt
        if not (0.0 < p < 1.0):
            raise InputError(
                f"up-probability {p} outside (0, 1) at dt = {dt}; "
                "use a smaller step"
            )
        return p


@dataclass(frozen=True)
class PathDepAssetParams:
    """Asset increment parameters: drift, direct volatility, and the
    feedback volatility applied through h(walk position).  Either volatility
    may be negative; at least one must be nonzero."""

    drift: float
    vol_direct: float
    vol_feedback: float
    feedback_fn: PiecewiseFn

    def __post_init__(self):
        for name in ("drift", "vol_direct", "vol_feedback"):
            if not math.isfinite(getattr(self, name)):
                raise InputError(f"{name} must be finite")
        if self.vol_direct == 0.0 and self.vol_feedback == 0.0:
            raise InputError("vol_direct and vol_feedback cannot both be 0")
        if not isinstance(self.feedback_fn, PiecewiseFn):
            raise InputError("feedback_fn must be a PiecewiseFn")


def _xi_values(p: float) -> tuple[float, float]:
    """Normalized up/down innovation values for up-probability p: the pair
    has mean 0 and variance 1 under (p, 1-p)."""
    return math.sqrt((1.0 - p) / p), -math.sqrt(p / (1.0 - p))


def strip_factor_signs(changes, factor: FactorModelParams, dt: float) -> np.ndarray:
    """Convert observed factor price changes into normalized innovations.

    Z = (change - drift*dt) / (vol*sqrt(dt)); nonnegative Z maps to the up
    value sqrt((1-p)/p) and negative Z to -sqrt(p/(1-p)), with p = p(dt).
    """
    if dt <= 0.0:
        raise InputError(f"dt must be > 0, got {dt}")
    changes = np.asarray(changes, dtype=float)
    if changes.size == 0:
        raise InputError("changes must be nonempty")
    p = factor.sign_prob(dt)
    up, down = _xi_values(p)
    z = (changes - factor.drift * dt) / (factor.volatility * math.sqrt(dt))
    return np.where(z >= 0.0, up, down)


def estimate_factor_sign_probs(
    changes, dts
) -> tuple[float, float, float]:
    """Fit the up-probability coefficients from centered change frequencies.

    With one step size the estimate is (phat, 0, 0); with two, the constant
    and sqrt terms are solved exactly; with three or more, least squares
    against (1, sqrt(dt), dt).  Changes are centered by their sample mean
    before counting nonnegative entries.

    Args:
        changes: one sample of changes, or one sample per entry of dts.
        dts: a single step size or a sequence of step sizes.

    Raises:
        EstimationError: fewer than 30 observations for some step size, or
            a fit whose p(dt) leaves (0, 1) at a supplied dt (the fitted
            coefficients ride along for diagnosis).
    """
    if np.ndim(dts) == 0:
        dt_list = [float(dts)]
        samples = [np.asarray(changes, dtype=float)]
    else:
        dt_list = [float(d) for d in dts]
        samples = [np.asarray(c, dtype=float) for c in changes]
        if len(samples) != len(dt_list):
            raise InputError(
                f"{len(dt_list)} step sizes need as many samples, "
                f"got {len(samples)}"
            )
    if any(d <= 0.0 for d in dt_list):
        raise InputError("step sizes must be > 0")
    phats = []
    for d, sample in zip(dt_list, samples):
        if sample.size < 30:
            raise EstimationError(
                f"need >= 30 observations per step size, got {sample.size} "
                f"at dt = {d}"
            )
        centered = sample - sample.mean()
        phats.append(float(np.mean(centered >= 0.0)))
    if len(dt_list) == 1:
        coeffs = (phats[0], 0.0, 0.0)
    elif len(dt_list) == 2:
        design = np.array([[1.0, math.sqrt(d)] for d in dt_list])
        sol = np.linalg.solve(design, np.asarray(phats))
        coeffs = (float(sol[0]), float(sol[1]), 0.0)
    else:
        design = np.array([[1.0, math.sqrt(d), d] for d in dt_list])
        sol, *_ = np.linalg.lstsq(design, np.asarray(phats), rcond=None)
        coeffs = (float(sol[0]), float(sol[1]), float(sol[2]))
    for d in dt_list:
        fitted = coeffs[0] + coeffs[1] * math.sqrt(d) + coeffs[2] * d
        if not (0.0 < fitted < 1.0):
            raise EstimationError(
                f"fitted up-probability {fitted} leaves (0, 1) at dt = {d}; "
                f"coefficients {coeffs}",
                fitted=coeffs,
            )
    return coeffs


def _normalize_signs(signs, steps: int) -> np.ndarray:
    arr = np.asarray(signs)
    if arr.shape != (steps,):
        raise InputError(
            f"sign sequence must have length {steps}, got shape {arr.shape}"
        )
    vals = set(np.unique(arr).tolist())
    if vals <= {0, 1}:
        return np.where(arr == 1, 1, -1)
    if vals <= {-1, 1}:
        return arr.astype(np.intp)
    raise InputError("signs must be {0,1} or {-1,+1} valued")


def factor_tree_path(
    factor: FactorModelParams, steps: int, horizon: float, signs
) -> np.ndarray:
    """Factor price vertices for a given up/down sign sequence."""
    if steps < 1 or horizon <= 0.0:
        raise InputError("steps must be >= 1 and horizon > 0")
    ups = _normalize_signs(signs, steps)
    dt = float(horizon) / steps
    p = factor.sign_prob(dt)
    up, down = _xi_values(p)
    xi = np.where(ups == 1, up, down)
    incr = factor.drift * dt + factor.volatility * math.sqrt(dt) * xi
    return factor.initial_value + np.concatenate([[0.0], np.cumsum(incr)])


def csyip_pair(
    signs, h: PiecewiseFn | Callable[[np.ndarray], np.ndarray], dt: float
) -> tuple[np.ndarray, np.ndarray]:
    """Rescaled walk X and its h-weighted companion Y from normalized signs.

    X_k = sum(xi_i * sqrt(dt)) and Y_k = sum(xi_i * h(X_{i-1}) * sqrt(dt));
    both paths carry a leading zero vertex.  The innovations may be a batch
    (last axis = steps).  For h identically 1, Y equals X bit for bit.
    """
    if dt <= 0.0:
        raise InputError(f"dt must be > 0, got {dt}")
    xi = np.asarray(signs, dtype=float)
    if xi.size == 0:
        raise InputError("signs must be nonempty")
    step_x = xi * math.sqrt(dt)
    zero = np.zeros(xi.shape[:-1] + (1,))
    x_path = np.concatenate([zero, np.cumsum(step_x, axis=-1)], axis=-1)
    x_prev = x_path[..., :-1]
    y_path = np.concatenate(
        [zero, np.cumsum(step_x * h(x_prev), axis=-1)], axis=-1
    )
    return x_path, y_path


def pathdep_asset_path(
    asset: PathDepAssetParams, signs, dt: float, initial: float
) -> np.ndarray:
    """Asset price vertices driven by normalized factor innovations.

    Each increment is drift*dt + sqrt(dt)*xi*(vol_direct + vol_feedback *
    h(X_prev)) where X is the running rescaled sign walk.
    """
    if dt <= 0.0:
        raise InputError(f"dt must be > 0, got {dt}")
    xi = np.asarray(signs, dtype=float)
    if xi.size == 0:
        raise InputError("signs must be nonempty")
    step_x = xi * math.sqrt(dt)
    zero = np.zeros(xi.shape[:-1] + (1,))
    x_prev = np.concatenate([zero, np.cumsum(step_x, axis=-1)], axis=-1)[..., :-1]
    incr = (
        asset.drift * dt
        + asset.vol_direct * step_x
        + asset.vol_feedback * step_x * asset.feedback_fn(x_prev)
    )
    return initial + np.concatenate([zero, np.cumsum(incr, axis=-1)], axis=-1)


def pathdep_price(
    asset: PathDepAssetParams,
    factor: FactorModelParams,
    payoff: Callable[[np.ndarray], np.ndarray],
    steps: int,
    horizon: float,
    paths: int,
    seed: int,
    initial: float,
    simple_rate: float = 0.0,
    rn_mode: RnMode = RnMode.AS_WRITTEN,
) -> tuple[float, float]:
    """Monte Carlo price of a terminal payoff under per-step risk-neutral
    sign probabilities, plus its standard error.

    At each step the asset has two conditional increments (up and down sign
    through the effective volatility vol_direct + vol_feedback*h(X)); the
    risk-neutral up-probability solves q*u + (1-q)*d = target with target 0
    in as-written mode and r_si*dt in martingale mode.  The accumulated
    additive rate term steps*r_si*dt is added to the expected payoff,
    mirroring the tree recursion.

    Raises:
        ArbitrageError: some step's q leaves (0, 1), reported with the step
            index and the conditioning walk state.
    """
    if paths < 100:
        raise InputError(f"paths must be >= 100, got {paths}")
    if steps < 1 or horizon <= 0.0:
        raise InputError("steps must be >= 1 and horizon > 0")
    rn_mode = RnMode(rn_mode)
    dt = float(horizon) / steps
    p = factor.sign_prob(dt)
    xi_up, xi_dn = _xi_values(p)
    target = 0.0 if rn_mode is RnMode.AS_WRITTEN else simple_rate * dt
    sqdt = math.sqrt(dt)
    h = asset.feedback_fn

    def block(rng: np.random.Generator, k: int) -> np.ndarray:
        x = np.zeros(k)
        price = np.full(k, float(initial))
        uniforms = rng.random((steps, k))
        for step in range(steps):
            w = asset.vol_direct + asset.vol_feedback * h(x)
            u = asset.drift * dt + sqdt * xi_up * w
            d = asset.drift * dt + sqdt * xi_dn * w
            with np.errstate(divide="ignore", invalid="ignore"):
                q = (target - d) / (u - d)
            bad = ~((q > 0.0) & (q < 1.0))
            if bad.any():
                i = int(np.argmax(bad))
                raise ArbitrageError(
                    f"risk-neutral probability {q[i]} outside (0, 1) at "
                    f"step {step} (walk state X = {x[i]}, effective "
                    f"volatility {w[i]})",
                    value=float(q[i]) if np.isfinite(q[i]) else None,
                )
            up = uniforms[step] < q
            xi = np.where(up, xi_up, xi_dn)
            price = price + asset.drift * dt + sqdt * xi * w
            x = x + sqdt * xi
        return np.asarray(payoff(price), dtype=float)

    values = map_blocks(seed, paths, block)
    values = values + steps * simple_rate * dt
    price = float(values.mean())
    stderr = float(values.std(ddof=1) / math.sqrt(values.size))
    return price, stderr
