"""Path simulators: arithmetic and geometric Brownian motion, Brownian
decompositions with local time, the coupled horizontal-vertical walk, skew
Brownian constructions, and an absorbed-at-zero price model.

Grid convention: every simulator returns vertex values on the uniform grid
t_k = k * horizon / steps.  Brownian-derived processes are read as piecewise
linear between vertices (the local-time estimator integrates the linear
interpolant); tree-style price paths elsewhere in the package are
right-continuous steps instead.

Randomness follows the block-substream contract in ``_rng``: one master
seed, one substream per fixed-size block of paths, block-ordered
concatenation, hence bit-identical reruns.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ._rng import map_blocks
from .errors import InputError
from .model import AbmParams

__all__ = [
    "SkewTriplet",
    "BrownianDecomposition",
    "AbsorbedPathSpec",
    "time_grid",
    "simulate_abm",
    "simulate_gbm",
    "brownian_paths",
    "brownian_decompose",
    "horizontal_vertical_walk",
    "z_gamma_path",
    "combine_skew_paths",
    "gsbm_path",
    "ito_mckean_sbm",
    "simulate_absorbed",
]


def time_grid(horizon: float, steps: int) -> np.ndarray:
    if steps < 1:
        raise InputError(f"steps must be >= 1, got {steps}")
    if horizon <= 0.0:
        raise InputError(f"horizon must be > 0, got {horizon}")
    return np.linspace(0.0, float(horizon), steps + 1)


def _maybe_single(arr: np.ndarray, paths: int | None) -> np.ndarray:
    return arr[0] if paths is None else arr


def brownian_paths(
    steps: int, horizon: float, seed: int, paths: int | None = None
) -> np.ndarray:
    """Standard Brownian motion vertices, shape (paths, steps + 1)."""
    time_grid(horizon, steps)  # validates
    dt = float(horizon) / steps
    n = 1 if paths is None else int(paths)

    def block(rng: np.random.Generator, k: int) -> np.ndarray:
        incr = rng.normal(0.0, math.sqrt(dt), size=(k, steps))
        out = np.empty((k, steps + 1))
        out[:, 0] = 0.0
        np.cumsum(incr, axis=1, out=out[:, 1:])
        return out

    return _maybe_single(map_blocks(seed, n, block), paths)


def simulate_abm(
    params: AbmParams, horizon: float, steps: int, seed: int,
    paths: int | None = None,
) -> np.ndarray:
    """Arithmetic Brownian motion A_k = A_0 + rho*t_k + v*W_k.

    Exact in distribution at the grid vertices for any step count.
    """
    t = time_grid(horizon, steps)
    w = brownian_paths(steps, horizon, seed, paths=paths)
    return params.initial_value + params.drift * t + params.volatility * w


def simulate_gbm(
    mu: float, sigma: float, s0: float, horizon: float, steps: int, seed: int,
    paths: int | None = None,
) -> np.ndarray:
    """Geometric Brownian motion simulated exactly in log space."""
    if s0 <= 0.0:
        raise InputError(f"s0 must be > 0, got {s0}")
    if sigma <= 0.0:
        raise InputError(f"sigma must be > 0, got {sigma}")
    t = time_grid(horizon, steps)
    w = brownian_paths(steps, horizon, seed, paths=paths)
    return s0 * np.exp((mu - 0.5 * sigma**2) * t + sigma * w)


@dataclass(frozen=True)
class BrownianDecomposition:
    """A Brownian path split into its pointwise negative part min(B, 0),
    positive part max(B, 0), and an estimated local time at zero.

    min_part + max_part reproduces the path exactly; local_time starts at 0
    and never decreases.  eps records the occupation band half-width used by
    the estimator.
    """

    path: np.ndarray
    min_part: np.ndarray
    max_part: np.ndarray
    local_time: np.ndarray
    eps: float


def _occupation_local_time(b: np.ndarray, dt: float, eps: float) -> np.ndarray:
    """Local time via occupation of (-eps, eps) by the piecewise-linear path.

    Each linear segment contributes the exact fraction of its duration spent
    inside the band; the running total is scaled by 1/(2*eps).  Integrating
    the interpolant (rather than counting vertices inside the band) removes
    most of the downward bias from sub-grid excursions.
    """
    left = b[..., :-1]
    right = b[..., 1:]
    lo = np.minimum(left, right)
    hi = np.maximum(left, right)
    width = hi - lo
    overlap = np.clip(np.minimum(hi, eps) - np.maximum(lo, -eps), 0.0, None)
    flat_inside = (np.abs(left) < eps).astype(float)
    frac = np.where(width > 0.0, overlap / np.where(width > 0.0, width, 1.0),
                    flat_inside)
    occ = np.cumsum(frac, axis=-1) * (dt / (2.0 * eps))
    zero = np.zeros(b.shape[:-1] + (1,))
    return np.concatenate([zero, occ], axis=-1)


def brownian_decompose(
    steps: int, horizon: float, seed: int, paths: int | None = None,
    eps_scale: float = 1.0,
) -> BrownianDecomposition:
    """Simulate Brownian motion and decompose it; eps = eps_scale*sqrt(dt).

    The default band width sqrt(dt) balances the band-size bias (order eps)
    against sub-grid occupation error; the estimator is validated against
    E[L_1] = sqrt(2/pi) in the test suite.
    """
    if eps_scale <= 0.0:
        raise InputError(f"eps_scale must be > 0, got {eps_scale}")
    b = brownian_paths(steps, horizon, seed, paths=paths)
    dt = float(horizon) / steps
    eps = eps_scale * math.sqrt(dt)
    return BrownianDecomposition(
        path=b,
        min_part=np.minimum(b, 0.0),
        max_part=np.maximum(b, 0.0),
        local_time=_occupation_local_time(b, dt, eps),
        eps=eps,
    )


def horizontal_vertical_walk(
    xi: np.ndarray, scale: int | None = None, return_paths: bool = True,
):
    """Coupled walk: X advances by the next sign only while Y > X, otherwise
    Y retreats by it.  Vertices are rescaled by scale**-0.5.

    Args:
        xi: sign innovations with mean 0 and variance 1, last axis = steps.
        scale: rescaling step count n; defaults to the number of steps.
        return_paths: when False, only the rescaled terminal pair is
            returned, which keeps large Monte Carlo batches in memory bounds.

    Returns:
        (X, Y) vertex paths with a leading zero vertex, or the terminal pair.
    """
    xi = np.asarray(xi, dtype=float)
    if xi.ndim == 0 or xi.shape[-1] < 1:
        raise InputError("xi must contain at least one step along its last axis")
    nsteps = xi.shape[-1]
    n = nsteps if scale is None else int(scale)
    if n < 1:
        raise InputError(f"scale must be >= 1, got {scale}")
    lead = xi.shape[:-1]
    x = np.zeros(lead)
    y = np.zeros(lead)
    if return_paths:
        xs = np.zeros(lead + (nsteps + 1,))
        ys = np.zeros(lead + (nsteps + 1,))
    for k in range(nsteps):
        step = xi[..., k]
        move_x = y > x
        x = np.where(move_x, x + step, x)
        y = np.where(move_x, y, y - step)
        if return_paths:
            xs[..., k + 1] = x
            ys[..., k + 1] = y
    root = math.sqrt(n)
    if return_paths:
        return xs / root, ys / root
    return x / root, y / root


@dataclass(frozen=True)
class SkewTriplet:
    """Weights (gamma_minus, gamma_zero, gamma_plus) for skew combinations."""

    gamma_minus: float
    gamma_zero: float
    gamma_plus: float

    def __post_init__(self):
        for name in ("gamma_minus", "gamma_zero", "gamma_plus"):
            if not math.isfinite(getattr(self, name)):
                raise InputError(f"{name} must be finite")


def z_gamma_path(decomp: BrownianDecomposition, gamma: SkewTriplet) -> np.ndarray:
    """Single-driver skew combination gamma_minus*min(B,0) + gamma_zero*L +
    gamma_plus*max(B,0), evaluated pointwise on the decomposition."""
    return (
        gamma.gamma_minus * decomp.min_part
        + gamma.gamma_zero * decomp.local_time
        + gamma.gamma_plus * decomp.max_part
    )


def combine_skew_paths(
    gamma: SkewTriplet, b1: np.ndarray, b2: np.ndarray, b3: np.ndarray
) -> np.ndarray:
    """Three-driver skew combination (gamma_minus+gamma_zero)*min(b1,0) -
    gamma_zero*b2 + (gamma_plus+gamma_zero)*max(b3,0).

    The middle driver stands in for the sign-integral of an independent
    Brownian motion, which is itself a Brownian motion in law.  Passing the
    same array for b1 and b3 collapses min+max to the path itself, which
    tests use to recover plain Brownian motion at gamma = (1, 0, 1).
    """
    return (
        (gamma.gamma_minus + gamma.gamma_zero) * np.minimum(b1, 0.0)
        - gamma.gamma_zero * b2
        + (gamma.gamma_plus + gamma.gamma_zero) * np.maximum(b3, 0.0)
    )


def gsbm_path(
    gammas: SkewTriplet, steps: int, horizon: float, seed: int,
    paths: int | None = None,
) -> np.ndarray:
    """Generalized skew Brownian path from three independent drivers."""
    time_grid(horizon, steps)
    dt = float(horizon) / steps
    n = 1 if paths is None else int(paths)

    def block(rng: np.random.Generator, k: int) -> np.ndarray:
        incr = rng.normal(0.0, math.sqrt(dt), size=(3, k, steps))
        drivers = np.zeros((3, k, steps + 1))
        np.cumsum(incr, axis=2, out=drivers[:, :, 1:])
        return combine_skew_paths(gammas, drivers[0], drivers[1], drivers[2])

    return _maybe_single(map_blocks(seed, n, block), paths)


def ito_mckean_sbm(
    delta: float, steps: int, horizon: float, seed: int,
    paths: int | None = None, method: str = "sum",
) -> np.ndarray:
    """Skew Brownian path for skewness parameter delta in (-1, 1).

    method="sum" uses sqrt(1-delta^2)*B1 + delta*|B2| with independent
    drivers.  method="mixture" flips one coin per path and returns |B| with
    probability (1+delta)/2, else -|B|.  The two agree in mean and variance
    for every delta but in law only at delta = 0; the test suite documents
    the distributional gap instead of hiding it.
    """
    delta = float(delta)
    if not abs(delta) < 1.0:
        raise InputError(f"delta must satisfy |delta| < 1, got {delta}")
    if method not in ("sum", "mixture"):
        raise InputError(f"method must be 'sum' or 'mixture', got {method!r}")
    time_grid(horizon, steps)
    dt = float(horizon) / steps
    n = 1 if paths is None else int(paths)

    def block_sum(rng: np.random.Generator, k: int) -> np.ndarray:
        incr = rng.normal(0.0, math.sqrt(dt), size=(2, k, steps))
        drivers = np.zeros((2, k, steps + 1))
        np.cumsum(incr, axis=2, out=drivers[:, :, 1:])
        return (math.sqrt(1.0 - delta**2) * drivers[0]
                + delta * np.abs(drivers[1]))

    def block_mixture(rng: np.random.Generator, k: int) -> np.ndarray:
        alpha = (1.0 + delta) / 2.0
        signs = np.where(rng.random(k) < alpha, 1.0, -1.0)
        incr = rng.normal(0.0, math.sqrt(dt), size=(k, steps))
        b = np.zeros((k, steps + 1))
        np.cumsum(incr, axis=1, out=b[:, 1:])
        return signs[:, None] * np.abs(b)

    block = block_sum if method == "sum" else block_mixture
    return _maybe_single(map_blocks(seed, n, block), paths)


@dataclass(frozen=True)
class AbsorbedPathSpec:
    """Arithmetic Brownian price started above zero and killed at zero."""

    abm: AbmParams
    horizon: float

    def __post_init__(self):
        if self.abm.initial_value <= 0.0:
            raise InputError(
                f"initial_value must be > 0, got {self.abm.initial_value}"
            )
        if self.horizon <= 0.0:
            raise InputError(f"horizon must be > 0, got {self.horizon}")


def simulate_absorbed(
    spec: AbsorbedPathSpec, steps: int, seed: int, paths: int | None = None,
):
    """Simulate the price until the first grid time it is <= 0, then hold it
    at exactly 0 through the horizon.

    Returns (path, absorption_time) for a single path, with absorption_time
    None when the path survives; for a batch, (paths_array, times_array)
    where unabsorbed entries carry NaN.
    """
    raw = simulate_abm(spec.abm, spec.horizon, steps, seed,
                       paths=1 if paths is None else paths)
    raw = np.atleast_2d(raw)
    dt = float(spec.horizon) / steps
    hit = raw <= 0.0
    absorbed = hit.any(axis=1)
    first = np.argmax(hit, axis=1)  # first True; 0 when never absorbed
    k = np.arange(steps + 1)
    frozen = np.where(absorbed[:, None] & (k[None, :] >= first[:, None]),
                      0.0, raw)
    times = np.where(absorbed, first * dt, np.nan)
    if paths is None:
        return frozen[0], (float(times[0]) if absorbed[0] else None)
    return frozen, times
