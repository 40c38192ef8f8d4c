"""Command-line interface: CSV ingestion, parameter estimation, dispatch,
and JSON result emission.

Every command emits a JSON document with top-level keys "command", "inputs"
(the full resolved configuration), "results", "seed" (null when no
randomness was consumed), and "version".  Commands that produce delimited
data (simulate, convergence-report) write a CSV file plus a rendered PNG
figure at the same stem; the others write the JSON document to --out when
given, standard output otherwise.  Validation failures print a
machine-readable error JSON on the error stream and exit with status 2.
Repeat runs with the same seed produce byte-identical output.

CSV schemas (exact headers):
  prices:          t,value
  esg_records:     date,price,company_score,benchmark_score
  factor_changes:  t,change

Dates are ISO-8601 and convert to fractional years counting actual days
from 1970-01-01 over a fixed 365-day year; bare numbers are taken as
fractional years directly.
"""

from __future__ import annotations

import csv
import datetime as _dt
import json
import math
import sys
import warnings
from dataclasses import dataclass
from pathlib import Path

import click
import numpy as np

from . import __version__
from .errors import InputError, ToolkitError
from .esg import (
    EsgAffinity,
    EsgRecord,
    esg_adjusted_price,
    exp_transform,
    geo_transform,
    implied_affinity,
    record_at,
    relative_score,
    transformed_relative_score,
    year_fraction,
)
from .model import (
    AbmParams,
    SiaParams,
    VanillaCall,
    bachelier_call_sia,
    bachelier_call_zero_rate,
    bachelier_hedge,
    call_payoff,
    implied_simple_rate,
    market_price_of_risk,
)
from .pathdep import (
    FactorModelParams,
    PathDepAssetParams,
    PiecewiseFn,
    estimate_factor_sign_probs,
    pathdep_price,
)
from .simulate import (
    SkewTriplet,
    brownian_decompose,
    gsbm_path,
    simulate_abm,
    time_grid,
    z_gamma_path,
)
from .trees import (
    BachelierTreeSpec,
    ClassicalTreeSpec,
    RnMode,
    bachelier_price,
    bachelier_rn_prob,
    bachelier_updown,
    classical_price,
    classical_rn_prob,
    classical_updown,
)

__all__ = [
    "PriceSeries",
    "load_csv",
    "estimate_spot_params",
    "run_command",
    "main",
]

_SCHEMAS = {
    "prices": ["t", "value"],
    "esg_records": ["date", "price", "company_score", "benchmark_score"],
    "factor_changes": ["t", "change"],
}


@dataclass(frozen=True)
class PriceSeries:
    """Strictly increasing fractional-year timestamps with observed prices."""

    times: tuple[float, ...]
    values: tuple[float, ...]

    def __post_init__(self):
        times = tuple(float(t) for t in self.times)
        values = tuple(float(v) for v in self.values)
        if len(times) != len(values):
            raise InputError("times and values must have equal length")
        if len(times) < 2:
            raise InputError(f"need >= 2 points, got {len(times)}")
        if any(not math.isfinite(x) for x in times + values):
            raise InputError("times and values must be finite")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise InputError("times must be strictly increasing")
        object.__setattr__(self, "times", times)
        object.__setattr__(self, "values", values)


def _parse_stamp(text: str):
    """ISO-8601 date or fractional year."""
    text = text.strip()
    try:
        return _dt.date.fromisoformat(text)
    except ValueError:
        pass
    try:
        return float(text)
    except ValueError:
        raise InputError(
            f"expected an ISO-8601 date or a number, got {text!r}"
        ) from None


def _parse_float(text: str, where: str) -> float:
    try:
        value = float(text)
    except ValueError:
        raise InputError(f"{where}: cannot parse {text!r} as a number") from None
    if not math.isfinite(value):
        raise InputError(f"{where}: non-finite value {text!r} rejected")
    return value


def load_csv(path, schema: str):
    """Parse and validate a CSV file against one of the fixed schemas.

    Returns a PriceSeries for "prices", a list of EsgRecord for
    "esg_records", and a (times, changes) array pair for "factor_changes".
    Rows are validated one by one; errors carry 1-based row numbers
    (header = row 1).  NaN and infinite values are rejected, and timestamps
    must be strictly increasing.
    """
    if schema not in _SCHEMAS:
        raise InputError(
            f"unknown schema {schema!r}; expected one of {sorted(_SCHEMAS)}"
        )
    expected = _SCHEMAS[schema]
    try:
        text = Path(path).read_text()
    except OSError as exc:
        raise InputError(f"cannot read {path}: {exc}") from None
    rows = [row for row in csv.reader(text.splitlines())]
    if not rows:
        raise InputError(
            f"{path}: empty file; expected header {','.join(expected)!r}"
        )
    header = [cell.strip() for cell in rows[0]]
    if header != expected:
        raise InputError(
            f"{path}: header must be exactly {','.join(expected)!r}, "
            f"got {','.join(header)!r}"
        )
    body = [
        (i + 2, row) for i, row in enumerate(rows[1:])
        if any(cell.strip() for cell in row)
    ]
    if not body:
        raise InputError(f"{path}: no data rows")
    for rownum, row in body:
        if len(row) != len(expected):
            raise InputError(
                f"{path} row {rownum}: expected {len(expected)} columns, "
                f"got {len(row)}"
            )

    if schema == "esg_records":
        records = []
        for rownum, row in body:
            where = f"{path} row {rownum}"
            stamp = _parse_stamp(row[0])
            try:
                records.append(EsgRecord(
                    timestamp=stamp,
                    stock_price=_parse_float(row[1], where),
                    company_score=_parse_float(row[2], where),
                    benchmark_score=_parse_float(row[3], where),
                ))
            except ToolkitError as exc:
                raise InputError(f"{where}: {exc}") from None
        stamps = [r.timestamp for r in records]
        for i, (a, b) in enumerate(zip(stamps, stamps[1:])):
            if b <= a:
                raise InputError(
                    f"{path} row {body[i + 1][0]}: timestamps must be "
                    f"strictly increasing ({b} after {a})"
                )
        return records

    times, values = [], []
    for rownum, row in body:
        where = f"{path} row {rownum}"
        times.append(_parse_float(row[0], where))
        values.append(_parse_float(row[1], where))
    for i, (a, b) in enumerate(zip(times, times[1:])):
        if b <= a:
            raise InputError(
                f"{path} row {body[i + 1][0]}: timestamps must be strictly "
                f"increasing ({b} after {a})"
            )
    if schema == "prices":
        return PriceSeries(times=tuple(times), values=tuple(values))
    return np.asarray(times), np.asarray(values)


def _uniform_dt(times, what: str) -> float:
    dts = np.diff(np.asarray(times, dtype=float))
    mean_dt = float(dts.mean())
    if np.max(np.abs(dts - mean_dt)) > 1e-9 * abs(mean_dt):
        worst = int(np.argmax(np.abs(dts - mean_dt)))
        raise InputError(
            f"{what} requires uniform spacing (tolerance 1e-9 relative); "
            f"step {worst} has dt = {dts[worst]} vs mean {mean_dt}"
        )
    return mean_dt


def estimate_spot_params(series: PriceSeries) -> tuple[float, float]:
    """Drift and volatility estimates from a uniformly spaced price series.

    rho_hat = mean(changes)/dt and v_hat = sqrt(unbiased var(changes)/dt).
    A constant series returns v_hat = 0, which downstream parameter types
    reject with their own diagnostic.

    Raises:
        InputError: fewer than 30 changes or non-uniform spacing.
    """
    changes = np.diff(np.asarray(series.values))
    if changes.size < 30:
        raise InputError(
            f"need >= 30 price changes to estimate, got {changes.size}"
        )
    dt = _uniform_dt(series.times, "estimation")
    rho = float(changes.mean() / dt)
    v = float(math.sqrt(changes.var(ddof=1) / dt))
    return rho, v


# --- output helpers ---------------------------------------------------------


def _jsonable(obj):
    if isinstance(obj, dict):
        return {str(k): _jsonable(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_jsonable(v) for v in obj]
    if isinstance(obj, np.ndarray):
        return [_jsonable(v) for v in obj.tolist()]
    if isinstance(obj, RnMode):
        return obj.value
    if isinstance(obj, np.floating):
        return float(obj)
    if isinstance(obj, np.integer):
        return int(obj)
    return obj


def _dump_json(doc: dict) -> str:
    return json.dumps(doc, sort_keys=True, indent=2) + "\n"


def _write_csv(path, header: list[str], columns) -> None:
    arrays = [np.asarray(col, dtype=float) for col in columns]
    with open(path, "w", newline="") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(header)
        for row in zip(*arrays):
            writer.writerow([repr(float(x)) for x in row])


def _render_png(path, draw) -> None:
    import matplotlib

    matplotlib.use("Agg", force=True)
    import matplotlib.pyplot as plt

    fig, ax = plt.subplots(figsize=(8.0, 4.5))
    draw(ax)
    ax.grid(True, alpha=0.3)
    fig.tight_layout()
    fig.savefig(path, dpi=120)
    plt.close(fig)


def _out_stem(out, default_name: str) -> Path:
    path = Path(out) if out else Path(default_name)
    return path if path.suffix == ".csv" else path.with_suffix(".csv")


# --- small parsers for structured option values -----------------------------


def _parse_feedback(text: str) -> PiecewiseFn:
    """Feedback grammar: sign | identity | constant:<c> | linear:<a>,<b> |
    indicator:<lo>,<hi>."""
    name, _, args = text.strip().partition(":")
    try:
        if name == "sign" and not args:
            return PiecewiseFn.sign()
        if name == "identity" and not args:
            return PiecewiseFn.linear(0.0, 1.0)
        if name == "constant":
            return PiecewiseFn.constant(float(args))
        if name == "linear":
            a, b = (float(x) for x in args.split(","))
            return PiecewiseFn.linear(a, b)
        if name == "indicator":
            lo, hi = (float(x) for x in args.split(","))
            return PiecewiseFn.indicator(lo, hi)
    except (ValueError, TypeError):
        pass
    raise InputError(
        f"cannot parse feedback {text!r}; expected sign, identity, "
        "constant:<c>, linear:<a>,<b>, or indicator:<lo>,<hi>"
    )


def _parse_coeff_list(text: str, count: int, what: str) -> tuple[float, ...]:
    try:
        parts = tuple(float(x) for x in str(text).split(","))
    except ValueError:
        raise InputError(f"cannot parse {what} {text!r}") from None
    if not 1 <= len(parts) <= count:
        raise InputError(f"{what} takes 1..{count} comma-separated numbers")
    return parts + (0.0,) * (count - len(parts))


def _parse_levels(text: str) -> list[int]:
    try:
        levels = [int(x) for x in str(text).split(",")]
    except ValueError:
        raise InputError(f"cannot parse levels {text!r}") from None
    if not levels or any(n < 1 for n in levels):
        raise InputError("levels must be positive integers")
    return levels


def _payoff_fn(name: str, strike: float):
    if name == "call":
        return lambda x: call_payoff(x, strike)
    if name == "digital":
        return lambda x: (np.asarray(x, dtype=float) > strike).astype(float)
    raise InputError(f"unknown payoff {name!r}; expected call or digital")


# --- command handlers -------------------------------------------------------
# Each handler maps the resolved parameter dict to (results, seed_used,
# json_path) where json_path None routes the document to --out or stdout.


def _run_price(p):
    abm = AbmParams(initial_value=float(p["spot"]), drift=float(p["drift"]),
                    volatility=float(p["vol"]))
    sia = SiaParams(initial_balance=float(p["balance"]),
                    simple_rate=float(p["rate"]))
    opt = VanillaCall(strike=float(p["strike"]), maturity=float(p["maturity"]))
    t = float(p["t"])
    spot = float(p["spot"])
    stock_units, account_units = bachelier_hedge(abm, opt, t, spot)
    with warnings.catch_warnings():
        warnings.simplefilter("ignore")
        theta = market_price_of_risk(abm, sia).theta
    results = {
        "call_price": float(bachelier_call_sia(abm, sia, opt, t, spot)),
        "zero_rate_call_price": float(
            bachelier_call_zero_rate(abm, opt, t, spot)
        ),
        "hedge": {
            "stock_units": float(stock_units),
            "account_units": float(account_units),
        },
        "market_price_of_risk": float(theta),
    }
    return results, None, None


def _run_tree(p):
    payoff = _payoff_fn(p["payoff"], float(p["strike"]))
    if p["engine"] == "classical":
        spec = ClassicalTreeSpec(
            steps=int(p["steps"]), horizon=float(p["maturity"]),
            up_prob=float(p["up_prob"]), mean_return=float(p["mean_return"]),
            variance_return=float(p["variance_return"]),
            riskless_rate=float(p["rate"]), initial_price=float(p["spot"]),
        )
        up, down = classical_updown(spec)
        results = {
            "engine": "classical",
            "price": float(classical_price(spec, payoff)),
            "risk_neutral_prob": float(classical_rn_prob(spec)),
            "up_return": float(up),
            "down_return": float(down),
        }
    else:
        spec = BachelierTreeSpec(
            steps=int(p["steps"]), horizon=float(p["maturity"]),
            up_probs=float(p["up_prob"]), drift=float(p["drift"]),
            volatility=float(p["vol"]), simple_rate=float(p["rate"]),
            initial_price=float(p["spot"]), rn_mode=RnMode(p["rn_mode"]),
        )
        valuation = bachelier_price(spec, payoff)
        up, down = bachelier_updown(spec)
        results = {
            "engine": "bachelier",
            "price": float(valuation.price),
            "risk_neutral_prob": float(bachelier_rn_prob(spec)),
            "up_increment": float(up),
            "down_increment": float(down),
            "initial_hedge_ratio": float(valuation.hedges[0][0]),
        }
    return results, None, None


def _run_pathdep(p):
    asset = PathDepAssetParams(
        drift=float(p["drift"]), vol_direct=float(p["vol_direct"]),
        vol_feedback=float(p["vol_feedback"]),
        feedback_fn=_parse_feedback(p["feedback"]),
    )
    factor = FactorModelParams(
        drift=float(p["factor_drift"]), volatility=float(p["factor_vol"]),
        initial_value=float(p["factor_initial"]),
        sign_prob_coeffs=_parse_coeff_list(
            p["factor_probs"], 3, "factor probabilities"
        ),
    )
    payoff = _payoff_fn(p["payoff"], float(p["strike"]))
    price, stderr = pathdep_price(
        asset, factor, payoff, steps=int(p["steps"]),
        horizon=float(p["maturity"]), paths=int(p["paths"]),
        seed=int(p["seed"]), initial=float(p["spot"]),
        simple_rate=float(p["rate"]), rn_mode=RnMode(p["rn_mode"]),
    )
    return {"price": price, "stderr": stderr}, int(p["seed"]), None


def _run_simulate(p):
    steps = int(p["steps"])
    horizon = float(p["maturity"])
    seed = int(p["seed"])
    figure = (p["figure"] or "").upper() or None
    t = time_grid(horizon, steps)

    if figure is None:
        params = AbmParams(initial_value=float(p["spot"]),
                           drift=float(p["drift"]),
                           volatility=float(p["vol"]))
        sample = simulate_abm(params, horizon, steps, seed,
                              paths=int(p["paths"]))
        csv_path = _out_stem(p["out"], "simulate_abm.csv")
        _write_csv(csv_path, ["t", "value"], [t, sample[0]])
        png_path = csv_path.with_suffix(".png")
        shown = sample[: min(10, sample.shape[0])]

        def draw(ax):
            for row in shown:
                ax.plot(t, row, lw=0.8)
            ax.set_xlabel("t (years)")
            ax.set_ylabel("price")
            ax.set_title(
                f"Arithmetic Brownian paths (drift={params.drift}, "
                f"vol={params.volatility})"
            )

        _render_png(png_path, draw)
        terminal = sample[:, -1]
        results = {
            "terminal_mean": float(terminal.mean()),
            "terminal_std": float(terminal.std(ddof=1)),
            "csv": str(csv_path),
            "figure_png": str(png_path),
        }
        return results, seed, None

    if figure in ("A1", "A2"):
        x = np.linspace(0.0, 100.0, 201)
        if figure == "A1":
            a = float(p["transform_a"])
            y = exp_transform(x, a)
            label = f"exponential transform, a={a}"
        else:
            b = float(p["transform_b"])
            y = geo_transform(x, b)
            label = f"geometric transform, b={b}"
        csv_path = _out_stem(p["out"], f"figure_{figure.lower()}.csv")
        _write_csv(csv_path, ["x", "value"], [x, y])
        png_path = csv_path.with_suffix(".png")

        def draw(ax):
            ax.plot(x, y)
            ax.set_xlabel("raw score x")
            ax.set_ylabel("transformed score")
            ax.set_title(label)

        _render_png(png_path, draw)
        results = {"csv": str(csv_path), "figure_png": str(png_path),
                   "columns": ["x", "value"]}
        return results, None, None

    if figure == "B3":
        decomp = brownian_decompose(steps, horizon, seed)
        z = z_gamma_path(decomp, SkewTriplet(1.0, 1.0, 1.0))
        gap = float(np.max(np.abs(z - (decomp.path + decomp.local_time))))
        csv_path = _out_stem(p["out"], "figure_b3.csv")
        _write_csv(csv_path, ["t", "brownian", "z_111"], [t, decomp.path, z])
        png_path = csv_path.with_suffix(".png")

        def draw(ax):
            ax.plot(t, decomp.path, label="Brownian path")
            ax.plot(t, z, label="path + local time")
            ax.set_xlabel("t (years)")
            ax.legend()
            ax.set_title("Skew combination with weights (1, 1, 1)")

        _render_png(png_path, draw)
        results = {"csv": str(csv_path), "figure_png": str(png_path),
                   "columns": ["t", "brownian", "z_111"],
                   "max_identity_gap": gap}
        return results, seed, None

    weights = {"B4": (2.0, -1.0, 2.0), "B5": (11.0, -1.0, 2.0)}[figure]
    trajectories = gsbm_path(SkewTriplet(*weights), steps, horizon, seed,
                             paths=10)
    csv_path = _out_stem(p["out"], f"figure_{figure.lower()}.csv")
    names = [f"traj_{i + 1}" for i in range(trajectories.shape[0])]
    _write_csv(csv_path, ["t"] + names, [t] + list(trajectories))
    png_path = csv_path.with_suffix(".png")

    def draw(ax):
        for row in trajectories:
            ax.plot(t, row, lw=0.8)
        ax.set_xlabel("t (years)")
        ax.set_title(
            f"Ten skewed trajectories, weights {weights}"
        )

    _render_png(png_path, draw)
    results = {"csv": str(csv_path), "figure_png": str(png_path),
               "columns": ["t"] + names, "weights": list(weights)}
    return results, seed, None


def _run_esg(p):
    if p["data"]:
        records = load_csv(p["data"], "esg_records")
        if p["date"]:
            record = record_at(records, _parse_stamp(p["date"]))
        else:
            record = records[-1]
    else:
        record = EsgRecord(
            timestamp=0.0, stock_price=float(p["price"]),
            company_score=float(p["company_score"]),
            benchmark_score=float(p["benchmark_score"]),
        )
    gamma = float(p["gamma"])
    transform = p["transform"]
    if transform == "none":
        rel = relative_score(record)
        adjusted = esg_adjusted_price(record, EsgAffinity(gamma))
    else:
        if transform == "exp":
            a = float(p["transform_a"])
            rel = transformed_relative_score(
                record, lambda x: exp_transform(x, a)
            )
        else:
            b = float(p["transform_b"])
            rel = transformed_relative_score(
                record, lambda x: geo_transform(x, b)
            )
        adjusted = record.stock_price * (1.0 + gamma * rel)
    results = {
        "relative_score": float(rel),
        "adjusted_price": float(adjusted),
        "gamma": gamma,
        "transform": transform,
        "record": {
            "timestamp": record.timestamp,
            "stock_price": record.stock_price,
            "company_score": record.company_score,
            "benchmark_score": record.benchmark_score,
        },
    }
    return results, None, None


def _run_estimate(p):
    if not p["data"]:
        raise InputError("estimate requires --data <csv>")
    if p["schema"] == "prices":
        series = load_csv(p["data"], "prices")
        rho, vol = estimate_spot_params(series)
        results = {
            "drift": rho,
            "volatility": vol,
            "dt": _uniform_dt(series.times, "estimation"),
            "n_changes": len(series.values) - 1,
        }
    else:
        times, changes = load_csv(p["data"], "factor_changes")
        dt = _uniform_dt(times, "sign-probability estimation")
        coeffs = estimate_factor_sign_probs(changes, dt)
        results = {
            "sign_prob_coeffs": list(coeffs),
            "dt": dt,
            "n_changes": int(changes.size),
        }
    return results, None, None


def _run_implied_rate(p):
    asset1 = AbmParams(initial_value=0.0, drift=float(p["drift1"]),
                       volatility=float(p["vol1"]))
    asset2 = AbmParams(initial_value=0.0, drift=float(p["drift2"]),
                       volatility=float(p["vol2"]))
    rate = implied_simple_rate(asset1, asset2)
    theta1 = (asset1.drift - rate) / asset1.volatility
    results = {"implied_rate": float(rate),
               "market_price_of_risk": float(theta1)}
    return results, None, None


def _run_implied_affinity(p):
    record = EsgRecord(
        timestamp=0.0, stock_price=float(p["price"]),
        company_score=float(p["company_score"]),
        benchmark_score=float(p["benchmark_score"]),
    )
    gamma = implied_affinity(float(p["observed"]), record)
    reproduced = esg_adjusted_price(record, EsgAffinity(gamma))
    results = {
        "gamma": float(gamma),
        "relative_score": float(relative_score(record)),
        "reproduced_price": float(reproduced),
    }
    return results, None, None


def _run_convergence_report(p):
    abm = AbmParams(initial_value=float(p["spot"]), drift=float(p["drift"]),
                    volatility=float(p["vol"]))
    sia = SiaParams(simple_rate=float(p["rate"]))
    opt = VanillaCall(strike=float(p["strike"]), maturity=float(p["maturity"]))
    payoff = _payoff_fn("call", opt.strike)
    reference = float(bachelier_call_sia(abm, sia, opt, 0.0, abm.initial_value))
    levels = _parse_levels(p["levels"])
    rows = []
    for n in levels:
        base = dict(
            steps=n, horizon=opt.maturity, up_probs=float(p["up_prob"]),
            drift=abm.drift, volatility=abm.volatility,
            simple_rate=sia.simple_rate, initial_price=abm.initial_value,
        )
        as_written = bachelier_price(
            BachelierTreeSpec(rn_mode=RnMode.AS_WRITTEN, **base), payoff
        ).price
        martingale = bachelier_price(
            BachelierTreeSpec(rn_mode=RnMode.MARTINGALE, **base), payoff
        ).price
        rows.append({
            "n": n,
            "as_written": as_written,
            "martingale": martingale,
            "reference": reference,
            "as_written_error": abs(as_written - reference),
            "martingale_error": abs(martingale - reference),
            "mode_gap": as_written - martingale,
        })

    stem = _out_stem(p["out"], "convergence_report.csv")
    header = ["n", "as_written", "martingale", "reference",
              "as_written_error", "martingale_error", "mode_gap"]
    _write_csv(stem, header, [[row[k] for row in rows] for k in header])
    png_path = stem.with_suffix(".png")

    def draw(ax):
        ns = [row["n"] for row in rows]
        ax.loglog(ns, [row["as_written_error"] for row in rows],
                  "o-", label="as-written |error|")
        ax.loglog(ns, [row["martingale_error"] for row in rows],
                  "s--", label="martingale |error|")
        ax.set_xlabel("steps n")
        ax.set_ylabel("|tree - closed form|")
        ax.set_title(
            f"Additive tree convergence (rate={sia.simple_rate})"
        )
        ax.legend()

    _render_png(png_path, draw)

    click.echo(
        f"{'n':>6}  {'as-written':>14}  {'martingale':>14}  "
        f"{'reference':>14}  {'mode gap':>12}"
    )
    for row in rows:
        click.echo(
            f"{row['n']:>6d}  {row['as_written']:>14.6f}  "
            f"{row['martingale']:>14.6f}  {row['reference']:>14.6f}  "
            f"{row['mode_gap']:>12.6f}"
        )
    if sia.simple_rate != 0.0:
        click.echo(
            "note: with a nonzero simple rate the modes center the price "
            "change differently (as-written at 0, martingale at rate*dt), "
            "so their prices differ"
        )

    results = {"rows": rows, "reference": reference, "csv": str(stem),
               "figure_png": str(png_path)}
    return results, None, str(stem.with_suffix(".json"))


_HANDLERS = {
    "price": _run_price,
    "tree": _run_tree,
    "pathdep": _run_pathdep,
    "simulate": _run_simulate,
    "esg": _run_esg,
    "estimate": _run_estimate,
    "implied-rate": _run_implied_rate,
    "implied-affinity": _run_implied_affinity,
    "convergence-report": _run_convergence_report,
}


def run_command(config: dict) -> tuple[int, dict, str | None]:
    """Dispatch one resolved configuration and build its result document.

    Returns (exit_status, document, json_path); json_path None means the
    caller should honor --out / stdout routing.
    """
    config = dict(config)
    command = config.pop("command", None)
    if command not in _HANDLERS:
        raise InputError(
            f"unknown command {command!r}; expected one of {sorted(_HANDLERS)}"
        )
    results, seed_used, json_path = _HANDLERS[command](config)
    document = {
        "command": command,
        "inputs": _jsonable(config),
        "results": _jsonable(results),
        "seed": seed_used,
        "version": __version__,
    }
    return 0, document, json_path


# --- click wiring ------------------------------------------------------------


def _fail(exc: Exception):
    doc = {"error": {"type": type(exc).__name__, "message": str(exc)}}
    sys.stderr.write(json.dumps(doc, sort_keys=True) + "\n")
    sys.exit(2)


def _merge_config(ctx: click.Context, params: dict) -> dict:
    """Overlay --config JSON onto defaulted parameters; explicit flags win."""
    cfg_path = params.get("config")
    if not cfg_path:
        return params
    try:
        raw = json.loads(Path(cfg_path).read_text())
    except OSError as exc:
        raise InputError(f"cannot read config {cfg_path}: {exc}") from None
    except json.JSONDecodeError as exc:
        raise InputError(
            f"config {cfg_path} is not valid JSON: {exc}"
        ) from None
    if not isinstance(raw, dict):
        raise InputError("config must be a JSON object of option values")
    from click.core import ParameterSource

    for key, value in raw.items():
        name = str(key).replace("-", "_")
        if name not in params or name == "config":
            raise InputError(
                f"unknown config key {key!r} for command "
                f"{ctx.command.name!r}"
            )
        if ctx.get_parameter_source(name) == ParameterSource.DEFAULT:
            params[name] = value
    return params


def _dispatch(ctx: click.Context, command: str, params: dict) -> None:
    try:
        params = _merge_config(ctx, params)
        _, document, json_path = run_command({"command": command, **params})
    except ToolkitError as exc:
        _fail(exc)
    text = _dump_json(document)
    if json_path is None and command != "simulate":
        json_path = params.get("out")  # simulate's --out names the CSV
    if json_path:
        Path(json_path).write_text(text)
    else:
        click.echo(text, nl=False)


def _shared_options(fn):
    options = [
        click.option("--seed", type=int, default=0, show_default=True,
                     help="Master seed; fixed seeds reproduce byte-identical "
                          "output."),
        click.option("--paths", type=int, default=10000, show_default=True,
                     help="Monte Carlo path count."),
        click.option("--steps", type=int, default=252, show_default=True,
                     help="Time steps per path or tree."),
        click.option("--config", type=click.Path(dir_okay=False),
                     default=None,
                     help="JSON file of option values; explicit flags win."),
        click.option("--out", type=click.Path(dir_okay=False), default=None,
                     help="Output path (JSON document, or CSV stem for "
                          "simulate / convergence-report)."),
        click.option("--rn-mode", type=click.Choice(["as-written",
                                                     "martingale"]),
                     default="as-written", show_default=True,
                     help="Risk-neutral probability convention for trees "
                          "with a nonzero simple rate."),
    ]
    for option in reversed(options):
        fn = option(fn)
    return fn


@click.group()
@click.version_option(version=__version__, prog_name="bachelierkit")
def main():
    """Pricing and simulation toolkit for the Bachelier market model with a
    simple-interest riskless account."""


@main.command("price")
@_shared_options
@click.option("--spot", type=float, default=100.0, show_default=True,
              help="Current stock price.")
@click.option("--strike", type=float, default=100.0, show_default=True)
@click.option("--maturity", type=float, default=1.0, show_default=True,
              help="Option maturity in years.")
@click.option("--t", type=float, default=0.0, show_default=True,
              help="Valuation time in years.")
@click.option("--drift", type=float, default=0.0, show_default=True,
              help="Stock drift per year.")
@click.option("--vol", type=float, default=20.0, show_default=True,
              help="Stock volatility, currency per sqrt(year).")
@click.option("--rate", type=float, default=0.0, show_default=True,
              help="Simple interest rate of the riskless account.")
@click.option("--balance", type=float, default=1.0, show_default=True,
              help="Initial riskless account balance.")
@click.pass_context
def price_cmd(ctx, **params):
    """Closed-form call price, hedge, and market price of risk."""
    _dispatch(ctx, "price", params)


@main.command("tree")
@_shared_options
@click.option("--engine", type=click.Choice(["bachelier", "classical"]),
              default="bachelier", show_default=True,
              help="Additive price tree or multiplicative return tree.")
@click.option("--payoff", type=click.Choice(["call", "digital"]),
              default="call", show_default=True)
@click.option("--spot", type=float, default=100.0, show_default=True)
@click.option("--strike", type=float, default=100.0, show_default=True)
@click.option("--maturity", type=float, default=1.0, show_default=True)
@click.option("--up-prob", type=float, default=0.5, show_default=True,
              help="Real-world up probability.")
@click.option("--drift", type=float, default=0.0, show_default=True,
              help="Price drift per year (bachelier engine).")
@click.option("--vol", type=float, default=20.0, show_default=True,
              help="Price volatility (bachelier engine).")
@click.option("--mean-return", type=float, default=0.1, show_default=True,
              help="Instantaneous mean return (classical engine).")
@click.option("--variance-return", type=float, default=0.04,
              show_default=True,
              help="Instantaneous return variance (classical engine).")
@click.option("--rate", type=float, default=0.0, show_default=True,
              help="Simple rate (bachelier) or per-step compound rate "
                   "(classical).")
@click.pass_context
def tree_cmd(ctx, **params):
    """Binomial tree price under the risk-neutral step probabilities."""
    _dispatch(ctx, "tree", params)


@main.command("pathdep")
@_shared_options
@click.option("--spot", type=float, default=100.0, show_default=True,
              help="Initial asset price.")
@click.option("--strike", type=float, default=100.0, show_default=True)
@click.option("--payoff", type=click.Choice(["call", "digital"]),
              default="call", show_default=True)
@click.option("--maturity", type=float, default=1.0, show_default=True)
@click.option("--drift", type=float, default=0.0, show_default=True)
@click.option("--vol-direct", type=float, default=20.0, show_default=True,
              help="Volatility applied directly to the factor innovation.")
@click.option("--vol-feedback", type=float, default=0.0, show_default=True,
              help="Volatility applied through the feedback function.")
@click.option("--feedback", type=str, default="sign", show_default=True,
              help="Feedback function: sign, identity, constant:<c>, "
                   "linear:<a>,<b>, indicator:<lo>,<hi>.")
@click.option("--rate", type=float, default=0.0, show_default=True)
@click.option("--factor-drift", type=float, default=0.0, show_default=True)
@click.option("--factor-vol", type=float, default=1.0, show_default=True)
@click.option("--factor-initial", type=float, default=100.0,
              show_default=True)
@click.option("--factor-probs", type=str, default="0.5", show_default=True,
              help="Up to three coefficients of p(dt) = p0 + p1*sqrt(dt) + "
                   "p2*dt.")
@click.pass_context
def pathdep_cmd(ctx, **params):
    """Monte Carlo price of a payoff on a factor-fed, path-dependent asset."""
    _dispatch(ctx, "pathdep", params)


@main.command("simulate")
@_shared_options
@click.option("--figure", type=click.Choice(["A1", "A2", "B3", "B4", "B5"],
                                            case_sensitive=False),
              default=None,
              help="Emit reference figure data instead of plain paths: "
                   "A1/A2 score-transform curves, B3 Brownian path with its "
                   "path-plus-local-time companion, B4/B5 ten skewed "
                   "trajectories.")
@click.option("--spot", type=float, default=100.0, show_default=True)
@click.option("--drift", type=float, default=0.0, show_default=True)
@click.option("--vol", type=float, default=20.0, show_default=True)
@click.option("--maturity", type=float, default=1.0, show_default=True,
              help="Simulation horizon in years.")
@click.option("--transform-a", type=float, default=0.05, show_default=True,
              help="Exponential transform parameter (figure A1).")
@click.option("--transform-b", type=float, default=0.5, show_default=True,
              help="Geometric transform parameter (figure A2).")
@click.pass_context
def simulate_cmd(ctx, **params):
    """Simulate paths or emit figure data; writes CSV plus a rendered PNG."""
    _dispatch(ctx, "simulate", params)


@main.command("esg")
@_shared_options
@click.option("--price", type=float, default=165.15, show_default=True,
              help="Observed stock price.")
@click.option("--company-score", type=float, default=72.63,
              show_default=True)
@click.option("--benchmark-score", type=float, default=50.0,
              show_default=True)
@click.option("--gamma", type=float, default=0.5, show_default=True,
              help="Market ESG affinity.")
@click.option("--transform", type=click.Choice(["none", "exp", "geo"]),
              default="none", show_default=True,
              help="Optional score preprocessing before normalizing.")
@click.option("--transform-a", type=float, default=0.05, show_default=True)
@click.option("--transform-b", type=float, default=0.5, show_default=True)
@click.option("--data", type=click.Path(dir_okay=False), default=None,
              help="CSV of ESG records (overrides the scalar options).")
@click.option("--date", type=str, default=None,
              help="With --data: evaluate the latest record at or before "
                   "this date (ISO-8601 or fractional year).")
@click.pass_context
def esg_cmd(ctx, **params):
    """Relative ESG score and the ESG-adjusted price."""
    _dispatch(ctx, "esg", params)


@main.command("estimate")
@_shared_options
@click.option("--data", type=click.Path(dir_okay=False), default=None,
              help="CSV input file.")
@click.option("--schema", type=click.Choice(["prices", "factor-changes"]),
              default="prices", show_default=True,
              help="prices: estimate drift and volatility; factor-changes: "
                   "estimate sign-probability coefficients.")
@click.pass_context
def estimate_cmd(ctx, **params):
    """Estimate model parameters from an observed series."""
    _dispatch(ctx, "estimate", params)


@main.command("implied-rate")
@_shared_options
@click.option("--drift1", type=float, default=0.05, show_default=True)
@click.option("--vol1", type=float, default=0.1, show_default=True)
@click.option("--drift2", type=float, default=0.08, show_default=True)
@click.option("--vol2", type=float, default=0.2, show_default=True)
@click.pass_context
def implied_rate_cmd(ctx, **params):
    """Simple rate implied by two risky assets sharing one price of risk."""
    _dispatch(ctx, "implied-rate", params)


@main.command("implied-affinity")
@_shared_options
@click.option("--observed", type=float, default=173.4075, show_default=True,
              help="Observed ESG-adjusted price.")
@click.option("--price", type=float, default=165.15, show_default=True,
              help="Unadjusted stock price.")
@click.option("--company-score", type=float, default=55.0,
              show_default=True)
@click.option("--benchmark-score", type=float, default=50.0,
              show_default=True)
@click.pass_context
def implied_affinity_cmd(ctx, **params):
    """ESG affinity implied by an observed adjusted price."""
    _dispatch(ctx, "implied-affinity", params)


@main.command("convergence-report")
@_shared_options
@click.option("--spot", type=float, default=100.0, show_default=True)
@click.option("--strike", type=float, default=100.0, show_default=True)
@click.option("--maturity", type=float, default=1.0, show_default=True)
@click.option("--drift", type=float, default=0.0, show_default=True)
@click.option("--vol", type=float, default=20.0, show_default=True)
@click.option("--rate", type=float, default=0.0, show_default=True)
@click.option("--up-prob", type=float, default=0.5, show_default=True)
@click.option("--levels", type=str, default="64,256,1024,4096",
              show_default=True,
              help="Comma-separated tree sizes.")
@click.pass_context
def convergence_report_cmd(ctx, **params):
    """Tree-versus-closed-form convergence table in both risk-neutral modes.

    Prints an aligned table, writes CSV, PNG, and JSON files at the --out
    stem (default convergence_report.*).
    """
    _dispatch(ctx, "convergence-report", params)


if __name__ == "__main__":
    main()
