"""Path-dependent engine tests: declared feedback functions, sign
normalization and estimation, the coupled walk pair, and risk-neutral
Monte Carlo pricing."""

import math

import numpy as np
import pytest

from bachelierkit import (
    AbmParams,
    ArbitrageError,
    EstimationError,
    FactorModelParams,
    InputError,
    PathDepAssetParams,
    PiecewiseFn,
    VanillaCall,
    bachelier_call_zero_rate,
    call_payoff,
    csyip_pair,
    estimate_factor_sign_probs,
    factor_tree_path,
    pathdep_asset_path,
    pathdep_price,
    strip_factor_signs,
)
from bachelierkit.trees import RnMode

FACTOR = FactorModelParams(drift=0.0, volatility=1.0, initial_value=100.0,
                           sign_prob_coeffs=(0.5, 0.0, 0.0))


class TestPiecewiseFn:
    def test_sign_values(self):
        sgn = PiecewiseFn.sign()
        assert sgn(-3.0) == -1.0
        assert sgn(0.0) == 0.0
        assert sgn(2.5) == 1.0
        out = sgn(np.array([-1.0, 0.0, 1.0]))
        assert out == pytest.approx([-1.0, 0.0, 1.0])

    def test_indicator_left_closed(self):
        ind = PiecewiseFn.indicator(-1.0, 1.0)
        assert ind(-1.0) == 1.0  # lower edge included
        assert ind(1.0) == 0.0   # upper edge excluded
        assert ind(0.0) == 1.0
        assert ind(5.0) == 0.0

    def test_linear_and_constant(self):
        assert PiecewiseFn.linear(2.0, 3.0)(4.0) == 14.0
        assert PiecewiseFn.constant(7.0)(123.0) == 7.0

    def test_multi_piece(self):
        fn = PiecewiseFn(
            breakpoints=(0.0, 1.0),
            pieces=(("constant", -1.0), ("linear", 0.0, 1.0),
                    ("constant", 5.0)),
        )
        assert fn(-0.5) == -1.0
        assert fn(0.5) == 0.5
        assert fn(2.0) == 5.0

    def test_validation(self):
        with pytest.raises(InputError):
            PiecewiseFn(breakpoints=(1.0, 0.0),
                        pieces=(("constant", 0.0),) * 3)
        with pytest.raises(InputError):
            PiecewiseFn(breakpoints=(0.0,), pieces=(("constant", 0.0),))
        with pytest.raises(InputError):
            PiecewiseFn(pieces=(("cubic", 1.0),))
        with pytest.raises(InputError):
            PiecewiseFn(breakpoints=(0.0,),
                        pieces=(("constant", 0.0), ("constant", 1.0)),
                        point_values=((0.5, 9.0),))


class TestFactorModel:
    def test_sign_prob_polynomial(self):
        factor = FactorModelParams(drift=0.0, volatility=1.0,
                                   initial_value=1.0,
                                   sign_prob_coeffs=(0.4, 0.5, -1.0))
        dt = 0.04
        assert factor.sign_prob(dt) == pytest.approx(
            0.4 + 0.5 * 0.2 - 1.0 * 0.04, abs=1e-15
        )

    def test_sign_prob_out_of_range(self):
        factor = FactorModelParams(drift=0.0, volatility=1.0,
                                   initial_value=1.0,
                                   sign_prob_coeffs=(0.9, 2.0, 0.0))
        with pytest.raises(InputError):
            factor.sign_prob(1.0)

    def test_leading_coefficient_bounds(self):
        with pytest.raises(InputError):
            FactorModelParams(drift=0.0, volatility=1.0, initial_value=1.0,
                              sign_prob_coeffs=(1.0, 0.0, 0.0))


class TestStripSigns:
    def test_recovers_signs_and_normalization(self):
        dt = 0.01
        p = FACTOR.sign_prob(dt)
        up = math.sqrt((1.0 - p) / p)
        down = -math.sqrt(p / (1.0 - p))
        changes = np.array([0.03, -0.02, 0.001, -0.5])
        xi = strip_factor_signs(changes, FACTOR, dt)
        assert xi == pytest.approx([up, down, up, down])
        # mean 0, variance 1 under (p, 1-p)
        assert p * up + (1.0 - p) * down == pytest.approx(0.0, abs=1e-15)
        assert p * up**2 + (1.0 - p) * down**2 == pytest.approx(1.0, abs=1e-14)

    def test_drift_threshold(self):
        factor = FactorModelParams(drift=2.0, volatility=1.0,
                                   initial_value=100.0,
                                   sign_prob_coeffs=(0.5, 0.0, 0.0))
        dt = 0.01
        # Changes below drift*dt strip to the down sign even when positive.
        xi = strip_factor_signs(np.array([0.019, 0.021]), factor, dt)
        assert xi[0] < 0.0 < xi[1]


class TestEstimateSignProbs:
    def test_single_step_size(self):
        rng = np.random.default_rng(5)
        p_true = 0.62
        n = 40_000
        steps = np.where(rng.random(n) < p_true, 1.0, -1.0)
        changes = 0.01 * steps + 0.007  # constant shift removed by centering
        p0, p1, p2 = estimate_factor_sign_probs(changes, 0.01)
        assert (p1, p2) == (0.0, 0.0)
        assert p0 == pytest.approx(p_true, abs=3.0 * 0.5 / math.sqrt(n) + 0.01)

    def test_two_step_sizes_exact_solve(self):
        # Build frequencies exactly on the model p(dt) = 0.4 + 0.5*sqrt(dt).
        coeffs = (0.4, 0.5)
        dts = (0.01, 0.04)
        samples = []
        for dt in dts:
            p = coeffs[0] + coeffs[1] * math.sqrt(dt)
            n = 1000
            k = round(p * n)
            samples.append(np.concatenate([
                np.full(k, 1.0), np.full(n - k, -1.0)
            ]) * 0.5 * math.sqrt(dt))
        p0, p1, p2 = estimate_factor_sign_probs(samples, dts)
        assert p2 == 0.0
        assert p0 == pytest.approx(coeffs[0], abs=0.02)
        assert p1 == pytest.approx(coeffs[1], abs=0.15)

    def test_too_few_observations(self):
        with pytest.raises(EstimationError):
            estimate_factor_sign_probs(np.ones(10), 0.01)

    def test_degenerate_all_up(self):
        # All changes strictly above their mean is impossible, but a fitted
        # probability of exactly 1 (every centered change nonnegative needs
        # a one-sided sample) happens with a two-valued sample; a constant
        # sample centers to all zeros -> phat = 1 -> rejected.
        with pytest.raises(EstimationError):
            estimate_factor_sign_probs(np.full(50, 0.01), 0.01)

    def test_three_step_sizes_least_squares(self):
        coeffs = (0.45, 0.3, 0.2)
        dts = (0.01, 0.04, 0.09)
        samples = []
        for dt in dts:
            p = coeffs[0] + coeffs[1] * math.sqrt(dt) + coeffs[2] * dt
            n = 2000
            k = round(p * n)
            samples.append(np.concatenate([
                np.full(k, 1.0), np.full(n - k, -1.0)
            ]) * math.sqrt(dt))
        fitted = estimate_factor_sign_probs(samples, dts)
        for dt in dts:
            want = coeffs[0] + coeffs[1] * math.sqrt(dt) + coeffs[2] * dt
            got = fitted[0] + fitted[1] * math.sqrt(dt) + fitted[2] * dt
            assert got == pytest.approx(want, abs=0.01)


class TestFactorTreePath:
    def test_manual_two_steps(self):
        factor = FactorModelParams(drift=0.05, volatility=0.2,
                                   initial_value=100.0,
                                   sign_prob_coeffs=(0.5, 0.0, 0.0))
        path = factor_tree_path(factor, steps=2, horizon=0.02, signs=[1, 0])
        # dt=0.01: up = 0.0005 + 0.02, down = 0.0005 - 0.02.
        assert path == pytest.approx([100.0, 100.0205, 100.001], abs=1e-12)


class TestCsyipPair:
    def test_identity_feedback_bitwise(self):
        rng = np.random.default_rng(3)
        xi = np.where(rng.random((8, 400)) < 0.5, 1.0, -1.0)
        x, y = csyip_pair(xi, PiecewiseFn.constant(1.0), dt=1.0 / 400)
        assert np.array_equal(x, y)

    def test_leading_zero_and_shapes(self):
        xi = np.ones(5)
        x, y = csyip_pair(xi, PiecewiseFn.sign(), dt=0.04)
        assert x.shape == (6,)
        assert x[0] == 0.0 and y[0] == 0.0
        assert x[-1] == pytest.approx(5 * 0.2, abs=1e-14)

    def test_sign_feedback_manual(self):
        # xi = (+1, -1, -1): X = (0, h, 0, -h) with h = sqrt(dt).
        # Y steps use sgn of the previous X: sgn(0)=0, sgn(h)=1, sgn(0)=0.
        dt = 0.25
        h = 0.5
        x, y = csyip_pair(np.array([1.0, -1.0, -1.0]), PiecewiseFn.sign(), dt)
        assert x == pytest.approx([0.0, h, 0.0, -h], abs=1e-15)
        assert y == pytest.approx([0.0, 0.0, -h, -h], abs=1e-15)


class TestAssetPath:
    def test_reduces_to_additive_path_without_feedback(self):
        asset = PathDepAssetParams(drift=0.05, vol_direct=0.2,
                                   vol_feedback=0.0,
                                   feedback_fn=PiecewiseFn.sign())
        rng = np.random.default_rng(11)
        xi = np.where(rng.random(300) < 0.5, 1.0, -1.0)
        dt = 1.0 / 300
        path = pathdep_asset_path(asset, xi, dt, initial=100.0)
        manual = 100.0 + np.concatenate(
            [[0.0], np.cumsum(0.05 * dt + 0.2 * math.sqrt(dt) * xi)]
        )
        assert path == pytest.approx(manual, abs=1e-12)

    def test_feedback_changes_step_size(self):
        asset = PathDepAssetParams(drift=0.0, vol_direct=1.0,
                                   vol_feedback=0.5,
                                   feedback_fn=PiecewiseFn.sign())
        xi = np.array([1.0, 1.0])
        path = pathdep_asset_path(asset, xi, dt=1.0, initial=0.0)
        # First step: X_prev = 0, h = 0 -> increment 1.  Second: h = 1 ->
        # increment 1.5.
        assert path == pytest.approx([0.0, 1.0, 2.5], abs=1e-14)


class TestPathdepPrice:
    def test_no_feedback_matches_closed_form(self):
        asset = PathDepAssetParams(drift=0.0, vol_direct=20.0,
                                   vol_feedback=0.0,
                                   feedback_fn=PiecewiseFn.sign())
        payoff = lambda x: call_payoff(x, 100.0)  # noqa: E731
        price, se = pathdep_price(asset, FACTOR, payoff, steps=256,
                                  horizon=1.0, paths=40_000, seed=21,
                                  initial=100.0)
        closed = bachelier_call_zero_rate(
            AbmParams(100.0, 0.0, 20.0), VanillaCall(100.0, 1.0), 0.0, 100.0
        )
        assert abs(price - closed) < 3.0 * se + 0.05

    def test_seed_reproducible(self):
        asset = PathDepAssetParams(drift=0.0, vol_direct=20.0,
                                   vol_feedback=5.0,
                                   feedback_fn=PiecewiseFn.sign())
        payoff = lambda x: call_payoff(x, 100.0)  # noqa: E731
        args = dict(steps=32, horizon=1.0, paths=1000, seed=9, initial=100.0)
        assert pathdep_price(asset, FACTOR, payoff, **args) == (
            pathdep_price(asset, FACTOR, payoff, **args)
        )

    def test_martingale_mode_shifts_price(self):
        asset = PathDepAssetParams(drift=0.0, vol_direct=20.0,
                                   vol_feedback=0.0,
                                   feedback_fn=PiecewiseFn.sign())
        payoff = lambda x: call_payoff(x, 100.0)  # noqa: E731
        args = dict(steps=64, horizon=1.0, paths=20_000, seed=33,
                    initial=100.0, simple_rate=0.1)
        aw, _ = pathdep_price(asset, FACTOR, payoff,
                              rn_mode=RnMode.AS_WRITTEN, **args)
        mg, _ = pathdep_price(asset, FACTOR, payoff,
                              rn_mode=RnMode.MARTINGALE, **args)
        assert mg > aw  # martingale mode centers growth at rate*dt > 0

    def test_arbitrage_detection_names_step(self):
        # A feedback that zeroes the effective volatility in some state
        # leaves no risk-neutral probability in (0, 1).
        asset = PathDepAssetParams(drift=0.0, vol_direct=1.0,
                                   vol_feedback=-1.0,
                                   feedback_fn=PiecewiseFn.constant(1.0))
        payoff = lambda x: call_payoff(x, 0.0)  # noqa: E731
        with pytest.raises(ArbitrageError, match="step"):
            pathdep_price(asset, FACTOR, payoff, steps=4, horizon=1.0,
                          paths=128, seed=1, initial=100.0)

    def test_path_count_floor(self):
        asset = PathDepAssetParams(drift=0.0, vol_direct=1.0,
                                   vol_feedback=0.0,
                                   feedback_fn=PiecewiseFn.sign())
        with pytest.raises(InputError):
            pathdep_price(asset, FACTOR, lambda x: x, steps=4, horizon=1.0,
                          paths=50, seed=1, initial=100.0)
