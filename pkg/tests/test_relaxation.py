"""Relaxation schedules: sampling, analytic expectations, mode rules."""

import numpy as np
import pytest

from bregmanopt.relaxation import (
    ConstantSchedule, ModeViolation, ScheduleMode, TwoPointSchedule,
    WarmupSchedule, expected_descent_factor, sample_lambda, validate_schedule,
)


class TestSampling:
    def test_constant(self):
        rng = np.random.default_rng(0)
        sched = ConstantSchedule(1.8)
        assert all(sample_lambda(sched, rng, n) == 1.8 for n in range(5))

    def test_warmup_endpoints(self):
        sched = WarmupSchedule(1.0, 1.8, 100)
        rng = np.random.default_rng(0)
        assert sample_lambda(sched, rng, 0) == 1.0
        assert sample_lambda(sched, rng, 100) == 1.8
        assert sample_lambda(sched, rng, 5000) == 1.8
        assert 1.0 < sample_lambda(sched, rng, 50) < 1.8

    def test_two_point_mean(self):
        # E[lambda] = 0.5 * 0.7 + 2.5 * 0.3 = 1.1; check within 3 standard errors
        sched = TwoPointSchedule(0.5, 2.5, 0.7)
        rng = np.random.default_rng(42)
        draws = np.array([sample_lambda(sched, rng, n) for n in range(100_000)])
        se = draws.std(ddof=1) / np.sqrt(draws.size)
        assert abs(draws.mean() - 1.1) <= 3.0 * se

    def test_two_point_values_only(self):
        sched = TwoPointSchedule(0.5, 2.5, 0.7)
        rng = np.random.default_rng(1)
        draws = {sample_lambda(sched, rng, n) for n in range(1000)}
        assert draws == {0.5, 2.5}

    def test_reproducible_streams(self):
        sched = TwoPointSchedule(0.5, 2.5, 0.7)
        a = [sample_lambda(sched, np.random.default_rng(7), n) for n in range(50)]
        b = [sample_lambda(sched, np.random.default_rng(7), n) for n in range(50)]
        assert a == b


class TestExpectedDescentFactor:
    def test_constant_one(self):
        assert expected_descent_factor(ConstantSchedule(1.0)) == 1.0

    def test_constant_1p8(self):
        np.testing.assert_allclose(
            expected_descent_factor(ConstantSchedule(1.8)), 0.36, rtol=1e-14
        )

    def test_two_point_hand_expansion(self):
        # 0.7 * 0.5 * 1.5 + 0.3 * 2.5 * (-0.5) = 0.525 - 0.375
        got = expected_descent_factor(TwoPointSchedule(0.5, 2.5, 0.7))
        np.testing.assert_allclose(got, 0.15, rtol=1e-12)

    def test_warmup_uses_current_step(self):
        sched = WarmupSchedule(1.0, 1.8, 100)
        assert expected_descent_factor(sched, 0) == 1.0
        np.testing.assert_allclose(expected_descent_factor(sched, 100), 0.36, rtol=1e-14)

    def test_monte_carlo_agrees_for_super_schedule(self):
        sched = TwoPointSchedule(0.5, 2.5, 0.7)
        rng = np.random.default_rng(3)
        lam = np.array([sample_lambda(sched, rng, n) for n in range(100_000)])
        vals = lam * (2.0 - lam)
        se = vals.std(ddof=1) / np.sqrt(vals.size)
        assert abs(vals.mean() - 0.15) <= 3.0 * se


class TestValidation:
    def test_bounded_rejects_above_two(self):
        with pytest.raises(ModeViolation) as err:
            validate_schedule(ConstantSchedule(2.5), ScheduleMode.BOUNDED)
        assert err.value.value == 2.5

    def test_bounded_accepts_two(self):
        validate_schedule(ConstantSchedule(2.0), ScheduleMode.BOUNDED)

    def test_super_accepts_positive_expectation(self):
        validate_schedule(TwoPointSchedule(0.5, 2.5, 0.7), ScheduleMode.SUPER)

    def test_super_rejects_negative_expectation(self):
        # 0.5 * 0.75 + 0.5 * (-1.25) = -0.25
        with pytest.raises(ModeViolation) as err:
            validate_schedule(TwoPointSchedule(0.5, 2.5, 0.5), ScheduleMode.SUPER)
        np.testing.assert_allclose(err.value.value, -0.25, rtol=1e-12)

    def test_super_rejects_constant_above_two(self):
        with pytest.raises(ModeViolation):
            validate_schedule(ConstantSchedule(2.5), ScheduleMode.SUPER)

    def test_warmup_valid_in_both_modes(self):
        sched = WarmupSchedule(1.0, 1.9, 50)
        validate_schedule(sched, ScheduleMode.BOUNDED)
        validate_schedule(sched, ScheduleMode.SUPER)


class TestConstruction:
    def test_constant_requires_positive(self):
        with pytest.raises(ValueError):
            ConstantSchedule(0.0)

    def test_two_point_ordering(self):
        with pytest.raises(ValueError):
            TwoPointSchedule(2.5, 0.5, 0.7)

    def test_two_point_probability_range(self):
        with pytest.raises(ValueError):
            TwoPointSchedule(0.5, 2.5, 1.5)

    def test_warmup_must_stay_below_two(self):
        with pytest.raises(ValueError):
            WarmupSchedule(1.0, 2.0, 10)
