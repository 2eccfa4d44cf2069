"""Relaxation parameter schedules and their mode validation.

A schedule generates the per-iteration relaxation factor lambda_n. Two
regimes are supported:

* ``Bounded`` -- every realizable lambda lies in (0, 2].
* ``Super``   -- realizations above 2 are allowed as long as the analytic
  expectation E[lambda (2 - lambda)] is nonnegative and the lambda stream
  is independent of the gradient stream. Independence is structural: the
  run driver hands schedules a dedicated PRNG substream that is never
  shared with oracle noise.
"""

import enum
from dataclasses import dataclass


class ModeViolation(ValueError):
    """A schedule fails its mode's validity rule.

    Carries the rule that failed and the offending analytic value.
    """

    def __init__(self, rule, value):
        self.rule = rule
        self.value = value
        super().__init__(f"{rule} (offending value {value:.6g})")


class ScheduleMode(enum.Enum):
    BOUNDED = "bounded"
    SUPER = "super"


@dataclass(frozen=True)
class ConstantSchedule:
    """lambda_n = lam for every n."""

    lam: float

    def __post_init__(self):
        if self.lam <= 0:
            raise ValueError(f"lambda must be positive, got {self.lam}")

    def sample(self, rng, n):
        return self.lam

    def descent_factor(self, n=0):
        return self.lam * (2.0 - self.lam)

    def lambda_bounds(self):
        return self.lam, self.lam

    @property
    def is_random(self):
        return False


@dataclass(frozen=True)
class TwoPointSchedule:
    """lambda_n = lam_lo with probability p_lo, else lam_hi.

    The minimal family that can realize lambda > 2 while keeping
    E[lambda (2 - lambda)] >= 0.
    """

    lam_lo: float
    lam_hi: float
    p_lo: float

    def __post_init__(self):
        if not 0 < self.lam_lo < self.lam_hi:
            raise ValueError(
                f"need 0 < lam_lo < lam_hi, got ({self.lam_lo}, {self.lam_hi})"
            )
        if not 0.0 <= self.p_lo <= 1.0:
            raise ValueError(f"p_lo must be a probability, got {self.p_lo}")

    def sample(self, rng, n):
        return self.lam_lo if rng.random() < self.p_lo else self.lam_hi

    def descent_factor(self, n=0):
        lo = self.lam_lo * (2.0 - self.lam_lo)
        hi = self.lam_hi * (2.0 - self.lam_hi)
        return self.p_lo * lo + (1.0 - self.p_lo) * hi

    def lambda_bounds(self):
        return self.lam_lo, self.lam_hi

    @property
    def is_random(self):
        return True


@dataclass(frozen=True)
class WarmupSchedule:
    """Deterministic ramp start -> end over ramp_steps iterations.

    An over-relaxation schedule only, hence the end < 2 constraint.
    """

    start: float
    end: float
    ramp_steps: int

    def __post_init__(self):
        if not 0 < self.start <= self.end < 2.0:
            raise ValueError(
                f"need 0 < start <= end < 2, got ({self.start}, {self.end})"
            )
        if self.ramp_steps <= 0:
            raise ValueError(f"ramp_steps must be positive, got {self.ramp_steps}")

    def lambda_at(self, n):
        frac = min(n / self.ramp_steps, 1.0)
        return self.start + (self.end - self.start) * frac

    def sample(self, rng, n):
        return self.lambda_at(n)

    def descent_factor(self, n=0):
        lam = self.lambda_at(n)
        return lam * (2.0 - lam)

    def lambda_bounds(self):
        return self.start, self.end

    @property
    def is_random(self):
        return False


def sample_lambda(schedule, rng, n):
    """Draw lambda_n. Random schedules consume one draw from rng."""
    return schedule.sample(rng, n)


def expected_descent_factor(schedule, n=0):
    """Analytic E[lambda (2 - lambda)] (at iteration n for ramps)."""
    return schedule.descent_factor(n)


def validate_schedule(schedule, mode):
    """Raise :class:`ModeViolation` unless the schedule fits the mode.

    Bounded requires all realizable lambda in (0, 2]. Super requires the
    analytic E[lambda (2 - lambda)] >= 0 and permits realizations > 2.
    """
    lo, hi = schedule.lambda_bounds()
    if mode is ScheduleMode.BOUNDED:
        if hi > 2.0:
            raise ModeViolation("bounded mode requires lambda <= 2", hi)
        if lo <= 0.0:
            raise ModeViolation("bounded mode requires lambda > 0", lo)
    elif mode is ScheduleMode.SUPER:
        # descent_factor is concave in lambda, so for ramps the minimum over
        # the swept range sits at an endpoint
        if isinstance(schedule, WarmupSchedule):
            factor = min(
                lo * (2.0 - lo),
                hi * (2.0 - hi),
            )
        else:
            factor = schedule.descent_factor()
        if factor < 0.0:
            raise ModeViolation(
                "super mode requires E[lambda(2 - lambda)] >= 0", factor
            )
    else:
        raise ValueError(f"unknown mode {mode!r}")
