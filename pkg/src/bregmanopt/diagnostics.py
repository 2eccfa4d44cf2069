"""Trace analysis: descent metrics, rate fits, and descent-structure checks.

All functions are pure over immutable :class:`RunTrace` objects. The trace
schema is one row per iteration: iteration index ``n`` (row 0 is the state
before any step), ``loss``, optional ``bregman_to_ref`` (divergence from
the reference solution to the iterate), ``grad_norm``, ``lambda_used``,
``step_norm``, ``domain_clamp_flag``.
"""

from dataclasses import dataclass, field

import numpy as np

from . import problems as problems_mod
from ._kernels import soft_threshold


class NonPositiveLoss(ValueError):
    """Log-scale fit requested over a window containing values <= 0."""


class MissingReference(ValueError):
    """A trace without bregman_to_ref was passed to a distance diagnostic."""


class InequalityViolated(ValueError):
    """The per-step supermartingale inequality failed."""

    def __init__(self, index, lhs, rhs):
        self.index = index
        self.lhs = lhs
        self.rhs = rhs
        super().__init__(f"inequality violated at n={index}: {lhs:.6g} > {rhs:.6g}")


class NoConvergence(RuntimeError):
    """The reference solver hit its iteration cap before the tolerance."""

    def __init__(self, cap, achieved):
        self.cap = cap
        self.achieved = achieved
        super().__init__(
            f"reference solver stopped at residual {achieved:.3g} after {cap} iterations"
        )


TRACE_COLUMNS = (
    "n", "loss", "bregman_to_ref", "grad_norm", "lambda_used",
    "step_norm", "domain_clamp_flag",
)


@dataclass
class RunTrace:
    """Columnar per-iteration record of one optimization run."""

    n: np.ndarray
    loss: np.ndarray
    bregman_to_ref: np.ndarray | None
    grad_norm: np.ndarray
    lambda_used: np.ndarray
    step_norm: np.ndarray
    domain_clamp_flag: np.ndarray

    def __len__(self):
        return self.n.size

    @property
    def final_loss(self):
        return float(self.loss[-1])

    @classmethod
    def from_rows(cls, rows, with_reference=True):
        """Build from an iterable of per-iteration dicts."""
        cols = {name: [] for name in TRACE_COLUMNS}
        for row in rows:
            for name in TRACE_COLUMNS:
                cols[name].append(row[name])
        bregman = np.asarray(cols["bregman_to_ref"], dtype=float) if with_reference else None
        return cls(
            n=np.asarray(cols["n"], dtype=int),
            loss=np.asarray(cols["loss"], dtype=float),
            bregman_to_ref=bregman,
            grad_norm=np.asarray(cols["grad_norm"], dtype=float),
            lambda_used=np.asarray(cols["lambda_used"], dtype=float),
            step_norm=np.asarray(cols["step_norm"], dtype=float),
            domain_clamp_flag=np.asarray(cols["domain_clamp_flag"], dtype=bool),
        )


def _log_linear_fit(x, y):
    """Least-squares slope/intercept of log(y) against x, plus r^2."""
    if np.any(y <= 0.0):
        raise NonPositiveLoss("window contains values <= 0, cannot fit on log scale")
    logy = np.log(y)
    slope, intercept = np.polyfit(x, logy, 1)
    pred = slope * x + intercept
    ss_res = float(np.sum((logy - pred) ** 2))
    ss_tot = float(np.sum((logy - np.mean(logy)) ** 2))
    r2 = 1.0 if ss_tot < 1e-300 else 1.0 - ss_res / ss_tot
    return float(slope), float(intercept), r2


def early_slope(trace, k=20):
    """Least-squares slope of log(loss) over rows 0..k."""
    if len(trace) < k + 1:
        raise ValueError(f"trace has {len(trace)} rows, need at least {k + 1}")
    slope, _, _ = _log_linear_fit(trace.n[: k + 1].astype(float), trace.loss[: k + 1])
    return slope


def steps_to_target(trace, target_loss):
    """Smallest n with loss_n <= target_loss, or None if never reached."""
    hits = np.nonzero(trace.loss <= target_loss)[0]
    if hits.size == 0:
        return None
    return int(trace.n[hits[0]])


@dataclass
class FejerReport:
    passed: bool
    violations: list
    max_excess: float
    slack: float


def fejer_check(traces, slack):
    """Check monotonicity of the seed-averaged distance to the reference.

    The descent inequality holds in conditional expectation, so the check
    runs on the across-seed mean of ``bregman_to_ref``; per-seed
    monotonicity is not required.
    """
    if not traces:
        raise ValueError("need at least one trace")
    lengths = {len(t) for t in traces}
    if len(lengths) != 1:
        raise ValueError(f"traces have mixed lengths {sorted(lengths)}")
    for t in traces:
        if t.bregman_to_ref is None:
            raise MissingReference("fejer_check needs bregman_to_ref on every trace")
    mean_d = np.mean([t.bregman_to_ref for t in traces], axis=0)
    diffs = mean_d[1:] - mean_d[:-1]
    bad = np.nonzero(diffs > slack)[0]
    max_excess = float(np.max(diffs)) if diffs.size else 0.0
    return FejerReport(
        passed=bad.size == 0,
        violations=[int(i) for i in bad],
        max_excess=max_excess,
        slack=float(slack),
    )


@dataclass
class RateFit:
    """Geometric contraction fit D_n ~ c * chi^n; chi_hat None means no fit."""

    chi_hat: float | None
    r_squared: float
    window: tuple

    @property
    def fitted(self):
        return self.chi_hat is not None


def geometric_rate_fit(trace, window=None, min_r_squared=0.9):
    """Fit log(bregman_to_ref) against n over an inclusive row window.

    The fit is rejected (chi_hat None) when r^2 falls below
    ``min_r_squared`` or when the fitted factor is not a contraction.
    """
    if trace.bregman_to_ref is None:
        raise MissingReference("geometric_rate_fit needs bregman_to_ref")
    if window is None:
        window = (int(trace.n[0]), int(trace.n[-1]))
    lo, hi = window
    mask = (trace.n >= lo) & (trace.n <= hi)
    x = trace.n[mask].astype(float)
    d = trace.bregman_to_ref[mask]
    if x.size < 3:
        raise ValueError("window too short for a rate fit")
    slope, _, r2 = _log_linear_fit(x, d)
    chi = float(np.exp(slope))
    if r2 < min_r_squared or chi > 1.0:
        return RateFit(chi_hat=None, r_squared=r2, window=(lo, hi))
    return RateFit(chi_hat=chi, r_squared=r2, window=(lo, hi))


@dataclass
class RobbinsSiegmundReport:
    inequality_holds: bool
    sums_bounded: bool
    u_converged: bool
    theta_summable: bool
    u_tail_oscillation: float
    theta_tail_increment: float


def robbins_siegmund_verify(u, alpha, theta, beta, alpha_cap=None, beta_cap=None,
                            tail_fraction=0.25, tol=1e-8):
    """Empirical check of the deterministic supermartingale recursion.

    Verifies u_{n+1} <= (1 + alpha_n) u_n - theta_n + beta_n for every
    step (raising :class:`InequalityViolated` at the first failure, with a
    relative float slack), then reports whether the partial sums of alpha
    and beta stay within the caller's caps, whether u settled (tail
    oscillation below tol), and whether the partial sums of theta
    stabilized.
    """
    u = np.asarray(u, dtype=float)
    alpha = np.asarray(alpha, dtype=float)
    theta = np.asarray(theta, dtype=float)
    beta = np.asarray(beta, dtype=float)
    if not (u.size == alpha.size == theta.size == beta.size):
        raise ValueError("sequences must have equal length")
    if u.size < 4:
        raise ValueError("sequences too short")
    for n in range(u.size - 1):
        rhs = (1.0 + alpha[n]) * u[n] - theta[n] + beta[n]
        slack = 1e-12 * (1.0 + abs(u[n]) + abs(theta[n]) + abs(beta[n]))
        if u[n + 1] > rhs + slack:
            raise InequalityViolated(n, float(u[n + 1]), float(rhs))
    sums_bounded = True
    if alpha_cap is not None and float(np.sum(alpha)) > alpha_cap:
        sums_bounded = False
    if beta_cap is not None and float(np.sum(beta)) > beta_cap:
        sums_bounded = False
    tail_start = int((1.0 - tail_fraction) * u.size)
    tail = u[tail_start:]
    u_osc = float(np.max(tail) - np.min(tail))
    theta_partial = np.cumsum(theta)
    theta_tail = float(theta_partial[-1] - theta_partial[tail_start - 1])
    return RobbinsSiegmundReport(
        inequality_holds=True,
        sums_bounded=sums_bounded,
        u_converged=u_osc < tol,
        theta_summable=theta_tail < tol,
        u_tail_oscillation=u_osc,
        theta_tail_increment=theta_tail,
    )


def loss_variance(trace, tail_fraction=0.25):
    """Variance of the per-iteration loss over the final part of the run."""
    tail_start = int((1.0 - tail_fraction) * len(trace))
    tail = trace.loss[tail_start:]
    if tail.size < 2:
        return 0.0
    return float(np.var(tail))


@dataclass
class SummaryStats:
    """Per-seed run metrics plus mean and sample standard deviation."""

    seeds: list
    early_slope: list
    steps_to_target: list  # ints, or None for not-reached
    final_loss: list
    loss_variance: list
    single_seed: bool = field(default=False)

    @staticmethod
    def _agg(values):
        arr = np.asarray(values, dtype=float)
        mean = float(np.mean(arr))
        std = 0.0 if arr.size < 2 else float(np.std(arr, ddof=1))
        return mean, std

    def aggregates(self):
        """Dict of (mean, std) per metric; steps aggregates are None if any
        seed never reached the target."""
        out = {
            "early_slope": self._agg(self.early_slope),
            "final_loss": self._agg(self.final_loss),
            "loss_variance": self._agg(self.loss_variance),
        }
        if any(s is None for s in self.steps_to_target):
            out["steps_to_target"] = (None, None)
        else:
            out["steps_to_target"] = self._agg(self.steps_to_target)
        return out


def summarize_traces(traces, seeds, target_losses=None, slope_window=20):
    """Compute SummaryStats for a set of per-seed traces.

    ``target_losses`` gives the steps-to-target threshold per seed; by
    default each trace is measured against its own final loss. The slope
    window shrinks to fit traces shorter than ``slope_window`` steps.
    """
    if target_losses is None:
        target_losses = [t.final_loss for t in traces]

    def slope(trace):
        k = min(slope_window, len(trace) - 1)
        return 0.0 if k < 1 else early_slope(trace, k)

    stats = SummaryStats(
        seeds=list(seeds),
        early_slope=[slope(t) for t in traces],
        steps_to_target=[steps_to_target(t, tl) for t, tl in zip(traces, target_losses)],
        final_loss=[t.final_loss for t in traces],
        loss_variance=[loss_variance(t) for t in traces],
        single_seed=len(traces) == 1,
    )
    return stats


def reference_solution(problem, tolerance=1e-10, max_iters=200_000):
    """High-accuracy minimizer / solution point z* for a supported problem.

    Saddle and feasibility problems have the exact closed form (the
    origin); the simplex estimation target is its own minimizer. Logistic
    and sparse problems are solved by a deterministic full-gradient run
    with step halving until the (prox-)gradient residual meets the
    tolerance. Results are cached on the problem object.
    """
    cache = getattr(problem, "_reference_cache", None)
    if cache is not None and cache[0] <= tolerance:
        return cache[1]
    if isinstance(problem, problems_mod.BilinearSaddleProblem):
        z = np.zeros(problem.dim)
    elif isinstance(problem, problems_mod.HalfSpaceFeasibilityProblem):
        z = np.zeros(problem.dim)
    elif isinstance(problem, problems_mod.SimplexEstimationProblem):
        z = problem.target_q.copy()
    elif isinstance(problem, problems_mod.LogisticRegressionProblem):
        z = _descend_smooth(problem.value_grad, np.zeros(problem.dim),
                            tolerance, max_iters)
    elif isinstance(problem, problems_mod.SparseRegressionProblem):
        z = _descend_composite(problem, np.zeros(problem.dim), tolerance, max_iters)
    else:
        raise TypeError(f"no reference solver for {type(problem).__name__}")
    problem._reference_cache = (tolerance, z)
    return z


def _descend_smooth(value_grad, w, tolerance, max_iters):
    """Full-gradient descent with step halving on failed progress.

    A step is accepted on sufficient value decrease (with a float-
    resolution slack) or on strict gradient-norm decrease; near the
    optimum the value test saturates in double precision long before the
    gradient does, so the norm test carries the final digits.
    """
    value, grad = value_grad(w)
    gnorm2 = float(np.dot(grad, grad))
    eta = 1.0
    for _ in range(max_iters):
        if np.sqrt(gnorm2) <= tolerance:
            return w
        trial = w - eta * grad
        trial_value, trial_grad = value_grad(trial)
        trial_gnorm2 = float(np.dot(trial_grad, trial_grad))
        value_ok = trial_value <= value - 0.5 * eta * gnorm2 + 1e-15 * (1.0 + abs(value))
        if value_ok or trial_gnorm2 < gnorm2:
            w, value, grad, gnorm2 = trial, trial_value, trial_grad, trial_gnorm2
            eta *= 1.2
        else:
            eta *= 0.5
            if eta < 1e-30:
                break
    raise NoConvergence(max_iters, float(np.sqrt(gnorm2)))


def _descend_composite(problem, w, tolerance, max_iters):
    """Proximal gradient with halving; residual is the prox-gradient map."""
    t = problem.l1_weight
    value, grad = problem.value_grad(w)

    def residual_at(point, gradient, step):
        prox = soft_threshold(point - step * gradient, step * t)
        return prox, float(np.linalg.norm(point - prox)) / step

    eta = 1.0
    prox, residual = residual_at(w, grad, eta)
    for _ in range(max_iters):
        if residual <= tolerance:
            return w
        trial_value, trial_grad = problem.value_grad(prox)
        trial_prox, trial_residual = residual_at(prox, trial_grad, eta)
        step = prox - w
        model = value + float(np.dot(grad, step)) + float(np.dot(step, step)) / (2.0 * eta)
        value_ok = trial_value <= model + 1e-15 * (1.0 + abs(value))
        if value_ok or trial_residual < residual:
            w, value, grad = prox, trial_value, trial_grad
            prox, residual = trial_prox, trial_residual
            eta *= 1.2
        else:
            eta *= 0.5
            if eta < 1e-30:
                break
            prox, residual = residual_at(w, grad, eta)
    raise NoConvergence(max_iters, residual)
