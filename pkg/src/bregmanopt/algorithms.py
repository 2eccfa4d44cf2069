"""Iteration rules behind a single step-driver interface.

Every step function takes the current :class:`OptimizerState` and returns
a fresh one; states are never shared between runs. Step variants follow a
common scheme:

* Type A scales the dual-space step by lambda.
* Type B takes the base step, then forms the Krasnoselskii-Mann average
  (1 - lambda) * current + lambda * candidate in the primal space.

In Euclidean geometry the two coincide; with the entropy potential a
Type-B average with lambda > 1 can leave the domain, in which case the
driver falls back to clamp-and-renormalize and flags the trace row.
"""

from dataclasses import dataclass, field

import numpy as np

from .diagnostics import RunTrace, reference_solution
from .geometry import DomainError, NegativeEntropy, make_potential
from .relaxation import (
    ConstantSchedule, ScheduleMode, sample_lambda, validate_schedule,
)
from ._kernels import soft_threshold


@dataclass(frozen=True)
class ConstantStep:
    eta: float

    def __post_init__(self):
        if self.eta <= 0:
            raise ValueError("eta must be positive")

    def at(self, n):
        return self.eta


@dataclass(frozen=True)
class PolynomialStep:
    """eta_n = eta0 / (n + 1)^power."""

    eta0: float
    power: float

    def __post_init__(self):
        if self.eta0 <= 0 or self.power <= 0:
            raise ValueError("eta0 and power must be positive")

    def at(self, n):
        return self.eta0 / (n + 1) ** self.power


@dataclass(frozen=True)
class AdaptiveStep:
    """eta_n = eta_base / sqrt(v_n + epsilon); rho selects the v recursion.

    rho None accumulates v_n = v_{n-1} + ||g||^2; rho in (0, 1) uses the
    exponential average v_n = rho v_{n-1} + (1 - rho) ||g||^2.
    """

    eta_base: float
    epsilon: float
    rho: float | None = None

    def __post_init__(self):
        if self.eta_base <= 0 or self.epsilon <= 0:
            raise ValueError("eta_base and epsilon must be positive")
        if self.rho is not None and not 0.0 < self.rho < 1.0:
            raise ValueError("rho must lie in (0, 1)")


@dataclass
class OptimizerState:
    """Mutable per-run state; ``clamped`` and ``last_grad_norm`` are
    transient diagnostics describing only the most recent step."""

    iterate: np.ndarray
    dual_cache: np.ndarray
    accumulator_v: float = 0.0
    step_count: int = 0
    extrapolation: np.ndarray | None = None
    clamped: bool = field(default=False, compare=False)
    last_grad_norm: float = field(default=0.0, compare=False)
    last_theta: float = field(default=0.0, compare=False)


def make_state(phi, x0):
    x0 = np.asarray(x0, dtype=float)
    return OptimizerState(iterate=x0, dual_cache=phi.gradient(x0))


class GradientOracle:
    """Noisy gradient samples g with E[g] equal to the exact gradient.

    Noise is additive isotropic Gaussian in the dual space with standard
    deviation ``noise_sigma``; the oracle owns its PRNG substream so the
    noise stream never interacts with relaxation sampling.
    """

    def __init__(self, problem, noise_sigma=0.0, rng=None):
        self.problem = problem
        self.noise_sigma = float(noise_sigma)
        self.rng = rng if rng is not None else np.random.default_rng()

    def mean_gradient(self, x):
        return self.problem.value_grad(x)[1]

    def sample(self, x):
        g = self.mean_gradient(x)
        if self.noise_sigma > 0.0:
            g = g + self.noise_sigma * self.rng.standard_normal(g.size)
        return g


class OperatorOracle:
    """Noisy samples of a monotone field (saddle-point problems)."""

    def __init__(self, problem, noise_sigma=0.0, rng=None):
        self.problem = problem
        self.noise_sigma = float(noise_sigma)
        self.rng = rng if rng is not None else np.random.default_rng()

    def mean_field(self, z):
        return self.problem.field(z)

    def sample(self, z):
        g = self.mean_field(z)
        if self.noise_sigma > 0.0:
            g = g + self.noise_sigma * self.rng.standard_normal(g.size)
        return g


def _entropy_floor_hit(phi, x):
    return isinstance(phi, NegativeEntropy) and bool(np.any(x <= phi.domain_floor))


def _clamp_entropy(phi, x, project):
    """Clamp to the domain floor; on the simplex renormalize and re-clamp
    (the division can push a floored coordinate fractionally below)."""
    x = np.maximum(x, phi.domain_floor)
    if project:
        x = np.maximum(x / np.sum(x), phi.domain_floor)
    return x


def _apply_dual_step(phi, state, delta_dual, project):
    """dual -= delta; iterate = grad_inverse(dual); optional projection.

    The accumulated dual is kept exact unless projection or a domain
    clamp forces a re-sync from the new iterate.
    """
    dual = state.dual_cache - delta_dual
    x = phi.gradient_inverse(dual)
    clamped = _entropy_floor_hit(phi, x)
    if project:
        x = phi.project_simplex(x)
    if project or clamped:
        dual = phi.gradient(x)
    return OptimizerState(
        iterate=x,
        dual_cache=dual,
        accumulator_v=state.accumulator_v,
        step_count=state.step_count + 1,
        clamped=clamped,
    )


def smd_step(phi, state, g, eta, project=False):
    """Mirror step: dual -= eta * g, mapped back through grad_inverse."""
    if eta <= 0:
        raise ValueError("eta must be positive")
    return _apply_dual_step(phi, state, eta * np.asarray(g, dtype=float), project)


def or_smd_step_a(phi, state, g, eta, lam, project=False):
    """Dual-step over-relaxation: effective step lambda * eta."""
    return _apply_dual_step(phi, state, (lam * eta) * np.asarray(g, dtype=float), project)


def or_smd_step_b(phi, state, g, eta, lam, project=False, clamp_fallback=False):
    """KM over-relaxation: average the current iterate with the base step.

    With the entropy potential and lambda > 1 the average can leave the
    domain; by default that raises :class:`DomainError`, while
    ``clamp_fallback`` clamps to the floor (renormalizing on the simplex)
    and marks the state as clamped.
    """
    base = smd_step(phi, state, g, eta, project)
    if lam == 1.0:
        return base
    combined = (1.0 - lam) * state.iterate + lam * base.iterate
    clamped = base.clamped
    if isinstance(phi, NegativeEntropy) and np.any(combined < phi.domain_floor):
        if not clamp_fallback:
            raise DomainError(
                "KM average left the entropy domain; reduce lambda or enable "
                "the clamp fallback"
            )
        combined = _clamp_entropy(phi, combined, project)
        clamped = True
    elif project:
        combined = phi.project_simplex(combined)
    return OptimizerState(
        iterate=combined,
        dual_cache=phi.gradient(combined),
        accumulator_v=base.accumulator_v,
        step_count=base.step_count,
        clamped=clamped,
    )


def _adaptive_eta(rule, accumulator_v, g):
    """Shared v-update and step size for the adaptive family."""
    gnorm2 = float(np.dot(g, g))
    if rule.rho is None:
        v = accumulator_v + gnorm2
    else:
        v = rule.rho * accumulator_v + (1.0 - rule.rho) * gnorm2
    eta = rule.eta_base / np.sqrt(v + rule.epsilon)
    return v, eta


def adagrad_step(phi, state, g, eta_base, epsilon, project=False):
    """v += ||g||^2, then a mirror step with eta_base / sqrt(v + eps)."""
    rule = AdaptiveStep(eta_base, epsilon)
    g = np.asarray(g, dtype=float)
    v, eta = _adaptive_eta(rule, state.accumulator_v, g)
    new = _apply_dual_step(phi, state, eta * g, project)
    new.accumulator_v = v
    return new


def rmsprop_step(phi, state, g, eta_base, epsilon, rho, project=False):
    """v = rho v + (1 - rho)||g||^2, then the same adaptive mirror step."""
    rule = AdaptiveStep(eta_base, epsilon, rho)
    g = np.asarray(g, dtype=float)
    v, eta = _adaptive_eta(rule, state.accumulator_v, g)
    new = _apply_dual_step(phi, state, eta * g, project)
    new.accumulator_v = v
    return new


def or_adaptive_step(phi, state, g, rule, lam, variant, project=False,
                     clamp_fallback=False):
    """Over-relaxed AdaGrad / RMSProp; variant 'a' or 'b'."""
    g = np.asarray(g, dtype=float)
    v, eta = _adaptive_eta(rule, state.accumulator_v, g)
    carrier = OptimizerState(
        iterate=state.iterate,
        dual_cache=state.dual_cache,
        accumulator_v=v,
        step_count=state.step_count,
    )
    if variant == "a":
        return _apply_dual_step(phi, carrier, (lam * eta) * g, project)
    if variant == "b":
        return or_smd_step_b(phi, carrier, g, eta, lam, project, clamp_fallback)
    raise ValueError(f"variant must be 'a' or 'b', got {variant!r}")


def natgrad_step(phi, state, g, eta, damping=1e-8, lam=1.0, project=False):
    """Primal step along the inverse-Hessian-preconditioned direction.

    Over-relaxation scales the primal step by lambda (the dual and KM
    forms coincide for this affine update). Entropy iterates that fall
    below the floor are clamped (renormalized on the simplex) and flagged.
    """
    direction = phi.hessian_inverse_apply(state.iterate, np.asarray(g, dtype=float), damping)
    x = state.iterate - (lam * eta) * direction
    clamped = False
    if isinstance(phi, NegativeEntropy) and np.any(x < phi.domain_floor):
        x = _clamp_entropy(phi, x, project)
        clamped = True
    elif project:
        x = phi.project_simplex(x)
    return OptimizerState(
        iterate=x,
        dual_cache=phi.gradient(x),
        accumulator_v=state.accumulator_v,
        step_count=state.step_count + 1,
        clamped=clamped,
    )


def mirror_prox_step(phi, state, oracle, eta, project=False):
    """Extrapolate with the field at the current point, update with the
    field at the extrapolation. Two oracle queries per call."""
    g_base = oracle.sample(state.iterate)
    tilde = _apply_dual_step(phi, state, eta * g_base, project)
    g_extra = oracle.sample(tilde.iterate)
    new = _apply_dual_step(phi, state, eta * g_extra, project)
    new.extrapolation = tilde.iterate
    new.clamped = tilde.clamped or new.clamped
    new.last_grad_norm = float(np.linalg.norm(g_base))
    return new


def mirror_prox_or_step(phi, state, oracle, eta, lam, variant, project=False,
                        clamp_fallback=False):
    """Over-relaxed mirror-prox.

    Type A scales the second (update) step to lambda * eta; Type B takes
    the plain update then KM-averages it with the current iterate.
    """
    g_base = oracle.sample(state.iterate)
    tilde = _apply_dual_step(phi, state, eta * g_base, project)
    g_extra = oracle.sample(tilde.iterate)
    if variant == "a":
        new = _apply_dual_step(phi, state, (lam * eta) * g_extra, project)
    elif variant == "b":
        candidate = _apply_dual_step(phi, state, eta * g_extra, project)
        if lam == 1.0:
            new = candidate
        else:
            combined = (1.0 - lam) * state.iterate + lam * candidate.iterate
            if isinstance(phi, NegativeEntropy) and np.any(combined < phi.domain_floor):
                if not clamp_fallback:
                    raise DomainError("KM average left the entropy domain")
                combined = _clamp_entropy(phi, combined, project)
                candidate.clamped = True
            elif project:
                combined = phi.project_simplex(combined)
            new = OptimizerState(
                iterate=combined,
                dual_cache=phi.gradient(combined),
                accumulator_v=state.accumulator_v,
                step_count=state.step_count + 1,
                clamped=candidate.clamped,
            )
    else:
        raise ValueError(f"variant must be 'a' or 'b', got {variant!r}")
    new.extrapolation = tilde.iterate
    new.clamped = tilde.clamped or new.clamped
    new.last_grad_norm = float(np.linalg.norm(g_base))
    return new


def prox_sgd_step(state, g, eta, lam, l1_weight, variant="standard"):
    """Euclidean proximal step for f + l1_weight * ||.||_1.

    ``standard`` soft-thresholds the gradient step. The over-relaxed
    variants use the subgradient realized by the threshold, which makes
    the dual form algebraically identical to the KM average of the
    current iterate and the thresholded point; both are computed that
    way, so 'a' and 'b' coincide exactly.
    """
    if l1_weight < 0:
        raise ValueError("l1_weight must be nonnegative")
    g = np.asarray(g, dtype=float)
    w = state.iterate
    thresholded = soft_threshold(w - eta * g, eta * l1_weight)
    if variant == "standard":
        new_w = thresholded
    elif variant in ("a", "b"):
        new_w = (1.0 - lam) * w + lam * thresholded
    else:
        raise ValueError(f"variant must be 'standard', 'a' or 'b', got {variant!r}")
    return OptimizerState(
        iterate=new_w,
        dual_cache=new_w.copy(),
        accumulator_v=state.accumulator_v,
        step_count=state.step_count + 1,
    )


def half_space_step(phi, state, ustar, beta, lam):
    """One dual correction toward the half-space <z, ustar> <= beta.

    The violation coefficient U is zero when ustar vanishes or the
    constraint already holds; otherwise the dual moves by
    lam * U * ustar. With Euclidean geometry and lam = 1 an active step
    lands exactly on the bounding hyperplane.
    """
    ustar = np.asarray(ustar, dtype=float)
    norm2 = float(np.dot(ustar, ustar))
    inner = float(np.dot(state.iterate, ustar))
    if norm2 > 0.0 and inner > beta:
        U = (inner - beta) / norm2
    else:
        U = 0.0
    if U == 0.0:
        new = OptimizerState(
            iterate=state.iterate.copy(),
            dual_cache=state.dual_cache.copy(),
            accumulator_v=state.accumulator_v,
            step_count=state.step_count + 1,
        )
    else:
        new = _apply_dual_step(phi, state, (lam * U) * ustar, project=False)
    new.last_grad_norm = U * np.sqrt(norm2)
    # descent term of the underlying inequality, logged for diagnostics
    new.last_theta = U * norm2
    return new


METHODS = (
    "smd", "or_smd_a", "or_smd_b",
    "adagrad", "rmsprop", "adagrad_or", "rmsprop_or",
    "natgrad", "natgrad_or",
    "mirror_prox", "mirror_prox_or_a", "mirror_prox_or_b",
    "prox_sgd", "half_space",
)

_ADAPTIVE_METHODS = {"adagrad", "rmsprop", "adagrad_or", "rmsprop_or"}
_OPERATOR_METHODS = {"mirror_prox", "mirror_prox_or_a", "mirror_prox_or_b"}
_RELAXED_METHODS = {
    "or_smd_a", "or_smd_b", "adagrad_or", "rmsprop_or", "natgrad_or",
    "mirror_prox_or_a", "mirror_prox_or_b", "half_space",
}


def _initial_iterate(problem, rng):
    """Per-kind start conventions; randomness comes from the noise stream
    so distinct run seeds give honest across-seed spread."""
    kind = problem.kind
    if kind == "logistic":
        return 0.5 * rng.standard_normal(problem.dim)
    if kind == "sparse":
        return np.zeros(problem.dim)
    if kind == "simplex":
        return np.full(problem.dim, 1.0 / problem.dim)
    if kind == "bilinear":
        z = rng.standard_normal(problem.dim)
        return z / np.linalg.norm(z)
    if kind == "feasibility":
        x = rng.standard_normal(problem.dim)
        return 2.0 * x / np.linalg.norm(x)
    raise ValueError(f"unknown problem kind {kind!r}")


def _check_method_setup(problem, method, geometry, step_rule, variant):
    if method not in METHODS:
        raise ValueError(f"unknown method {method!r}")
    kind = problem.kind
    if method in _OPERATOR_METHODS and kind != "bilinear":
        raise ValueError(f"{method} needs a bilinear saddle problem, got {kind}")
    if method not in _OPERATOR_METHODS and kind == "bilinear":
        raise ValueError("bilinear saddle problems are driven by mirror_prox methods")
    if method == "half_space" and kind != "feasibility":
        raise ValueError(f"half_space needs a feasibility problem, got {kind}")
    if method != "half_space" and kind == "feasibility":
        raise ValueError("feasibility problems are driven by the half_space method")
    if method == "prox_sgd" and kind != "sparse":
        raise ValueError(f"prox_sgd needs a sparse regression problem, got {kind}")
    if method == "prox_sgd" and geometry != "euclidean":
        raise ValueError("prox_sgd is implemented in Euclidean geometry only")
    if kind in ("logistic", "sparse", "bilinear", "feasibility") and geometry != "euclidean":
        raise ValueError(f"{kind} problems live on R^d; use euclidean geometry")
    if method in _ADAPTIVE_METHODS:
        if not isinstance(step_rule, AdaptiveStep):
            raise ValueError(f"{method} requires an adaptive step rule")
        if method in ("adagrad", "adagrad_or") and step_rule.rho is not None:
            raise ValueError("adagrad accumulates; rho must be unset")
        if method in ("rmsprop", "rmsprop_or") and step_rule.rho is None:
            raise ValueError("rmsprop averages; rho must be set")
    elif isinstance(step_rule, AdaptiveStep):
        raise ValueError(f"{method} takes a constant or polynomial step rule")
    if variant not in ("standard", "a", "b"):
        raise ValueError(f"unknown variant {variant!r}")


def run_iteration(problem, method, step_rule, *, geometry="euclidean",
                  schedule=None, mode=None, master_seed=0, seed_index=0,
                  n_iters=100, noise_sigma=0.0, variant="b",
                  natgrad_damping=1e-8, domain_floor=1e-12,
                  with_reference=True):
    """Execute n_iters steps of one method and record the trace.

    Fully deterministic given (master_seed, seed_index): the run's seed
    sequence spawns substream 0 for relaxation sampling and substream 1
    for the initial iterate and oracle noise, so perturbing the noise
    never changes the lambda sequence.
    """
    if schedule is None:
        schedule = ConstantSchedule(1.0)
    if mode is None:
        mode = ScheduleMode.BOUNDED
    validate_schedule(schedule, mode)
    _check_method_setup(problem, method, geometry, step_rule, variant)

    seed_seq = np.random.SeedSequence((int(master_seed), int(seed_index)))
    lam_stream, noise_stream = seed_seq.spawn(2)
    lam_rng = np.random.default_rng(lam_stream)
    noise_rng = np.random.default_rng(noise_stream)

    phi = make_potential(geometry, problem.dim, domain_floor)
    x0 = _initial_iterate(problem, noise_rng)
    if geometry == "entropy":
        x0 = np.maximum(x0, domain_floor)
    state = make_state(phi, x0)
    project = problem.kind == "simplex"

    if method in _OPERATOR_METHODS:
        oracle = OperatorOracle(problem, noise_sigma, noise_rng)
    elif method == "half_space":
        oracle = None
    else:
        oracle = GradientOracle(problem, noise_sigma, noise_rng)

    z_ref = reference_solution(problem) if with_reference else None
    uses_lambda = method in _RELAXED_METHODS or (
        method == "prox_sgd" and variant != "standard"
    )

    rows = []

    def record(n, lam, step_norm, grad_norm, clamped):
        row = {
            "n": n,
            "loss": problem.loss(state.iterate),
            "bregman_to_ref": (
                phi.divergence(z_ref, state.iterate) if z_ref is not None else np.nan
            ),
            "grad_norm": grad_norm,
            "lambda_used": lam,
            "step_norm": step_norm,
            "domain_clamp_flag": clamped,
        }
        rows.append(row)

    if method in _OPERATOR_METHODS:
        g0_norm = float(np.linalg.norm(problem.field(state.iterate)))
    elif method == "half_space":
        g0_norm = float(np.linalg.norm(state.iterate))
    else:
        g0_norm = float(np.linalg.norm(problem.value_grad(state.iterate)[1]))
    record(0, 0.0, 0.0, g0_norm, False)

    for n in range(n_iters):
        lam = sample_lambda(schedule, lam_rng, n) if uses_lambda else 1.0
        prev = state.iterate
        try:
            state = _dispatch_step(
                problem, method, phi, state, oracle, step_rule, n, lam,
                variant, natgrad_damping, project, noise_rng,
            )
        except (OverflowError, DomainError, FloatingPointError) as exc:
            exc.iteration = n
            raise
        assert np.allclose(
            state.dual_cache, phi.gradient(state.iterate), rtol=1e-10, atol=1e-10
        ), f"dual cache desynced at iteration {n}"
        grad_norm = state.last_grad_norm
        record(
            n + 1, lam if uses_lambda else 1.0,
            float(np.linalg.norm(state.iterate - prev)), grad_norm, state.clamped,
        )

    return RunTrace.from_rows(rows, with_reference=with_reference), state


def _dispatch_step(problem, method, phi, state, oracle, step_rule, n, lam,
                   variant, natgrad_damping, project, noise_rng):
    if method in _OPERATOR_METHODS:
        eta = step_rule.at(n)
        if method == "mirror_prox":
            return mirror_prox_step(phi, state, oracle, eta, project)
        mp_variant = method[-1]
        return mirror_prox_or_step(
            phi, state, oracle, eta, lam, mp_variant, project, clamp_fallback=True
        )

    if method == "half_space":
        u = noise_rng.standard_normal(problem.dim)
        u = u / np.linalg.norm(u)
        return half_space_step(phi, state, u, problem.offset, lam)

    g = oracle.sample(state.iterate)
    if method == "smd":
        state_out = smd_step(phi, state, g, step_rule.at(n), project)
    elif method == "or_smd_a":
        state_out = or_smd_step_a(phi, state, g, step_rule.at(n), lam, project)
    elif method == "or_smd_b":
        state_out = or_smd_step_b(
            phi, state, g, step_rule.at(n), lam, project, clamp_fallback=True
        )
    elif method == "adagrad":
        state_out = adagrad_step(
            phi, state, g, step_rule.eta_base, step_rule.epsilon, project
        )
    elif method == "rmsprop":
        state_out = rmsprop_step(
            phi, state, g, step_rule.eta_base, step_rule.epsilon, step_rule.rho, project
        )
    elif method in ("adagrad_or", "rmsprop_or"):
        state_out = or_adaptive_step(
            phi, state, g, step_rule, lam, variant, project, clamp_fallback=True
        )
    elif method == "natgrad":
        state_out = natgrad_step(
            phi, state, g, step_rule.at(n), natgrad_damping, 1.0, project
        )
    elif method == "natgrad_or":
        state_out = natgrad_step(
            phi, state, g, step_rule.at(n), natgrad_damping, lam, project
        )
    elif method == "prox_sgd":
        state_out = prox_sgd_step(
            state, g, step_rule.at(n), lam, problem.l1_weight, variant
        )
    else:
        raise ValueError(f"unknown method {method!r}")
    state_out.last_grad_norm = float(np.linalg.norm(g))
    return state_out
