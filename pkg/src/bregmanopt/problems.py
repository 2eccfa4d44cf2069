"""Synthetic problem generators and their loss / operator oracles.

Problems are immutable after generation and fully reconstructible from
(kind, seed, parameters); no data files are read or written. Each problem
exposes exact analytic gradients (checked against finite differences in
the test suite) and a scalar progress measure used as the trace ``loss``
column:

* logistic           -- regularized train loss
* sparse regression  -- smooth least-squares part f, plus f + l1 objective
* bilinear saddle    -- primal-dual gap
* simplex estimation -- cross-entropy value
* half-space feasibility -- 0.5 ||x||^2, the distance to the known
  feasible point at the origin
"""

import numpy as np

from . import _kernels
from .geometry import DomainError


def _as_rng(rng):
    if isinstance(rng, np.random.Generator):
        return rng
    return np.random.default_rng(rng)


class LogisticRegressionProblem:
    """l2-regularized binary logistic regression on ±1 labels."""

    kind = "logistic"

    def __init__(self, features, labels, weight_decay, train_idx, val_idx):
        self.features = np.asarray(features, dtype=float)
        self.labels = np.asarray(labels, dtype=float)
        if weight_decay < 0:
            raise ValueError("weight_decay must be nonnegative")
        self.weight_decay = float(weight_decay)
        self.train_idx = np.asarray(train_idx, dtype=np.intp)
        self.val_idx = np.asarray(val_idx, dtype=np.intp)
        self.dim = self.features.shape[1]
        self.hidden_weights = None  # set by the generator

    def value_grad(self, w, batch=None):
        """Loss and exact gradient on the given batch.

        ``batch`` is None for the train split, "all" for every row, or an
        index array.
        """
        if batch is None:
            rows = self.train_idx
        elif isinstance(batch, str) and batch == "all":
            rows = slice(None)
        else:
            rows = np.asarray(batch, dtype=np.intp)
        value, grad = _kernels.logistic_value_grad(
            self.features[rows], self.labels[rows], np.asarray(w, dtype=float),
            self.weight_decay,
        )
        return float(value), grad

    def loss(self, w):
        return self.value_grad(w)[0]


def generate_logistic(rng, n=2000, d=20, split=0.8, weight_decay=1e-2,
                      label_flip=0.05):
    """Standard-normal features, planted normal weights, noisy sign labels."""
    rng = _as_rng(rng)
    features = rng.standard_normal((n, d))
    hidden = rng.standard_normal(d)
    margins = features @ hidden + rng.standard_normal(n)
    labels = np.where(margins >= 0.0, 1.0, -1.0)
    if label_flip > 0:
        flips = rng.random(n) < label_flip
        labels[flips] = -labels[flips]
    perm = rng.permutation(n)
    n_train = int(round(split * n))
    problem = LogisticRegressionProblem(
        features, labels, weight_decay, perm[:n_train], perm[n_train:]
    )
    problem.hidden_weights = hidden
    return problem


class BilinearSaddleProblem:
    """min_x max_y  x.A y + (mu/2)||x||^2 - (mu/2)||y||^2.

    The unique saddle point is the origin. Optimizers work on the stacked
    variable z = (x, y) of length 2d through the monotone field
    F(z) = (grad_x L, -grad_y L).
    """

    kind = "bilinear"

    def __init__(self, A, mu):
        self.A = np.asarray(A, dtype=float)
        if mu <= 0:
            raise ValueError("mu must be positive")
        self.mu = float(mu)
        self.d = self.A.shape[0]
        self.dim = 2 * self.d

    def split(self, z):
        return z[: self.d], z[self.d:]

    def saddle_operator(self, x, y):
        """The monotone field components (grad_x L, -grad_y L)."""
        gx = self.A @ y + self.mu * x
        gy = -self.A.T @ x + self.mu * y
        return gx, gy

    def field(self, z):
        gx, gy = self.saddle_operator(*self.split(z))
        return np.concatenate([gx, gy])

    def primal_dual_gap(self, x, y):
        """max_y' L(x,y') - min_x' L(x',y), in closed form."""
        atx = self.A.T @ x
        ay = self.A @ y
        gap = (
            0.5 * self.mu * np.dot(x, x)
            + np.dot(atx, atx) / (2.0 * self.mu)
            + 0.5 * self.mu * np.dot(y, y)
            + np.dot(ay, ay) / (2.0 * self.mu)
        )
        return float(gap)

    def loss(self, z):
        return self.primal_dual_gap(*self.split(z))


def generate_bilinear(rng, d=20, mu=0.1):
    """A with iid N(0, 1/d) entries, scaled so eta = 0.1 is stable."""
    rng = _as_rng(rng)
    A = rng.standard_normal((d, d)) / np.sqrt(d)
    return BilinearSaddleProblem(A, mu)


class SparseRegressionProblem:
    """Least squares with an l1 penalty and a planted sparse solution."""

    kind = "sparse"

    def __init__(self, design, targets, l1_weight, planted_support,
                 planted_weights):
        self.design = np.asarray(design, dtype=float)
        self.targets = np.asarray(targets, dtype=float)
        if l1_weight < 0:
            raise ValueError("l1_weight must be nonnegative")
        self.l1_weight = float(l1_weight)
        self.planted_support = np.asarray(planted_support, dtype=np.intp)
        self.planted_weights = np.asarray(planted_weights, dtype=float)
        self.dim = self.design.shape[1]

    def value_grad(self, w):
        """Smooth part only: (1/2n)||Xw - y||^2 and its gradient."""
        value, grad = _kernels.least_squares_value_grad(
            self.design, self.targets, np.asarray(w, dtype=float)
        )
        return float(value), grad

    def objective(self, w):
        """f + h: smooth part plus the l1 penalty."""
        return self.value_grad(w)[0] + self.l1_weight * float(np.sum(np.abs(w)))

    def loss(self, w):
        return self.objective(w)


def generate_sparse_regression(rng, n=200, d=50, k=5, noise_sigma=0.01,
                               l1_weight=0.01):
    """Gaussian design, k planted coordinates with weights ±U(1, 2)."""
    if k >= d:
        raise ValueError("need k < d")
    rng = _as_rng(rng)
    design = rng.standard_normal((n, d))
    support = np.sort(rng.choice(d, size=k, replace=False))
    weights = np.zeros(d)
    magnitudes = rng.uniform(1.0, 2.0, size=k)
    signs = np.where(rng.random(k) < 0.5, -1.0, 1.0)
    weights[support] = signs * magnitudes
    targets = design @ weights + noise_sigma * rng.standard_normal(n)
    return SparseRegressionProblem(design, targets, l1_weight, support, weights)


def sparsity_metrics(w, threshold=1e-6):
    """(nnz, nnz / ||w||_1); the ratio is reported as 0 when ||w||_1 = 0."""
    w = np.asarray(w, dtype=float)
    nnz = int(np.sum(np.abs(w) > threshold))
    l1 = float(np.sum(np.abs(w)))
    ratio = 0.0 if l1 == 0.0 else nnz / l1
    return nnz, ratio


class SimplexEstimationProblem:
    """Cross-entropy f(p) = -sum q_i log p_i on the probability simplex.

    The minimizer over the simplex is p = q, where the gradient is the
    constant -1 vector.
    """

    kind = "simplex"

    def __init__(self, target_q):
        q = np.asarray(target_q, dtype=float)
        if np.any(q < 0) or abs(np.sum(q) - 1.0) > 1e-12:
            raise ValueError("target_q must lie on the probability simplex")
        self.target_q = q
        self.dim = q.size

    def value_grad(self, p):
        p = np.asarray(p, dtype=float)
        if np.any(p <= 0.0):
            raise DomainError("cross-entropy needs an interior simplex point")
        value = -float(np.dot(self.target_q, np.log(p)))
        grad = -self.target_q / p
        return value, grad

    def loss(self, p):
        return self.value_grad(p)[0]


def generate_simplex_target(rng, d=4):
    """A target bounded away from the simplex boundary."""
    rng = _as_rng(rng)
    q = rng.uniform(0.2, 1.0, size=d)
    return SimplexEstimationProblem(q / np.sum(q))


class HalfSpaceFeasibilityProblem:
    """Find the point satisfying every half-space <z, u> <= offset.

    Constraint directions are sampled per iteration by the run driver;
    with offset 0 the intersection over all directions is the origin,
    which doubles as the exact reference solution.
    """

    kind = "feasibility"

    def __init__(self, dim, offset=0.0):
        if offset < 0:
            raise ValueError("offset must be nonnegative so 0 stays feasible")
        self.dim = int(dim)
        self.offset = float(offset)

    def loss(self, x):
        return 0.5 * float(np.dot(x, x))
