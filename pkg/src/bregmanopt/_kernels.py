"""Hot numeric kernels shared by the geometry and problem modules.

Every kernel has a single vectorized numpy body. When numba is importable
and ``BREGMANOPT_DISABLE_NUMBA`` is not set to ``1``, the bodies are
JIT-compiled with ``@njit(cache=True)``; otherwise the plain numpy
functions are used unchanged. ``benchmarks/bench_kernels.py`` compares the
two paths.
"""

import os

import numpy as np


def _numba_requested() -> bool:
    if os.environ.get("BREGMANOPT_DISABLE_NUMBA", "0") == "1":
        return False
    try:
        import numba  # noqa: F401
    except ImportError:
        return False
    return True


USING_NUMBA = _numba_requested()


def _entropy_value(x):
    return np.sum(x * np.log(x))


def _entropy_gradient(x):
    return 1.0 + np.log(x)


def _entropy_gradient_inverse(y, floor):
    return np.maximum(np.exp(y - 1.0), floor)


def _entropy_divergence(y, x):
    # generalized KL; equals plain KL when both arguments sum to 1
    return np.sum(y * np.log(y / x) - y + x)


def _entropy_hessian_inverse_apply(x, g, damping):
    return x * g / (1.0 + damping * x)


def _project_simplex_euclidean(v):
    # sort-and-threshold; cond is true at index 0, so rho always exists
    u = np.sort(v)[::-1]
    cumsums = np.cumsum(u)
    k = np.arange(1, v.size + 1)
    cond = u + (1.0 - cumsums) / k > 0.0
    rho = np.nonzero(cond)[0][-1]
    tau = (cumsums[rho] - 1.0) / (rho + 1.0)
    return np.maximum(v - tau, 0.0)


def _soft_threshold(x, t):
    return np.sign(x) * np.maximum(np.abs(x) - t, 0.0)


def _logistic_value_grad(features, labels, w, weight_decay):
    # mean log(1 + exp(-y_i x_i.w)) + (wd/2)||w||^2, stable for large margins
    margins = (features @ w) * labels
    value = np.sum(np.logaddexp(0.0, -margins)) / margins.size
    value += 0.5 * weight_decay * np.dot(w, w)
    sig = labels / (1.0 + np.exp(margins))
    grad = -(features.T @ sig) / margins.size + weight_decay * w
    return value, grad


def _least_squares_value_grad(design, targets, w):
    r = design @ w - targets
    value = 0.5 * np.dot(r, r) / targets.size
    grad = (design.T @ r) / targets.size
    return value, grad


if USING_NUMBA:
    from numba import njit

    _jit = njit(cache=True)
    entropy_value = _jit(_entropy_value)
    entropy_gradient = _jit(_entropy_gradient)
    entropy_gradient_inverse = _jit(_entropy_gradient_inverse)
    entropy_divergence = _jit(_entropy_divergence)
    entropy_hessian_inverse_apply = _jit(_entropy_hessian_inverse_apply)
    project_simplex_euclidean = _jit(_project_simplex_euclidean)
    soft_threshold = _jit(_soft_threshold)
    logistic_value_grad = _jit(_logistic_value_grad)
    least_squares_value_grad = _jit(_least_squares_value_grad)
else:
    entropy_value = _entropy_value
    entropy_gradient = _entropy_gradient
    entropy_gradient_inverse = _entropy_gradient_inverse
    entropy_divergence = _entropy_divergence
    entropy_hessian_inverse_apply = _entropy_hessian_inverse_apply
    project_simplex_euclidean = _project_simplex_euclidean
    soft_threshold = _soft_threshold
    logistic_value_grad = _logistic_value_grad
    least_squares_value_grad = _least_squares_value_grad


def warm_up():
    """Trigger JIT compilation of every kernel (no-op on the numpy path)."""
    x = np.array([0.4, 0.6])
    g = np.array([0.5, -0.5])
    entropy_value(x)
    entropy_gradient(x)
    entropy_gradient_inverse(g, 1e-12)
    entropy_divergence(x, x)
    entropy_hessian_inverse_apply(x, g, 0.1)
    project_simplex_euclidean(g)
    soft_threshold(g, 0.1)
    logistic_value_grad(np.eye(2), np.array([1.0, -1.0]), g, 0.01)
    least_squares_value_grad(np.eye(2), x, g)
