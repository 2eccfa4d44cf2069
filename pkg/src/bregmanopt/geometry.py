"""Legendre potentials, Bregman divergences, and simplex projections on R^d.

Points and dual vectors are plain 1-D float64 numpy arrays. The dual
pairing is the dot product throughout. Two potentials are provided:

* :class:`SquaredEuclidean` -- phi(x) = 0.5 ||x||^2, self-dual, full domain.
* :class:`NegativeEntropy`  -- phi(x) = sum x_i log x_i on the positive
  orthant; its Bregman divergence restricted to the simplex is the KL
  divergence and its simplex projection is multiplicative normalization.
"""

import numpy as np

from . import _kernels


class DomainError(ValueError):
    """A point lies outside the interior of the potential's domain."""


class LegendrePotential:
    """Strictly convex potential with an invertible gradient map."""

    def __init__(self, dim):
        if dim <= 0:
            raise ValueError(f"dim must be positive, got {dim}")
        self.dim = int(dim)

    def value(self, x):
        raise NotImplementedError

    def gradient(self, x):
        raise NotImplementedError

    def gradient_inverse(self, ystar):
        raise NotImplementedError

    def divergence(self, y, x):
        raise NotImplementedError

    def project_simplex(self, x):
        raise NotImplementedError

    def hessian_inverse_apply(self, x, g, damping):
        raise NotImplementedError

    def three_point_gap(self, y, x, xplus):
        """Floating-point residual of the three-point identity.

        Returns D(y,x) - D(y,x+) - D(x+,x) - <grad(x+) - grad(x), y - x+>,
        which is exactly zero in real arithmetic.
        """
        lhs = self.divergence(y, x) - self.divergence(y, xplus) - self.divergence(xplus, x)
        rhs = np.dot(self.gradient(xplus) - self.gradient(x), y - xplus)
        return float(lhs - rhs)


class SquaredEuclidean(LegendrePotential):
    """phi(x) = 0.5 ||x||^2; gradient and its inverse are the identity."""

    def value(self, x):
        return 0.5 * float(np.dot(x, x))

    def gradient(self, x):
        return np.array(x, dtype=float)

    def gradient_inverse(self, ystar):
        return np.array(ystar, dtype=float)

    def divergence(self, y, x):
        d = y - x
        return 0.5 * float(np.dot(d, d))

    def project_simplex(self, x):
        return _kernels.project_simplex_euclidean(np.asarray(x, dtype=float))

    def hessian_inverse_apply(self, x, g, damping):
        return np.asarray(g, dtype=float) / (1.0 + damping)


class NegativeEntropy(LegendrePotential):
    """phi(x) = sum x_i log x_i on coordinates >= domain_floor.

    ``gradient_inverse`` clamps its output to the floor so later logs stay
    finite; simplex feasibility is restored separately by
    :meth:`project_simplex` (multiplicative normalization).
    """

    #: exp arguments above this signal step-size blow-up
    MAX_EXP_ARG = 700.0

    def __init__(self, dim, domain_floor=1e-12):
        super().__init__(dim)
        if domain_floor <= 0:
            raise ValueError(f"domain_floor must be positive, got {domain_floor}")
        self.domain_floor = float(domain_floor)

    def _check_interior(self, x):
        if np.any(x < self.domain_floor):
            raise DomainError(
                f"coordinate below domain floor {self.domain_floor}: min={np.min(x)}"
            )

    def value(self, x):
        x = np.asarray(x, dtype=float)
        self._check_interior(x)
        return float(_kernels.entropy_value(x))

    def gradient(self, x):
        x = np.asarray(x, dtype=float)
        self._check_interior(x)
        return _kernels.entropy_gradient(x)

    def gradient_inverse(self, ystar):
        ystar = np.asarray(ystar, dtype=float)
        if np.any(ystar - 1.0 > self.MAX_EXP_ARG):
            raise OverflowError(
                "dual coordinate too large for exp; reduce the step size "
                f"(max argument {np.max(ystar) - 1.0:.3g})"
            )
        return _kernels.entropy_gradient_inverse(ystar, self.domain_floor)

    def divergence(self, y, x):
        y = np.asarray(y, dtype=float)
        x = np.asarray(x, dtype=float)
        self._check_interior(y)
        self._check_interior(x)
        return float(_kernels.entropy_divergence(y, x))

    def project_simplex(self, x):
        x = np.asarray(x, dtype=float)
        if np.any(x <= 0.0):
            raise DomainError("entropy simplex projection needs positive coordinates")
        return x / np.sum(x)

    def hessian_inverse_apply(self, x, g, damping):
        x = np.asarray(x, dtype=float)
        self._check_interior(x)
        return _kernels.entropy_hessian_inverse_apply(x, np.asarray(g, dtype=float), damping)


def make_potential(geometry, dim, domain_floor=1e-12):
    """Build a potential from its config name ('euclidean' or 'entropy')."""
    if geometry == "euclidean":
        return SquaredEuclidean(dim)
    if geometry == "entropy":
        return NegativeEntropy(dim, domain_floor=domain_floor)
    raise ValueError(f"unknown geometry {geometry!r}")
