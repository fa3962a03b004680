"""Exact densities and samplers for the analytically tractable families."""

import math
from dataclasses import dataclass

import numpy as np

LOG_2PI = math.log(2.0 * math.pi)


@dataclass(frozen=True)
class Gaussian:
    """Multivariate normal parameterized by mean and a lower-triangular
    Cholesky factor of the covariance."""

    mean: np.ndarray
    chol: np.ndarray

    def __post_init__(self):
        mean = np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        chol = np.atleast_2d(np.asarray(self.chol, dtype=np.float64))
        if np.any(np.diag(chol) <= 0):
            raise ValueError("Cholesky factor needs a strictly positive diagonal")
        object.__setattr__(self, "mean", mean)
        object.__setattr__(self, "chol", np.tril(chol))

    @classmethod
    def isotropic(cls, mean, variance):
        mean = np.atleast_1d(np.asarray(mean, dtype=np.float64))
        return cls(mean, math.sqrt(variance) * np.eye(len(mean)))

    @property
    def dim(self):
        return len(self.mean)

    def log_pdf(self, point):
        point = np.asarray(point, dtype=np.float64)
        if point.shape[-1] != self.dim:
            raise ValueError("point dimension mismatch")
        diff = point - self.mean
        z = _tri_solve(self.chol, diff)
        logdet = np.sum(np.log(np.diag(self.chol)))
        return -0.5 * np.sum(z * z, axis=-1) - logdet - 0.5 * self.dim * LOG_2PI

    def sample(self, rng, size=None):
        shape = (self.dim,) if size is None else (size, self.dim)
        eps = rng.standard_normal(shape)
        return self.mean + eps @ self.chol.T


def _tri_solve(chol, diff):
    """Solve L z = diff for batched right-hand sides."""
    from scipy.linalg import solve_triangular

    flat = np.atleast_2d(diff)
    z = solve_triangular(chol, flat.T, lower=True).T
    return z.reshape(diff.shape)


@dataclass(frozen=True)
class UniformBox:
    lower: np.ndarray
    upper: np.ndarray

    def __post_init__(self):
        lower = np.atleast_1d(np.asarray(self.lower, dtype=np.float64))
        upper = np.atleast_1d(np.asarray(self.upper, dtype=np.float64))
        if not np.all(lower < upper):
            raise ValueError("lower bounds must be strictly below upper bounds")
        object.__setattr__(self, "lower", lower)
        object.__setattr__(self, "upper", upper)

    @property
    def dim(self):
        return len(self.lower)

    def log_pdf(self, point):
        point = np.asarray(point, dtype=np.float64)
        if point.shape[-1] != self.dim:
            raise ValueError("point dimension mismatch")
        inside = np.all((point >= self.lower) & (point <= self.upper), axis=-1)
        const = -np.sum(np.log(self.upper - self.lower))
        return np.where(inside, const, -np.inf)

    def sample(self, rng, size=None):
        shape = (self.dim,) if size is None else (size, self.dim)
        return rng.uniform(self.lower, self.upper, size=shape)


@dataclass(frozen=True)
class GaussianMixture2:
    """Equal-mean mixture of two isotropic Gaussians with different scales."""

    mean: np.ndarray
    var1: float = 1.0
    var2: float = 0.01
    weight: float = 0.5

    def __post_init__(self):
        if not 0.0 < self.weight < 1.0:
            raise ValueError("mixing weight must lie in (0, 1)")
        object.__setattr__(
            self, "mean", np.atleast_1d(np.asarray(self.mean, dtype=np.float64))
        )

    @property
    def dim(self):
        return len(self.mean)

    def _components(self):
        return (
            Gaussian.isotropic(self.mean, self.var1),
            Gaussian.isotropic(self.mean, self.var2),
        )

    def log_pdf(self, point):
        c1, c2 = self._components()
        a = np.log(self.weight) + c1.log_pdf(point)
        b = np.log(1.0 - self.weight) + c2.log_pdf(point)
        return np.logaddexp(a, b)

    def sample(self, rng, size=None):
        n = 1 if size is None else size
        c1, c2 = self._components()
        pick = rng.uniform(size=n) < self.weight
        draws = np.where(
            pick[:, None], c1.sample(rng, size=n), c2.sample(rng, size=n)
        )
        return draws[0] if size is None else draws


def log_pdf(dist, point):
    return dist.log_pdf(point)


def sample(dist, rng, size=None):
    return dist.sample(rng, size=size)
