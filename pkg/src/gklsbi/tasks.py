"""Benchmark problems: priors, simulators, tractable reference posteriors."""

import math
from dataclasses import dataclass

import numpy as np

from .distributions import Gaussian, GaussianMixture2, UniformBox
from .samplers import grid_log_mass_2d, grid_sample_2d

NOISE_VAR = 0.1          # gaussian_linear observation noise
MIXTURE_VARS = (1.0, 0.01)
TWO_MOONS_R_MEAN = 0.1
TWO_MOONS_R_STD = 0.01
TWO_MOONS_OFFSET = 0.25
GRID_RESOLUTION = 1024
N_OBSERVATIONS = 10


@dataclass(frozen=True)
class TaskSpec:
    name: str
    theta_dim: int
    x_dim: int
    prior: object
    ref_mode: str  # closed_form | grid2d | rejection_from_gaussian


def get_task(name):
    if name == "gaussian_linear":
        return TaskSpec(name, 10, 10, Gaussian.isotropic(np.zeros(10), NOISE_VAR),
                        "closed_form")
    if name == "gaussian_linear_uniform":
        return TaskSpec(name, 10, 10, UniformBox(-np.ones(10), np.ones(10)),
                        "rejection_from_gaussian")
    if name == "gaussian_mixture":
        return TaskSpec(name, 2, 2, UniformBox(-10 * np.ones(2), 10 * np.ones(2)),
                        "grid2d")
    if name == "two_moons":
        return TaskSpec(name, 2, 2, UniformBox(-np.ones(2), np.ones(2)), "grid2d")
    raise KeyError(f"unknown task {name!r}")


TASK_NAMES = ("gaussian_linear", "gaussian_linear_uniform", "gaussian_mixture",
              "two_moons")


def simulate(task, theta, rng):
    """One draw (or a batch of draws) from the simulator p(x | theta)."""
    theta = np.asarray(theta, dtype=np.float64)
    single = theta.ndim == 1
    theta = np.atleast_2d(theta)
    if theta.shape[-1] != task.theta_dim:
        raise ValueError("theta dimension mismatch")
    if not np.all(np.isfinite(task.prior.log_pdf(theta))):
        raise ValueError("theta outside the prior support")
    n = theta.shape[0]
    if task.name in ("gaussian_linear", "gaussian_linear_uniform"):
        x = theta + math.sqrt(NOISE_VAR) * rng.standard_normal(theta.shape)
    elif task.name == "gaussian_mixture":
        pick = rng.uniform(size=n) < 0.5
        scale = np.where(pick, math.sqrt(MIXTURE_VARS[0]), math.sqrt(MIXTURE_VARS[1]))
        x = theta + scale[:, None] * rng.standard_normal(theta.shape)
    elif task.name == "two_moons":
        a = rng.uniform(-math.pi / 2, math.pi / 2, size=n)
        r = rng.normal(TWO_MOONS_R_MEAN, TWO_MOONS_R_STD, size=n)
        crescent = np.stack(
            [r * np.cos(a) + TWO_MOONS_OFFSET, r * np.sin(a)], axis=-1
        )
        x = crescent + _two_moons_shift(theta)
    else:
        raise KeyError(task.name)
    return x[0] if single else x


def _two_moons_shift(theta):
    s = math.sqrt(2.0)
    return np.stack(
        [-np.abs(theta[:, 0] + theta[:, 1]) / s,
         (-theta[:, 0] + theta[:, 1]) / s],
        axis=-1,
    )


def sample_joint(task, n, rng):
    """n draws from the joint: theta ~ prior, x ~ simulator."""
    theta = np.atleast_2d(task.prior.sample(rng, size=n))
    return theta, simulate(task, theta, rng)


def log_likelihood(task, x_o, theta):
    """Exact log p(x_o | theta) for the tasks with analytic likelihoods."""
    theta = np.atleast_2d(np.asarray(theta, dtype=np.float64))
    if task.name in ("gaussian_linear", "gaussian_linear_uniform"):
        d = task.x_dim
        sq = np.sum((x_o - theta) ** 2, axis=-1)
        return -0.5 * sq / NOISE_VAR - 0.5 * d * math.log(2 * math.pi * NOISE_VAR)
    if task.name == "gaussian_mixture":
        mix = GaussianMixture2(np.zeros(2), *MIXTURE_VARS)
        return mix.log_pdf(x_o - theta)
    if task.name == "two_moons":
        v = x_o - _two_moons_shift(theta)
        v = v - np.array([TWO_MOONS_OFFSET, 0.0])
        radius = np.sqrt(np.sum(v * v, axis=-1))
        with np.errstate(divide="ignore"):
            log_radial = (
                -0.5 * ((radius - TWO_MOONS_R_MEAN) / TWO_MOONS_R_STD) ** 2
                - math.log(TWO_MOONS_R_STD * math.sqrt(2 * math.pi))
            )
            out = log_radial - math.log(math.pi) - np.log(radius)
        # the crescent spans angles (-pi/2, pi/2): the first component of v
        # is positive for every reachable point
        out = np.where(v[:, 0] > 0, out, -np.inf)
        return out
    raise KeyError(task.name)


def log_posterior_unnorm(task, x_o):
    """Unnormalized log posterior over theta as a vectorized callable."""

    def fn(theta):
        theta = np.atleast_2d(theta)
        prior_lp = task.prior.log_pdf(theta)
        out = np.full(theta.shape[0], -np.inf)
        ok = np.isfinite(prior_lp)
        if np.any(ok):
            out[ok] = prior_lp[ok] + log_likelihood(task, x_o, theta[ok])
        return out

    return fn


def posterior_grid_bounds(task, x_o):
    if task.name == "two_moons":
        return ((-1.0, 1.0), (-1.0, 1.0))
    if task.name == "gaussian_mixture":
        lo = np.maximum(x_o - 4.5, task.prior.lower)
        hi = np.minimum(x_o + 4.5, task.prior.upper)
        return ((lo[0], hi[0]), (lo[1], hi[1]))
    raise KeyError(f"no grid oracle for task {task.name!r}")


def check_grid_resolution(task, x_o, resolution=GRID_RESOLUTION, rtol=5e-3):
    """Doubling the resolution must leave the grid mass essentially fixed."""
    bounds = posterior_grid_bounds(task, x_o)
    fn = log_posterior_unnorm(task, x_o)
    m1 = grid_log_mass_2d(fn, bounds, resolution)
    m2 = grid_log_mass_2d(fn, bounds, 2 * resolution)
    if abs(m1 - m2) > rtol:
        raise RuntimeError(
            f"grid resolution {resolution} insufficient for {task.name}: "
            f"log-mass moved by {abs(m1 - m2):.2e} when doubling"
        )


def reference_posterior_samples(task, x_o, n, rng, resolution=GRID_RESOLUTION):
    """Exact (or grid-oracle) draws from the likelihood-based posterior."""
    if n < 1:
        raise ValueError("n must be at least 1")
    x_o = np.asarray(x_o, dtype=np.float64)
    if task.name == "gaussian_linear":
        # conjugate update: precisions 1/0.1 + 1/0.1 per coordinate
        post = Gaussian.isotropic(x_o / 2.0, NOISE_VAR / 2.0)
        return post.sample(rng, size=n)
    if task.name == "gaussian_linear_uniform":
        # flat prior: posterior is the likelihood in theta, truncated to the
        # box; per-dimension rejection since the covariance is diagonal
        out = np.empty((n, task.theta_dim))
        sd = math.sqrt(NOISE_VAR)
        for j in range(task.theta_dim):
            got = 0
            while got < n:
                draw = rng.normal(x_o[j], sd, size=4 * n)
                keep = draw[(draw >= -1.0) & (draw <= 1.0)]
                take = min(n - got, keep.size)
                out[got : got + take, j] = keep[:take]
                got += take
        return out
    bounds = posterior_grid_bounds(task, x_o)
    return grid_sample_2d(log_posterior_unnorm(task, x_o), bounds, resolution,
                          n, rng)


def observation_rng(task_name, index):
    """Deterministic stream for one (task, observation index) pair."""
    code = TASK_NAMES.index(task_name)
    return np.random.default_rng(np.random.SeedSequence([97, code, index]))


def make_observation(task, index):
    """Fixed pair number `index` (1..10): theta ~ prior, x_o = simulate(theta)."""
    if not 1 <= index <= N_OBSERVATIONS:
        raise ValueError(f"observation index must be 1..{N_OBSERVATIONS}")
    rng = observation_rng(task.name, index)
    theta = task.prior.sample(rng)
    x_o = simulate(task, theta, rng)
    return theta, x_o
