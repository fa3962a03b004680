import math

import numpy as np
import pytest
from scipy.stats import norm, truncnorm

from gklsbi.distributions import Gaussian
from gklsbi.tasks import (
    GRID_RESOLUTION,
    N_OBSERVATIONS,
    NOISE_VAR,
    TASK_NAMES,
    check_grid_resolution,
    get_task,
    log_likelihood,
    log_posterior_unnorm,
    make_observation,
    reference_posterior_samples,
    sample_joint,
    simulate,
)


class _StubRng:
    """Deterministic stand-in: uniform returns the interval midpoint,
    normal returns its mean, standard_normal returns zeros."""

    def uniform(self, low=0.0, high=1.0, size=None):
        mid = (np.asarray(low) + np.asarray(high)) / 2.0
        return np.broadcast_to(mid, size).copy() if size is not None else mid

    def normal(self, loc=0.0, scale=1.0, size=None):
        return np.full(size, loc) if size is not None else float(loc)

    def standard_normal(self, size=None):
        return np.zeros(size) if size is not None else 0.0


class TestSimulator:
    def test_gaussian_linear_is_theta_plus_noise(self):
        task = get_task("gaussian_linear")
        theta = np.zeros((1, 10))
        x = simulate(task, theta, _StubRng())
        assert np.array_equal(x, theta)

    def test_gaussian_linear_noise_variance(self):
        task = get_task("gaussian_linear")
        theta = np.tile(np.linspace(-0.5, 0.5, 10), (200_000, 1))
        x = simulate(task, theta, np.random.default_rng(0))
        assert np.allclose((x - theta).mean(axis=0), 0.0, atol=0.01)
        assert np.allclose((x - theta).var(axis=0), NOISE_VAR, atol=0.005)

    def test_two_moons_pinned_noise_free_point(self):
        # midpoint angle 0 and mean radius 0.1 put the crescent point at
        # (0.35, 0) before the theta-dependent shift
        task = get_task("two_moons")
        theta = np.array([[0.0, 0.0]])
        x = simulate(task, theta, _StubRng())
        assert np.allclose(x, [[0.35, 0.0]], atol=1e-12)

    def test_two_moons_shift_is_applied(self):
        task = get_task("two_moons")
        theta = np.array([[0.6, -0.2]])
        x = simulate(task, theta, _StubRng())
        s = math.sqrt(2.0)
        shift = np.array([-abs(0.6 - 0.2) / s, (-0.6 - 0.2) / s])
        assert np.allclose(x[0], np.array([0.35, 0.0]) + shift, atol=1e-12)

    def test_mixture_noise_variance_is_bimodal(self):
        task = get_task("gaussian_mixture")
        theta = np.zeros((200_000, 2))
        x = simulate(task, theta, np.random.default_rng(1))
        assert np.allclose(x.var(axis=0), 0.5 * 1.0 + 0.5 * 0.01, atol=0.01)

    def test_rejects_theta_outside_prior(self):
        task = get_task("two_moons")
        with pytest.raises(ValueError):
            simulate(task, np.array([[1.5, 0.0]]), np.random.default_rng(0))

    def test_joint_sampling_shapes(self):
        task = get_task("gaussian_linear_uniform")
        theta, x = sample_joint(task, 7, np.random.default_rng(2))
        assert theta.shape == (7, 10) and x.shape == (7, 10)
        assert np.all(np.abs(theta) <= 1.0)


class TestLikelihood:
    def test_gaussian_linear_matches_normal_density(self):
        task = get_task("gaussian_linear")
        rng = np.random.default_rng(3)
        x_o = rng.standard_normal(10)
        theta = rng.standard_normal((5, 10)) * 0.2
        want = norm.logpdf(x_o, theta, math.sqrt(NOISE_VAR)).sum(axis=1)
        assert np.allclose(log_likelihood(task, x_o, theta), want, atol=1e-10)

    def test_two_moons_likelihood_matches_simulator_histogram(self):
        # chi-square-free check: empirical cell frequencies of simulated x
        # against cell-integrated analytic likelihood at a fixed theta
        task = get_task("two_moons")
        theta = np.array([[0.4, 0.3]])
        rng = np.random.default_rng(4)
        draws = simulate(task, np.repeat(theta, 200_000, axis=0), rng)
        nbins = 20
        lo, hi = -0.8, 0.6
        hist, _, _ = np.histogram2d(draws[:, 0], draws[:, 1], bins=nbins,
                                    range=[[lo, hi], [lo, hi]])
        hist /= hist.sum()
        fine = 8
        xs = np.linspace(lo, hi, nbins * fine, endpoint=False)
        step = xs[1] - xs[0]
        gx, gy = np.meshgrid(xs + step / 2, xs + step / 2, indexing="ij")
        pts = np.stack([gx.ravel(), gy.ravel()], axis=1)
        lik = np.array([
            log_likelihood(task, p, theta)[0] for p in pts
        ]).reshape(nbins, fine, nbins, fine)
        with np.errstate(over="ignore"):
            prob = np.exp(lik).sum(axis=(1, 3)) * step * step
        prob /= prob.sum()
        tv = 0.5 * np.abs(hist - prob).sum()
        assert tv < 0.05

    def test_two_moons_zero_outside_reachable_half_plane(self):
        task = get_task("two_moons")
        theta = np.array([[0.0, 0.0]])
        # v_x = x0 + 0 - 0.25 < 0 for x0 < 0.25: unreachable
        assert log_likelihood(task, np.array([0.0, 0.0]), theta)[0] == -np.inf
        assert np.isfinite(log_likelihood(task, np.array([0.35, 0.0]), theta)[0])


class TestReferencePosteriors:
    def test_gaussian_linear_closed_form_moments(self):
        task = get_task("gaussian_linear")
        x_o = np.linspace(-0.6, 0.6, 10)
        draws = reference_posterior_samples(task, x_o, 200_000,
                                            np.random.default_rng(5))
        assert np.allclose(draws.mean(axis=0), x_o / 2.0, atol=0.003)
        assert np.allclose(draws.var(axis=0), NOISE_VAR / 2.0, atol=0.002)

    def test_gaussian_linear_posterior_matches_bayes_rule_on_grid(self):
        # 1d slice: prior x likelihood renormalized equals the pinned normal
        x_val = 0.4
        xs = np.linspace(-1.5, 1.5, 4001)
        prior = norm.logpdf(xs, 0.0, math.sqrt(NOISE_VAR))
        lik = norm.logpdf(x_val, xs, math.sqrt(NOISE_VAR))
        post = np.exp(prior + lik)
        post /= post.sum() * (xs[1] - xs[0])
        want = norm.pdf(xs, x_val / 2.0, math.sqrt(NOISE_VAR / 2.0))
        assert np.max(np.abs(post - want)) < 1e-6

    def test_gaussian_linear_uniform_matches_truncated_normal(self):
        task = get_task("gaussian_linear_uniform")
        _, x_o = make_observation(task, 1)
        draws = reference_posterior_samples(task, x_o, 200_000,
                                            np.random.default_rng(6))
        assert np.all(np.abs(draws) <= 1.0)
        sd = math.sqrt(NOISE_VAR)
        for j in range(10):
            a, b = (-1.0 - x_o[j]) / sd, (1.0 - x_o[j]) / sd
            dist = truncnorm(a, b, loc=x_o[j], scale=sd)
            assert draws[:, j].mean() == pytest.approx(dist.mean(), abs=0.01)
            assert draws[:, j].var() == pytest.approx(dist.var(), abs=0.005)

    def test_gaussian_linear_uniform_interior_case_is_untruncated(self):
        # an observation deep inside the box leaves the normal untouched
        task = get_task("gaussian_linear_uniform")
        x_o = np.zeros(10)
        draws = reference_posterior_samples(task, x_o, 100_000,
                                            np.random.default_rng(7))
        # truncation at +-1 removes only ~0.2% of N(0, 0.1) mass per dim
        assert np.allclose(draws.mean(axis=0), 0.0, atol=0.01)
        assert np.allclose(draws.var(axis=0), NOISE_VAR, atol=0.01)

    def test_mixture_posterior_grid_oracle_moments(self):
        # flat prior: posterior over theta is the mixture density recentred
        # at x_o (within the box), so moments are known in closed form
        task = get_task("gaussian_mixture")
        x_o = np.array([0.7, -1.2])
        draws = reference_posterior_samples(task, x_o, 200_000,
                                            np.random.default_rng(8))
        assert np.allclose(draws.mean(axis=0), x_o, atol=0.01)
        assert np.allclose(draws.var(axis=0), 0.505, atol=0.01)

    def test_two_moons_posterior_is_balanced_and_bimodal(self):
        task = get_task("two_moons")
        _, x_o = make_observation(task, 9)
        draws = reference_posterior_samples(task, x_o, 20_000,
                                            np.random.default_rng(9))
        total = draws[:, 0] + draws[:, 1]
        # the posterior is invariant under (t0, t1) -> (-t1, -t0), so the
        # two crescents split the mass evenly
        frac = np.mean(total > 0)
        assert frac == pytest.approx(0.5, abs=0.02)
        # the halves are mirror images of each other
        m_pos = total[total > 0].mean()
        m_neg = -total[total < 0].mean()
        assert m_pos == pytest.approx(m_neg, abs=0.005)
        assert m_pos > 0.01

    def test_two_moons_grid_samples_lie_in_high_likelihood_region(self):
        task = get_task("two_moons")
        _, x_o = make_observation(task, 3)
        draws = reference_posterior_samples(task, x_o, 5_000,
                                            np.random.default_rng(10))
        lp = log_posterior_unnorm(task, x_o)(draws)
        # in-cell jitter can step across the hard support edge of the thin
        # crescent; only a sliver of draws may leak
        finite = np.isfinite(lp)
        assert np.mean(finite) > 0.99
        assert np.mean(lp[finite] > lp[finite].max() - 8) > 0.95

    def test_grid_resolution_is_stable_under_doubling(self):
        for name in ("gaussian_mixture", "two_moons"):
            task = get_task(name)
            _, x_o = make_observation(task, 1)
            check_grid_resolution(task, x_o, resolution=GRID_RESOLUTION)


class TestObservations:
    def test_fixed_observations_are_reproducible(self):
        for name in TASK_NAMES:
            task = get_task(name)
            a = make_observation(task, 2)
            b = make_observation(task, 2)
            assert np.array_equal(a[0], b[0]) and np.array_equal(a[1], b[1])

    def test_distinct_indices_give_distinct_observations(self):
        task = get_task("gaussian_linear")
        xs = [make_observation(task, i)[1] for i in range(1, N_OBSERVATIONS + 1)]
        assert len({tuple(np.round(x, 12)) for x in xs}) == N_OBSERVATIONS

    def test_observation_theta_respects_prior(self):
        task = get_task("two_moons")
        for i in range(1, N_OBSERVATIONS + 1):
            theta, _ = make_observation(task, i)
            assert np.all(np.abs(theta) <= 1.0)

    def test_index_out_of_range_raises(self):
        with pytest.raises(ValueError):
            make_observation(get_task("two_moons"), 0)
        with pytest.raises(ValueError):
            make_observation(get_task("two_moons"), N_OBSERVATIONS + 1)
