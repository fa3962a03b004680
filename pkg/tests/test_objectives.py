import math

import numpy as np
import pytest

from gklsbi import autodiff as ad
from gklsbi.distributions import UniformBox
from gklsbi.nn import ParamStore
from gklsbi.objectives import (
    RHO_CLAMP,
    Batch,
    GridDensityPair,
    gkl_grid,
    kl_grid,
    loss_flow,
    loss_hybrid,
    loss_ratio,
    phi,
    random_derangement,
    with_permuted_contrast,
)
from gklsbi.surrogates import FlowSurrogate, RatioNet, Surrogate

XS = np.linspace(-12.0, 12.0, 6000)
DX = XS[1] - XS[0]


def gauss(mean, std, scale=1.0):
    return scale * np.exp(-0.5 * ((XS - mean) / std) ** 2) / (std * math.sqrt(2 * math.pi))


class TestPhi:
    def test_pinned_values(self):
        assert phi(1.0) == 0.0
        assert phi(2.0) == pytest.approx(1.0 - math.log(2.0), abs=1e-15)
        assert phi(math.e) == pytest.approx(math.e - 2.0, abs=1e-15)
        assert phi(0.0) == math.inf

    def test_non_negative_with_unique_root(self):
        r = np.linspace(1e-3, 10, 5000)
        vals = phi(r)
        assert np.all(vals >= 0)
        assert np.all(vals[np.abs(r - 1) > 1e-2] > 0)

    def test_rejects_negative_arguments(self):
        with pytest.raises(ValueError):
            phi(-0.1)


class TestGridDivergence:
    def test_zero_iff_equal(self):
        p = gauss(0, 1)
        assert gkl_grid(GridDensityPair(p, p.copy(), DX)) == pytest.approx(0.0, abs=1e-12)

    def test_doubling_a_normalized_density_costs_one_minus_log_two(self):
        p = gauss(0, 1)
        got = gkl_grid(GridDensityPair(p, 2 * p, DX))
        assert got == pytest.approx(1.0 - math.log(2.0), abs=1e-6)

    def test_recovers_kl_for_normalized_pair(self):
        # unit-gap unit-variance Gaussians have KL exactly 1/2
        pair = GridDensityPair(gauss(0, 1), gauss(1, 1), DX)
        assert gkl_grid(pair) == pytest.approx(0.5, abs=1e-4)
        assert kl_grid(pair) == pytest.approx(0.5, abs=1e-4)

    def test_non_negative_over_random_pairs(self):
        rng = np.random.default_rng(0)
        for _ in range(50):
            p = gauss(rng.uniform(-2, 2), rng.uniform(0.5, 2), rng.uniform(0.2, 5))
            q = gauss(rng.uniform(-2, 2), rng.uniform(0.5, 2), rng.uniform(0.2, 5))
            assert gkl_grid(GridDensityPair(p, q, DX)) >= -1e-10

    def test_dominates_mass_weighted_kl_of_normalized_pair(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            zp = rng.uniform(0.2, 5)
            p = gauss(rng.uniform(-2, 2), rng.uniform(0.5, 2), zp)
            q = gauss(rng.uniform(-2, 2), rng.uniform(0.5, 2), rng.uniform(0.2, 5))
            pair = GridDensityPair(p, q, DX)
            assert zp * kl_grid(pair) <= gkl_grid(pair) + 1e-9

    def test_scales_linearly_in_joint_rescaling(self):
        p = gauss(0.3, 1.2, 2.0)
        q = gauss(-0.5, 0.8, 0.7)
        base = gkl_grid(GridDensityPair(p, q, DX))
        scaled = gkl_grid(GridDensityPair(3 * p, 3 * q, DX))
        assert scaled == pytest.approx(3 * base, rel=1e-12)

    def test_rejects_support_violation(self):
        p = np.array([1.0, 0.0])
        q = np.array([0.5, 0.5])
        with pytest.raises(ValueError):
            gkl_grid(GridDensityPair(p, q, 1.0))


class TestDerangement:
    def test_no_fixed_points_and_valid_permutation(self):
        rng = np.random.default_rng(2)
        for m in (2, 3, 5, 50):
            perm = random_derangement(m, rng)
            assert np.array_equal(np.sort(perm), np.arange(m))
            assert not np.any(perm == np.arange(m))

    def test_uniform_over_off_diagonal_positions(self):
        # P(sigma(i) = j) must equal 1/(m-1) for every j != i
        m = 4
        rng = np.random.default_rng(3)
        counts = np.zeros((m, m))
        n = 20_000
        for _ in range(n):
            counts[np.arange(m), random_derangement(m, rng)] += 1
        freq = counts / n
        off = freq[~np.eye(m, dtype=bool)]
        assert np.all(np.abs(off - 1 / (m - 1)) < 0.01)

    def test_rejects_singleton(self):
        with pytest.raises(ValueError):
            random_derangement(1, np.random.default_rng(0))


def make_surrogate(kind, seed=0, perturb=0.0):
    params = ParamStore()
    rng = np.random.default_rng(seed)
    prior = UniformBox([-3.0, -3.0], [3.0, 3.0])
    flow = ratio = None
    if kind in ("flow", "hybrid"):
        flow = FlowSurrogate(params, 2, 3, base="maf", embed_width=16,
                             flow_hidden=32, n_transforms=3, rng=rng)
    if kind in ("ratio", "hybrid"):
        ratio = RatioNet(params, 2, 3, hidden=(32,), embed_width=16,
                         use_embedding=kind == "hybrid", rng=rng)
    s = Surrogate(kind, params, flow=flow, ratio=ratio,
                  prior=prior if kind == "ratio" else None)
    if perturb:
        prng = np.random.default_rng(seed + 1)
        for p in params.values():
            p.data += prng.standard_normal(p.data.shape) * perturb
    return s


def make_batch(m=16, seed=0):
    rng = np.random.default_rng(seed)
    return Batch(theta=rng.standard_normal((m, 2)), x=rng.standard_normal((m, 3)))


class TestLosses:
    def test_flow_loss_is_mean_negative_log_density(self):
        s = make_surrogate("flow", seed=4)
        batch = make_batch(seed=5)
        want = -np.mean(s.flow.log_prob(s.params, batch.theta, batch.x).data)
        assert loss_flow(batch, s).item() == pytest.approx(want, abs=1e-14)

    def test_ratio_loss_matches_hand_computation(self):
        s = make_surrogate("ratio", seed=6, perturb=0.05)
        batch = with_permuted_contrast(make_batch(seed=7), np.random.default_rng(8))
        rho_j = s.ratio.forward(s.params, batch.theta, batch.x).data
        rho_c = s.ratio.forward(s.params, batch.theta, batch.x_contrast).data
        want = np.mean(-rho_j) + np.mean(np.exp(np.minimum(rho_c, RHO_CLAMP)))
        assert loss_ratio(batch, s).item() == pytest.approx(want, abs=1e-12)

    def test_ratio_loss_is_one_at_zero_initialization(self):
        s = make_surrogate("ratio", seed=9)
        batch = make_batch(seed=10)
        got = loss_ratio(batch, s, rng=np.random.default_rng(11))
        assert got.item() == pytest.approx(1.0, abs=1e-14)

    def test_hybrid_loss_is_flow_loss_plus_one_at_zero_ratio(self):
        s = make_surrogate("hybrid", seed=12)
        batch = make_batch(seed=13)
        flow_val = loss_flow(batch, s).item()
        hybrid_val = loss_hybrid(batch, s, np.random.default_rng(14)).item()
        assert hybrid_val == pytest.approx(flow_val + 1.0, abs=1e-12)

    def test_hybrid_flow_gradient_unaffected_by_zero_ratio_term(self):
        s = make_surrogate("hybrid", seed=15)
        batch = make_batch(seed=16)
        g_flow = ad.gradient(loss_flow(batch, s), s.params)
        g_hyb = ad.gradient(loss_hybrid(batch, s, np.random.default_rng(17)),
                            s.params)
        for name in s.params:
            if name.startswith("flow."):
                assert np.array_equal(g_flow[name], g_hyb[name]), name

    def test_ratio_loss_gradient_matches_finite_differences(self):
        s = make_surrogate("ratio", seed=18, perturb=0.05)
        batch = with_permuted_contrast(make_batch(m=8, seed=19),
                                       np.random.default_rng(20))
        grads = ad.gradient(loss_ratio(batch, s), s.params)
        name = "ratio.proj.w"
        w = s.params[name].data
        h = 1e-6
        rng_idx = np.random.default_rng(21)
        for _ in range(10):
            i = rng_idx.integers(w.shape[0])
            j = rng_idx.integers(w.shape[1])
            orig = w[i, j]
            w[i, j] = orig + h
            fp = loss_ratio(batch, s).item()
            w[i, j] = orig - h
            fm = loss_ratio(batch, s).item()
            w[i, j] = orig
            want = (fp - fm) / (2 * h)
            assert grads[name][i, j] == pytest.approx(want, rel=1e-4, abs=1e-9)

    def test_contrast_term_unbiased_over_pairings(self):
        # averaging over derangements must converge to the mean of
        # exp(rho) over all ordered off-diagonal (theta_i, x_j) pairs
        s = make_surrogate("ratio", seed=22, perturb=0.1)
        batch = make_batch(m=6, seed=23)
        m = batch.size
        rho = np.array([
            s.ratio.forward(s.params, batch.theta, batch.x[j][None, :]).data
            for j in range(m)
        ]).T  # rho[i, j] = rho(theta_i, x_j)
        joint_mean = np.mean(np.diag(rho))
        off = np.exp(rho[~np.eye(m, dtype=bool)])
        want = -joint_mean + off.mean()
        rng = np.random.default_rng(24)
        vals = [loss_ratio(batch, s, rng=rng).item() for _ in range(4000)]
        assert np.mean(vals) == pytest.approx(want, abs=3 * np.std(vals) / 63 + 1e-3)

    def test_saturated_rho_is_clamped(self):
        s = make_surrogate("ratio", seed=25)
        s.params["ratio.body.out.b"].data[...] = RHO_CLAMP + 10.0
        batch = make_batch(seed=26)
        got = loss_ratio(batch, s, rng=np.random.default_rng(27)).item()
        assert got == pytest.approx(-(RHO_CLAMP + 10.0) + math.exp(RHO_CLAMP))

    def test_flow_loss_rejects_non_finite_density(self):
        s = make_surrogate("flow", seed=28)
        batch = make_batch(seed=29)
        batch.theta[0, 0] = np.nan
        with pytest.raises(FloatingPointError):
            loss_flow(batch, s)


class TestBatch:
    def test_rejects_mismatched_leading_dims(self):
        with pytest.raises(ValueError):
            Batch(theta=np.zeros((3, 2)), x=np.zeros((4, 3)))

    def test_permuted_contrast_never_reuses_the_joint_pairing(self):
        batch = make_batch(m=8, seed=30)
        out = with_permuted_contrast(batch, np.random.default_rng(31))
        assert not np.any(np.all(out.x_contrast == batch.x, axis=1))
