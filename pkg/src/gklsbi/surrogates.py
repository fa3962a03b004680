"""The three conditional posterior surrogates.

``flow``   : a normalized conditional density b(theta | x).
``ratio``  : exp(rho(theta, x)) times the prior density.
``hybrid`` : exp(rho(theta, x)) times the flow base.

Flow bases are either a conditional Gaussian (networks emit a mean and a
Cholesky factor) or a stack of masked affine autoregressive transforms.
When the prior is a uniform box, a fixed elementwise sigmoid bijection maps
the flow output onto the box.
"""

import math

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .distributions import LOG_2PI, UniformBox
from .nn import MlpConfig, ParamStore, init_mlp, mlp_forward

ALPHA_CAP = 7.0  # smooth clamp on autoregressive log-scales
CHOL_DIAG_FLOOR = 1e-4


def _as_batch(arr, dim):
    arr = np.asarray(arr, dtype=np.float64)
    if arr.ndim == 1:
        arr = arr[None, :]
    if arr.shape[-1] != dim:
        raise ValueError(f"expected last dim {dim}, got {arr.shape[-1]}")
    return arr


def _broadcast_x(x, m):
    if x.shape[0] == m:
        return x
    if x.shape[0] == 1:
        return np.broadcast_to(x, (m, x.shape[1])).copy()
    raise ValueError("batch sizes of theta and x do not match")


class EmbeddingNet:
    """Residual MLP with layer norm mapping x to a fixed-width feature vector."""

    def __init__(self, params, prefix, in_dim, width=64, n_blocks=1,
                 activation="gelu", rng=None):
        self.prefix = prefix
        self.in_dim = in_dim
        self.width = width
        self.cfg = MlpConfig(
            in_dim=width, hidden=[width] * n_blocks, out_dim=width,
            activation=activation, residual=True, layer_norm=True,
        )
        if rng is not None:
            bound = 1.0 / math.sqrt(in_dim)
            params.add(f"{prefix}.proj.w", rng.uniform(-bound, bound, (in_dim, width)))
            params.add(f"{prefix}.proj.b", np.zeros(width))
            init_mlp(params, f"{prefix}.body", self.cfg, rng)

    def forward(self, params, x_t):
        h = x_t @ params[f"{self.prefix}.proj.w"] + params[f"{self.prefix}.proj.b"]
        return mlp_forward(params, f"{self.prefix}.body", self.cfg, h)


class BoxBijection:
    """Fixed elementwise map z -> lower + width * sigmoid(z) onto a box."""

    def __init__(self, lower, upper):
        self.lower = np.asarray(lower, dtype=np.float64)
        self.upper = np.asarray(upper, dtype=np.float64)
        self.width = self.upper - self.lower

    def to_box(self, z_t):
        return Tensor(self.lower) + Tensor(self.width) * ad.sigmoid(z_t)

    def from_box(self, theta):
        """numpy inverse; theta strictly inside the box."""
        s = (theta - self.lower) / self.width
        s = np.clip(s, 1e-12, 1.0 - 1e-12)
        return np.log(s) - np.log1p(-s)

    def log_det_from_box(self, theta):
        """log |dz/dtheta| summed over dims (numpy; the map has no params)."""
        s = (theta - self.lower) / self.width
        s = np.clip(s, 1e-12, 1.0 - 1e-12)
        return -np.sum(np.log(self.width) + np.log(s) + np.log1p(-s), axis=-1)


def _made_degrees(theta_dim, hidden, order):
    """Input/hidden/output degree vectors for one masked transform."""
    in_deg = np.empty(theta_dim, dtype=int)
    in_deg[order] = np.arange(1, theta_dim + 1)
    if theta_dim > 1:
        hid_deg = 1 + (np.arange(hidden) % (theta_dim - 1))
    else:
        hid_deg = np.zeros(hidden, dtype=int)
    out_deg = np.repeat(in_deg, 2)  # (mu_i, alpha_i) per dim
    return in_deg, hid_deg, out_deg


class MaskedAffineTransform:
    """One MADE-parameterized affine autoregressive layer with context input.

    Density direction: u = (theta - mu) * exp(-alpha) where (mu, alpha) for
    dim i depend only on theta strictly earlier in this layer's ordering,
    plus the context features (degree zero, visible everywhere).
    """

    def __init__(self, params, prefix, theta_dim, ctx_dim, hidden, order, rng=None):
        self.prefix = prefix
        self.theta_dim = theta_dim
        self.ctx_dim = ctx_dim
        self.order = np.asarray(order, dtype=int)
        in_deg, hid_deg, out_deg = _made_degrees(theta_dim, hidden, self.order)
        full_in_deg = np.concatenate([in_deg, np.zeros(ctx_dim, dtype=int)])
        self.mask1 = (full_in_deg[:, None] <= hid_deg[None, :]).astype(np.float64)
        self.mask2 = (hid_deg[:, None] < out_deg[None, :]).astype(np.float64)
        self.out_deg = out_deg
        if rng is not None:
            n_in = theta_dim + ctx_dim
            b1 = 1.0 / math.sqrt(n_in)
            params.add(f"{prefix}.w1", rng.uniform(-b1, b1, (n_in, hidden)))
            params.add(f"{prefix}.b1", np.zeros(hidden))
            b2 = 1.0 / math.sqrt(hidden)
            params.add(f"{prefix}.w2", rng.uniform(-b2, b2, (hidden, 2 * theta_dim)))
            params.add(f"{prefix}.b2", np.zeros(2 * theta_dim))

    def _net(self, params, theta_t, ctx_t):
        inp = ad.concat([theta_t, ctx_t], axis=-1) if self.ctx_dim else theta_t
        w1 = params[f"{self.prefix}.w1"] * Tensor(self.mask1)
        h = ad.relu(inp @ w1 + params[f"{self.prefix}.b1"])
        w2 = params[f"{self.prefix}.w2"] * Tensor(self.mask2)
        out = h @ w2 + params[f"{self.prefix}.b2"]
        mu = out[:, 0::2]
        raw = out[:, 1::2]
        alpha = ad.tanh(raw * (1.0 / ALPHA_CAP)) * ALPHA_CAP
        return mu, alpha

    def forward(self, params, theta_t, ctx_t):
        """theta -> (u, log |du/dtheta|) in one vectorized pass."""
        mu, alpha = self._net(params, theta_t, ctx_t)
        u = (theta_t - mu) * ad.exp(-alpha)
        logdet = (-alpha).sum(axis=-1)
        return u, logdet

    def inverse(self, params, u_t, ctx_t):
        """u -> theta, filled sequentially along this layer's ordering."""
        m = u_t.shape[0]
        cols = [Tensor(np.zeros((m, 1))) for _ in range(self.theta_dim)]
        for i in self.order:
            theta_t = ad.concat(cols, axis=-1)
            mu, alpha = self._net(params, theta_t, ctx_t)
            cols[i] = mu[:, i : i + 1] + u_t[:, i : i + 1] * ad.exp(alpha[:, i : i + 1])
        return ad.concat(cols, axis=-1)


class MafBase:
    """Stack of masked affine transforms over a standard-normal base."""

    def __init__(self, params, prefix, theta_dim, ctx_dim, n_transforms=5,
                 hidden=64, rng=None):
        self.prefix = prefix
        self.theta_dim = theta_dim
        natural = np.arange(theta_dim)
        self.transforms = []
        for k in range(n_transforms):
            order = natural if k % 2 == 0 else natural[::-1]
            self.transforms.append(
                MaskedAffineTransform(
                    params, f"{prefix}.t{k}", theta_dim, ctx_dim, hidden, order, rng
                )
            )

    def log_prob(self, params, theta_t, ctx_t):
        u = theta_t
        total = Tensor(np.zeros(theta_t.shape[0]))
        for t in self.transforms:
            u, logdet = t.forward(params, u, ctx_t)
            total = total + logdet
        base = (-0.5) * (u * u).sum(axis=-1) - 0.5 * self.theta_dim * LOG_2PI
        return base + total

    def sample_base_space(self, params, ctx_t, eps):
        u = Tensor(eps)
        for t in reversed(self.transforms):
            u = t.inverse(params, u, ctx_t)
        return u


class CondGaussianBase:
    """Networks emit mean and Cholesky factor of a full covariance."""

    def __init__(self, params, prefix, theta_dim, ctx_dim, hidden=(64,), rng=None):
        self.prefix = prefix
        self.theta_dim = theta_dim
        n_out = theta_dim + theta_dim * (theta_dim + 1) // 2
        self.cfg = MlpConfig(in_dim=ctx_dim, hidden=list(hidden), out_dim=n_out,
                             activation="relu")
        self.tril_rows, self.tril_cols = np.tril_indices(theta_dim)
        if rng is not None:
            init_mlp(params, f"{prefix}.net", self.cfg, rng)

    def _mean_chol(self, params, ctx_t):
        out = mlp_forward(params, f"{self.prefix}.net", self.cfg, ctx_t)
        d = self.theta_dim
        mu = out[:, :d]
        packed = out[:, d:]
        diag_idx = np.flatnonzero(self.tril_rows == self.tril_cols)
        return mu, packed, diag_idx

    def log_prob(self, params, theta_t, ctx_t):
        d = self.theta_dim
        mu, packed, diag_idx = self._mean_chol(params, ctx_t)
        diag = ad.softplus(packed[:, diag_idx]) + CHOL_DIAG_FLOOR
        # forward substitution: solve L z = theta - mu, row by row
        diff = theta_t - mu
        z_cols = []
        for i in range(d):
            acc = diff[:, i : i + 1]
            for j in range(i):
                k = _packed_index(i, j)
                acc = acc - packed[:, k : k + 1] * z_cols[j]
            z_cols.append(acc / diag[:, i : i + 1])
        z = ad.concat(z_cols, axis=-1)
        logdet = ad.log(diag).sum(axis=-1)
        return (-0.5) * (z * z).sum(axis=-1) - logdet - 0.5 * d * LOG_2PI

    def sample_base_space(self, params, ctx_t, eps):
        d = self.theta_dim
        mu, packed, diag_idx = self._mean_chol(params, ctx_t)
        diag = ad.softplus(packed[:, diag_idx]) + CHOL_DIAG_FLOOR
        eps_t = Tensor(eps)
        cols = []
        for i in range(d):
            acc = mu[:, i : i + 1] + diag[:, i : i + 1] * eps_t[:, i : i + 1]
            for j in range(i):
                k = _packed_index(i, j)
                acc = acc + packed[:, k : k + 1] * eps_t[:, j : j + 1]
            cols.append(acc)
        return ad.concat(cols, axis=-1)


def _packed_index(i, j):
    """Index of entry (i, j), j <= i, in row-major lower-triangular packing."""
    return i * (i + 1) // 2 + j


class FlowSurrogate:
    """Normalized conditional density with optional support bijection."""

    def __init__(self, params, theta_dim, x_dim, base="maf", prior_box=None,
                 embed_width=64, flow_hidden=64, n_transforms=5, rng=None,
                 prefix="flow"):
        self.theta_dim = theta_dim
        self.x_dim = x_dim
        self.base_kind = base
        self.prefix = prefix
        self.embed = EmbeddingNet(params, f"{prefix}.embed", x_dim,
                                  width=embed_width, rng=rng)
        ctx_dim = self.embed.width
        if base == "maf":
            self.base = MafBase(params, f"{prefix}.maf", theta_dim, ctx_dim,
                                n_transforms=n_transforms, hidden=flow_hidden,
                                rng=rng)
        elif base == "cond_gaussian":
            self.base = CondGaussianBase(params, f"{prefix}.cg", theta_dim,
                                         ctx_dim, hidden=(flow_hidden,), rng=rng)
        else:
            raise ValueError(f"unknown flow base {base!r}")
        self.bijection = (
            BoxBijection(prior_box.lower, prior_box.upper)
            if prior_box is not None else None
        )

    def _ctx(self, params, x):
        return self.embed.forward(params, Tensor(x))

    def log_prob(self, params, theta, x):
        theta = _as_batch(theta, self.theta_dim)
        x = _broadcast_x(_as_batch(x, self.x_dim), theta.shape[0])
        ctx = self._ctx(params, x)
        extra = 0.0
        if self.bijection is not None:
            z = self.bijection.from_box(theta)
            extra = self.bijection.log_det_from_box(theta)
            theta = z
        lp = self.base.log_prob(params, Tensor(theta), ctx)
        return lp + Tensor(extra) if self.bijection is not None else lp

    def sample(self, params, x, rng, n=None, stop_gradient=True):
        """Draw eps ~ N(0, I) and push it through the conditional transform.

        With stop_gradient the result is a plain array: no adjoint can flow
        into the flow parameters through the sampling path.
        """
        m = n if n is not None else 1
        x = _broadcast_x(_as_batch(x, self.x_dim), m)
        eps = rng.standard_normal((m, self.theta_dim))
        ctx = self._ctx(params, x)
        out = self.base.sample_base_space(params, ctx, eps)
        if self.bijection is not None:
            out = self.bijection.to_box(out)
        if stop_gradient:
            return out.data.copy() if n is not None else out.data[0].copy()
        return out


class RatioNet:
    """Residual MLP scoring (theta, embedded x) pairs with a scalar."""

    def __init__(self, params, theta_dim, x_dim, hidden=(128,), embed_width=64,
                 use_embedding=True, activation="gelu", rng=None, prefix="ratio"):
        self.theta_dim = theta_dim
        self.x_dim = x_dim
        self.prefix = prefix
        self.embed = (
            EmbeddingNet(params, f"{prefix}.embed", x_dim, width=embed_width,
                         rng=rng)
            if use_embedding else None
        )
        feat_dim = theta_dim + (self.embed.width if self.embed else x_dim)
        width = hidden[0]
        if any(h != width for h in hidden):
            raise ValueError("residual ratio net requires equal hidden widths")
        self.cfg = MlpConfig(in_dim=width, hidden=list(hidden), out_dim=1,
                             activation=activation, residual=True,
                             layer_norm=True, zero_init_last=True)
        if rng is not None:
            bound = 1.0 / math.sqrt(feat_dim)
            params.add(f"{prefix}.proj.w",
                       rng.uniform(-bound, bound, (feat_dim, width)))
            params.add(f"{prefix}.proj.b", np.zeros(width))
            init_mlp(params, f"{prefix}.body", self.cfg, rng)

    def forward(self, params, theta, x):
        theta_t = theta if isinstance(theta, Tensor) else Tensor(_as_batch(theta, self.theta_dim))
        m = theta_t.shape[0]
        x = _broadcast_x(_as_batch(x, self.x_dim), m)
        feat = self.embed.forward(params, Tensor(x)) if self.embed else Tensor(x)
        inp = ad.concat([theta_t, feat], axis=-1)
        h = inp @ params[f"{self.prefix}.proj.w"] + params[f"{self.prefix}.proj.b"]
        out = mlp_forward(params, f"{self.prefix}.body", self.cfg, h)
        return out[:, 0]


class Surrogate:
    """Tagged union over the three parameterizations.

    ``params`` holds every trainable tensor; flow parameters live under the
    ``flow.`` prefix and ratio parameters under ``ratio.``, so the two
    groups can be updated or frozen independently.
    """

    def __init__(self, kind, params, flow=None, ratio=None, prior=None):
        if kind not in ("flow", "ratio", "hybrid"):
            raise ValueError(f"unknown surrogate kind {kind!r}")
        if kind in ("flow", "hybrid") and flow is None:
            raise ValueError(f"{kind} surrogate requires a flow base")
        if kind in ("ratio", "hybrid") and ratio is None:
            raise ValueError(f"{kind} surrogate requires a ratio net")
        if kind == "ratio" and prior is None:
            raise ValueError("ratio surrogate requires the prior")
        self.kind = kind
        self.params = params
        self.flow = flow
        self.ratio = ratio
        self.prior = prior

    @property
    def theta_dim(self):
        return self.flow.theta_dim if self.flow else self.ratio.theta_dim

    @property
    def x_dim(self):
        return self.flow.x_dim if self.flow else self.ratio.x_dim

    def log_unnorm_t(self, theta, x):
        """Differentiable unnormalized log-density as a graph node."""
        if self.kind == "flow":
            return self.flow.log_prob(self.params, theta, x)
        if self.kind == "ratio":
            rho = self.ratio.forward(self.params, theta, x)
            return rho + Tensor(self.prior.log_pdf(np.atleast_2d(theta)))
        rho = self.ratio.forward(self.params, theta, x)
        return rho + self.flow.log_prob(self.params, theta, x)

    def log_unnorm(self, theta, x):
        """Unnormalized log-density as a plain array (batched)."""
        theta = _as_batch(theta, self.theta_dim)
        if self.kind in ("flow", "hybrid") and self.flow.bijection is not None:
            b = self.flow.bijection
            inside = np.all((theta > b.lower) & (theta < b.upper), axis=-1)
            out = np.full(theta.shape[0], -np.inf)
            if np.any(inside):
                out[inside] = self.log_unnorm_t(theta[inside], x).data
            return out
        if self.kind == "ratio":
            prior_lp = self.prior.log_pdf(theta)
            out = np.full(theta.shape[0], -np.inf)
            ok = np.isfinite(prior_lp)
            if np.any(ok):
                rho = self.ratio.forward(self.params, theta[ok], x).data
                out[ok] = rho + prior_lp[ok]
            return out
        return self.log_unnorm_t(theta, x).data

    def estimate_partition(self, x, n_samples, rng):
        """Monte Carlo estimate of the normalizer: mean of exp(rho) over
        draws from the proposal (prior for ratio, flow base for hybrid)."""
        if self.kind == "flow":
            raise ValueError("flow surrogates are exactly normalized")
        if n_samples < 1:
            raise ValueError("n_samples must be at least 1")
        if self.kind == "ratio":
            theta = self.prior.sample(rng, size=n_samples)
        else:
            theta = self.flow.sample(self.params, x, rng, n=n_samples,
                                     stop_gradient=True)
        rho = self.ratio.forward(self.params, theta, x).data
        return float(np.mean(np.exp(rho)))
