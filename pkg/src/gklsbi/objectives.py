"""The divergence integrand, a grid diagnostic, and the three batch losses."""

import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

log = logging.getLogger(__name__)

RHO_CLAMP = 30.0  # bound on rho inside exp() terms of the loss estimators


def phi(r):
    """Integrand -ln r + r - 1; non-negative, zero only at r = 1.

    By convention phi(0) = phi(inf) = +inf. Vectorized over arrays.
    """
    r = np.asarray(r, dtype=np.float64)
    if np.any(r < 0):
        raise ValueError("phi is defined on non-negative arguments only")
    with np.errstate(divide="ignore"):
        out = -np.log(r) + r - 1.0
    out = np.where(r == 0, np.inf, out)
    return out if out.ndim else float(out)


@dataclass(frozen=True)
class GridDensityPair:
    """Unnormalized densities p and q tabulated on a shared grid."""

    p: np.ndarray
    q: np.ndarray
    cell_volume: float

    def __post_init__(self):
        if self.cell_volume <= 0:
            raise ValueError("cell volume must be positive")
        if np.any(self.p < 0) or np.any(self.q < 0):
            raise ValueError("density values must be non-negative")
        if self.p.shape != self.q.shape:
            raise ValueError("p and q must share the grid")


def gkl_grid(pair):
    """Riemann-sum generalized KL divergence of q w.r.t. p.

    Diagnostic only; requires p > 0 wherever q > 0 on the grid.
    """
    p, q = pair.p, pair.q
    if np.any((q > 0) & (p <= 0)):
        raise ValueError("q must vanish wherever p does")
    mask = p > 0
    ratio = q[mask] / p[mask]
    return float(np.sum(phi(ratio) * p[mask]) * pair.cell_volume)


def kl_grid(pair):
    """Classical KL of the grid-normalized pair (helper for diagnostics)."""
    p, q = pair.p, pair.q
    zp = np.sum(p) * pair.cell_volume
    zq = np.sum(q) * pair.cell_volume
    mask = p > 0
    pn = p[mask] / zp
    qn = q[mask] / zq
    return float(np.sum(pn * (np.log(pn) - np.log(qn))) * pair.cell_volume)


@dataclass
class Batch:
    """Paired joint draws; x_contrast holds the marginal-pairing x' array."""

    theta: np.ndarray
    x: np.ndarray
    x_contrast: np.ndarray = None

    def __post_init__(self):
        if self.theta.shape[0] != self.x.shape[0] or self.theta.shape[0] < 1:
            raise ValueError("theta and x need the same leading dimension >= 1")

    @property
    def size(self):
        return self.theta.shape[0]


def random_derangement(m, rng):
    """Permutation of range(m) with no fixed point, by rejection."""
    if m < 2:
        raise ValueError("a derangement needs at least two elements")
    while True:
        perm = rng.permutation(m)
        if not np.any(perm == np.arange(m)):
            return perm


def with_permuted_contrast(batch, rng):
    """Pair each theta_m with an x' drawn from the batch marginal by a
    derangement, so no joint pair leaks into the contrastive term."""
    perm = random_derangement(batch.size, rng)
    return Batch(batch.theta, batch.x, x_contrast=batch.x[perm])


def _clamped_exp_rho(surrogate, theta, x):
    rho = surrogate.ratio.forward(surrogate.params, theta, x)
    n_sat = int(np.sum(rho.data > RHO_CLAMP))
    if n_sat:
        log.warning("clamping %d saturated rho values above %.0f", n_sat, RHO_CLAMP)
    return ad.exp(ad.clip_max(rho, RHO_CLAMP))


def loss_flow(batch, surrogate):
    """Mean negative log-density of the normalized base on joint pairs."""
    lp = surrogate.flow.log_prob(surrogate.params, batch.theta, batch.x)
    if not np.all(np.isfinite(lp.data)):
        raise FloatingPointError("non-finite flow log-density in loss")
    return (-lp).mean()


def loss_ratio(batch, surrogate, rng=None, n_contrastive=1):
    """Mean of -rho(theta_m, x_m) + exp(rho(theta_m, x'_m)).

    x'_m come from ``batch.x_contrast``; if absent, they are generated by
    averaging ``n_contrastive`` derangement pairings of the batch.
    """
    rho_joint = surrogate.ratio.forward(surrogate.params, batch.theta, batch.x)
    if batch.x_contrast is not None:
        contrast = _clamped_exp_rho(surrogate, batch.theta, batch.x_contrast).mean()
    else:
        if rng is None:
            raise ValueError("need either x_contrast or an rng to permute with")
        terms = []
        for _ in range(n_contrastive):
            xc = batch.x[random_derangement(batch.size, rng)]
            terms.append(_clamped_exp_rho(surrogate, batch.theta, xc).mean())
        contrast = terms[0]
        for t in terms[1:]:
            contrast = contrast + t
        contrast = contrast * (1.0 / n_contrastive)
    return (-rho_joint).mean() + contrast


def loss_hybrid(batch, surrogate, rng, n_contrastive=1):
    """Flow loss plus the ratio correction with base-sampled contrast.

    theta~_m are drawn from the base without the reparameterization trick,
    so the exp term contributes no gradient to the flow parameters.
    """
    lp = surrogate.flow.log_prob(surrogate.params, batch.theta, batch.x)
    if not np.all(np.isfinite(lp.data)):
        raise FloatingPointError("non-finite flow log-density in loss")
    rho_joint = surrogate.ratio.forward(surrogate.params, batch.theta, batch.x)
    terms = []
    for _ in range(n_contrastive):
        theta_tilde = surrogate.flow.sample(
            surrogate.params, batch.x, rng, n=batch.size, stop_gradient=True
        )
        terms.append(_clamped_exp_rho(surrogate, theta_tilde, batch.x).mean())
    contrast = terms[0]
    for t in terms[1:]:
        contrast = contrast + t
    contrast = contrast * (1.0 / n_contrastive)
    return (-lp).mean() + (-rho_joint).mean() + contrast
