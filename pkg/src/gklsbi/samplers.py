"""Drawing from unnormalized targets: rejection, random-walk MH, grid oracle."""

import logging
from dataclasses import dataclass, field

import numpy as np
from scipy.special import logsumexp

log = logging.getLogger(__name__)


@dataclass
class RejectionConfig:
    bound_samples: int = 10_000
    log_margin: float = 1.0
    max_attempts: int = 10_000
    batch: int = 20_000

    def __post_init__(self):
        if self.bound_samples < 100:
            raise ValueError("need at least 100 draws to estimate the bound")


@dataclass
class MhConfig:
    n_chains: int = 16
    n_steps: int = 10_000
    burn_in: int = 5_000
    thinning: int = 1
    step_size: float = None  # None: tune toward the target acceptance band
    target_acceptance: tuple = (0.2, 0.4)

    def __post_init__(self):
        if self.burn_in >= self.n_steps:
            raise ValueError("burn-in must be shorter than the chain")
        if self.thinning < 1:
            raise ValueError("thinning must be >= 1")


def _estimate_log_bound(target_log_unnorm, proposal, k, margin, rng):
    draws = proposal.sample(rng, size=k)
    ratios = target_log_unnorm(draws) - proposal.log_pdf(draws)
    finite = ratios[np.isfinite(ratios)]
    if finite.size == 0:
        raise RuntimeError("target is -inf on every bound-estimation draw")
    return float(np.max(finite)) + margin


def rejection_sample(target_log_unnorm, proposal, n, cfg, rng):
    """Rejection sampling with an empirically estimated envelope bound.

    The log-bound is max over ``bound_samples`` proposal draws of the log
    target/proposal ratio, plus ``log_margin``. Draws exceeding the bound by
    more than the margin trigger one re-estimation; exactness holds up to
    residual bound underestimation, which is logged rather than silent.

    Returns (samples, acceptance_rate).
    """
    log_m = _estimate_log_bound(
        target_log_unnorm, proposal, cfg.bound_samples, cfg.log_margin, rng
    )
    accepted = []
    n_proposed = 0
    n_accepted = 0
    reestimated = False
    while n_accepted < n:
        draws = proposal.sample(rng, size=cfg.batch)
        log_ratio = target_log_unnorm(draws) - proposal.log_pdf(draws)
        excess = np.nanmax(log_ratio) - log_m if log_ratio.size else -np.inf
        if excess > cfg.log_margin and not reestimated:
            log.warning("rejection bound violated by %.3f; re-estimating once", excess)
            log_m = float(np.nanmax(log_ratio)) + cfg.log_margin
            reestimated = True
        keep = np.log(rng.uniform(size=cfg.batch)) < log_ratio - log_m
        accepted.append(draws[keep])
        n_proposed += cfg.batch
        n_accepted += int(np.sum(keep))
        if n_proposed >= cfg.max_attempts and \
                n_accepted / n_proposed < 1.0 / cfg.max_attempts:
            raise RuntimeError(
                f"rejection acceptance below 1/{cfg.max_attempts}; "
                "proposal too far from target"
            )
    samples = np.concatenate(accepted, axis=0)[:n]
    return samples, n_accepted / n_proposed


def _split_rhat(chains):
    """Split-R-hat per dimension; chains has shape (n_chains, n_draws, dim)."""
    c, s, d = chains.shape
    half = s // 2
    splits = np.concatenate([chains[:, :half], chains[:, half : 2 * half]], axis=0)
    m, n = splits.shape[0], half
    means = splits.mean(axis=1)
    variances = splits.var(axis=1, ddof=1)
    w = variances.mean(axis=0)
    b = n * means.var(axis=0, ddof=1)
    var_plus = (n - 1) / n * w + b / n
    return np.sqrt(var_plus / np.where(w > 0, w, np.nan))


@dataclass
class MhDiagnostics:
    acceptance_rates: np.ndarray
    r_hat: np.ndarray
    step_size: float
    warnings: list = field(default_factory=list)


def _tune_step_size(target_log_unnorm, state, dim, cfg, rng):
    """Short pre-run doubling/halving the step until acceptance lands in band."""
    step = 2.38 / np.sqrt(dim)
    lo, hi = cfg.target_acceptance
    for _ in range(20):
        cur = state.copy()
        cur_lp = target_log_unnorm(cur)
        acc = 0
        trial_steps = 50
        for _ in range(trial_steps):
            prop = cur + step * rng.standard_normal(cur.shape)
            prop_lp = target_log_unnorm(prop)
            take = np.log(rng.uniform(size=cur.shape[0])) < prop_lp - cur_lp
            cur[take] = prop[take]
            cur_lp[take] = prop_lp[take]
            acc += np.mean(take)
        rate = acc / trial_steps
        if rate < lo:
            step *= 0.6
        elif rate > hi:
            step *= 1.6
        else:
            break
    return step


def mh_sample(target_log_unnorm, prior, cfg, rng):
    """Random-walk Metropolis with Gaussian proposals, pooled over chains.

    Chains start from prior draws with finite target value. Returns
    (samples, MhDiagnostics) with post-burn-in thinned draws merged in
    chain order.
    """
    dim = prior.dim
    state = np.empty((cfg.n_chains, dim))
    filled = 0
    for _ in range(1000):
        cand = np.atleast_2d(prior.sample(rng, size=cfg.n_chains))
        lp = target_log_unnorm(cand)
        good = np.isfinite(lp)
        take = min(cfg.n_chains - filled, int(np.sum(good)))
        state[filled : filled + take] = cand[good][:take]
        filled += take
        if filled == cfg.n_chains:
            break
    else:
        raise RuntimeError("could not initialize chains at finite target values")

    step = cfg.step_size
    if step is None:
        step = _tune_step_size(target_log_unnorm, state, dim, cfg, rng)

    cur_lp = target_log_unnorm(state)
    kept = []
    accepts = np.zeros(cfg.n_chains)
    for t in range(cfg.n_steps):
        prop = state + step * rng.standard_normal(state.shape)
        prop_lp = target_log_unnorm(prop)
        take = np.log(rng.uniform(size=cfg.n_chains)) < prop_lp - cur_lp
        state[take] = prop[take]
        cur_lp[take] = prop_lp[take]
        accepts += take
        if t >= cfg.burn_in and (t - cfg.burn_in) % cfg.thinning == 0:
            kept.append(state.copy())
    chains = np.stack(kept, axis=1)  # (n_chains, n_kept, dim)
    r_hat = _split_rhat(chains)
    warnings = []
    if np.any(r_hat > 1.1):
        msg = f"split R-hat above 1.1 on dims {np.flatnonzero(r_hat > 1.1).tolist()}"
        warnings.append(msg)
        log.warning(msg)
    diag = MhDiagnostics(
        acceptance_rates=accepts / cfg.n_steps,
        r_hat=r_hat,
        step_size=step,
        warnings=warnings,
    )
    samples = chains.reshape(-1, dim)
    return samples, diag


def grid_sample_2d(log_unnorm, bounds, resolution, n, rng):
    """Draw from a 2D density by normalizing it on a grid and jittering
    categorical cell draws uniformly within each cell.

    bounds: ((x_lo, x_hi), (y_lo, y_hi)).
    """
    (x_lo, x_hi), (y_lo, y_hi) = bounds
    xs = np.linspace(x_lo, x_hi, resolution, endpoint=False)
    ys = np.linspace(y_lo, y_hi, resolution, endpoint=False)
    dx = (x_hi - x_lo) / resolution
    dy = (y_hi - y_lo) / resolution
    cx, cy = np.meshgrid(xs + dx / 2, ys + dy / 2, indexing="ij")
    pts = np.stack([cx.ravel(), cy.ravel()], axis=-1)
    logp = np.asarray(log_unnorm(pts), dtype=np.float64)
    if not np.any(np.isfinite(logp)):
        raise RuntimeError("all grid mass is zero")
    logz = logsumexp(logp)
    probs = np.exp(logp - logz)
    idx = rng.choice(probs.size, size=n, p=probs)
    ix, iy = np.unravel_index(idx, (resolution, resolution))
    out = np.empty((n, 2))
    out[:, 0] = x_lo + (ix + rng.uniform(size=n)) * dx
    out[:, 1] = y_lo + (iy + rng.uniform(size=n)) * dy
    return out


def grid_log_mass_2d(log_unnorm, bounds, resolution):
    """log of the Riemann-sum integral of exp(log_unnorm) over the bounds."""
    (x_lo, x_hi), (y_lo, y_hi) = bounds
    xs = np.linspace(x_lo, x_hi, resolution, endpoint=False)
    ys = np.linspace(y_lo, y_hi, resolution, endpoint=False)
    dx = (x_hi - x_lo) / resolution
    dy = (y_hi - y_lo) / resolution
    cx, cy = np.meshgrid(xs + dx / 2, ys + dy / 2, indexing="ij")
    pts = np.stack([cx.ravel(), cy.ravel()], axis=-1)
    logp = np.asarray(log_unnorm(pts), dtype=np.float64)
    return float(logsumexp(logp) + np.log(dx * dy))
