"""Classifier two-sample test between two sets of posterior samples."""

import logging
from dataclasses import dataclass

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor
from .nn import MlpConfig, ParamStore, init_mlp, mlp_forward
from .optim import AdamW, EarlyStopping

log = logging.getLogger(__name__)


@dataclass
class C2stConfig:
    folds: int = 5
    hidden_per_dim: int = 10  # two hidden layers of width 10 * dim
    max_epochs: int = 300
    batch_size: int = 4096
    lr: float = 1e-3
    weight_decay: float = 1e-4
    patience: int = 20
    min_delta: float = 1e-4
    val_fraction: float = 0.15
    standardize: bool = True

    def __post_init__(self):
        if self.folds < 2:
            raise ValueError("need at least 2 folds")


def _stratified_folds(labels, k, rng):
    """Index arrays of k folds with balanced label composition."""
    folds = [[] for _ in range(k)]
    for lab in (0, 1):
        idx = np.flatnonzero(labels == lab)
        rng.shuffle(idx)
        for f, chunk in enumerate(np.array_split(idx, k)):
            folds[f].append(chunk)
    return [np.concatenate(parts) for parts in folds]


def _bce_loss(logits, y):
    # softplus(z) - y*z is binary cross entropy with logits
    return (ad.softplus(logits) - Tensor(y) * logits).mean()


def _train_classifier(xs, ys, cfg, rng):
    dim = xs.shape[1]
    width = cfg.hidden_per_dim * dim
    mcfg = MlpConfig(in_dim=dim, hidden=[width, width], out_dim=1,
                     activation="relu")
    params = ParamStore()
    init_mlp(params, "clf", mcfg, rng)
    opt = AdamW(lr=cfg.lr, weight_decay=cfg.weight_decay, amsgrad=True)
    stopper = EarlyStopping(min_delta=cfg.min_delta, patience=cfg.patience)

    n_val = max(1, int(round(cfg.val_fraction * xs.shape[0])))
    perm = rng.permutation(xs.shape[0])
    val_idx, tr_idx = perm[:n_val], perm[n_val:]
    x_tr, y_tr = xs[tr_idx], ys[tr_idx]
    x_val, y_val = xs[val_idx], ys[val_idx]

    best = params.copy_values()
    best_loss = np.inf
    bs = min(cfg.batch_size, x_tr.shape[0])
    for _ in range(cfg.max_epochs):
        order = rng.permutation(x_tr.shape[0])
        for start in range(0, x_tr.shape[0], bs):
            sl = order[start : start + bs]
            logits = mlp_forward(params, "clf", mcfg, Tensor(x_tr[sl]))[:, 0]
            loss = _bce_loss(logits, y_tr[sl])
            grads = ad.gradient(loss, params)
            opt.step(params, grads)
        val_logits = mlp_forward(params, "clf", mcfg, Tensor(x_val))[:, 0]
        val_loss = _bce_loss(val_logits, y_val).item()
        if val_loss < best_loss:
            best_loss = val_loss
            best = params.copy_values()
        if not stopper.update(val_loss):
            break
    params.load_values(best)
    return params, mcfg


def c2st(samples_p, samples_q, cfg=None, rng=None):
    """Five-fold cross-validated classifier accuracy separating two sample
    sets; 0.5 means the classifier cannot tell them apart."""
    cfg = cfg or C2stConfig()
    rng = rng if rng is not None else np.random.default_rng(0)
    samples_p = np.asarray(samples_p, dtype=np.float64)
    samples_q = np.asarray(samples_q, dtype=np.float64)
    if samples_p.shape[1] != samples_q.shape[1]:
        raise ValueError("sample sets must share their dimension")
    if min(len(samples_p), len(samples_q)) < 500:
        raise ValueError("need at least 500 samples per set")
    if min(len(samples_p), len(samples_q)) < 2000:
        log.warning("fewer than 2000 samples per set; accuracy will be noisy")

    xs = np.concatenate([samples_p, samples_q], axis=0)
    ys = np.concatenate([np.zeros(len(samples_p)), np.ones(len(samples_q))])
    if cfg.standardize:
        mu = xs.mean(axis=0)
        sd = xs.std(axis=0)
        dead = sd == 0
        if np.any(dead):
            log.warning("dropping %d zero-variance feature(s)", int(np.sum(dead)))
            xs = xs[:, ~dead]
            sd = sd[~dead]
            mu = mu[~dead]
            if xs.shape[1] == 0:
                raise ValueError("all features are degenerate")
        xs = (xs - mu) / sd

    folds = _stratified_folds(ys, cfg.folds, rng)
    accuracies = []
    for f in range(cfg.folds):
        test_idx = folds[f]
        train_idx = np.concatenate([folds[g] for g in range(cfg.folds) if g != f])
        params, mcfg = _train_classifier(xs[train_idx], ys[train_idx], cfg, rng)
        logits = mlp_forward(params, "clf", mcfg, Tensor(xs[test_idx]))[:, 0]
        pred = (logits.data > 0).astype(np.float64)
        accuracies.append(float(np.mean(pred == ys[test_idx])))
    return float(np.mean(accuracies)), accuracies
