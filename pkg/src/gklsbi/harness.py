"""Training loop, evaluation, and benchmark sweep orchestration."""

import csv
import json
import logging
import math
import time
from dataclasses import asdict, dataclass, field
from pathlib import Path

import numpy as np
from scipy import stats as sps

from . import io as sio
from . import tasks as tasklib
from .autodiff import gradient
from .metrics import C2stConfig, c2st
from .nn import ParamStore
from .objectives import Batch, loss_flow, loss_hybrid, loss_ratio
from .optim import AdamW, EarlyStopping, LrSchedule
from .samplers import MhConfig, RejectionConfig, mh_sample, rejection_sample
from .surrogates import FlowSurrogate, RatioNet, Surrogate
from .distributions import UniformBox

log = logging.getLogger(__name__)

MODEL_KINDS = ("flow", "ratio", "ratio_big", "hybrid", "hybrid_big")
BUDGETS = (1_000, 10_000, 100_000)
RATIO_HIDDEN = {"ratio": [128], "ratio_big": [256, 256],
                "hybrid": [128], "hybrid_big": [256, 256]}


@dataclass
class RunConfig:
    task: str
    model: str
    budget: int
    seed: int
    batch_size: int = 16_384
    max_epochs: int = 2_000
    val_fraction: float = 0.1
    lr: float = 1e-3
    weight_decay: float = 1e-3
    start_lr: float = 1e-8
    final_lr: float = 1e-8
    warmup_fraction: float = 0.1
    patience: int = 322
    min_delta: float = 0.003
    flow_base: str = "maf"  # or cond_gaussian
    embed_width: int = 64
    flow_hidden: int = 64
    n_transforms: int = 5
    n_contrastive: int = 1
    freeze_ratio: bool = False
    n_observations: int = tasklib.N_OBSERVATIONS
    eval_samples: int = 10_000

    def __post_init__(self):
        if self.model not in MODEL_KINDS:
            raise ValueError(f"unknown model kind {self.model!r}")
        n_val = int(round(self.val_fraction * self.budget))
        if n_val < 1 or self.budget - n_val < 1:
            raise ValueError(
                "budget must leave at least one draw on each side of the "
                "train/validation split"
            )

    @property
    def surrogate_kind(self):
        return {"flow": "flow", "ratio": "ratio", "ratio_big": "ratio",
                "hybrid": "hybrid", "hybrid_big": "hybrid"}[self.model]


def _streams(config):
    """Independent rng streams fanned out from the run seed.

    Keyed on (seed, task, budget) only, so runs that share data and
    initialization order stay bit-for-bit comparable across model kinds.
    """
    code = tasklib.TASK_NAMES.index(config.task)
    base = np.random.SeedSequence([config.seed, code, config.budget])
    names = ("data", "init", "shuffle", "loss", "eval")
    children = base.spawn(len(names))
    return {n: np.random.default_rng(c) for n, c in zip(names, children)}


def build_surrogate(config, task, init_rng):
    """Fresh surrogate per the model table; flow parameters are created
    first so flow and hybrid share their base initialization."""
    params = ParamStore()
    kind = config.surrogate_kind
    prior_box = task.prior if isinstance(task.prior, UniformBox) else None
    flow = None
    ratio = None
    if kind in ("flow", "hybrid"):
        flow = FlowSurrogate(
            params, task.theta_dim, task.x_dim, base=config.flow_base,
            prior_box=prior_box, embed_width=config.embed_width,
            flow_hidden=config.flow_hidden, n_transforms=config.n_transforms,
            rng=init_rng, prefix="flow",
        )
    if kind in ("ratio", "hybrid"):
        ratio = RatioNet(
            params, task.theta_dim, task.x_dim,
            hidden=RATIO_HIDDEN[config.model],
            embed_width=config.embed_width,
            use_embedding=(kind == "hybrid"),
            rng=init_rng, prefix="ratio",
        )
    return Surrogate(kind, params, flow=flow, ratio=ratio, prior=task.prior)


@dataclass
class TrainResult:
    best_val_loss: float
    epochs_run: int
    train_curve: list = field(default_factory=list)
    val_curve: list = field(default_factory=list)
    lr_halved: bool = False


class RunFailure(RuntimeError):
    pass


def _run_loss(config, surrogate, batch, rng):
    kind = config.surrogate_kind
    if kind == "flow":
        return loss_flow(batch, surrogate)
    if kind == "ratio":
        return loss_ratio(batch, surrogate, rng=rng,
                          n_contrastive=config.n_contrastive)
    return loss_hybrid(batch, surrogate, rng, n_contrastive=config.n_contrastive)


def train(config, dataset=None):
    """Fit a surrogate on `budget` joint draws; returns the surrogate at its
    best validation loss together with the training record."""
    task = tasklib.get_task(config.task)
    streams = _streams(config)
    if dataset is None:
        theta, x = tasklib.sample_joint(task, config.budget, streams["data"])
    else:
        theta, x = dataset
    n_val = int(round(config.val_fraction * len(theta)))
    val_theta, val_x = theta[:n_val], x[:n_val]
    tr_theta, tr_x = theta[n_val:], x[n_val:]

    surrogate = build_surrogate(config, task, streams["init"])
    trainable = (
        surrogate.params.subset("flow.") if config.freeze_ratio
        else surrogate.params
    )
    batch_size = min(config.batch_size, len(tr_theta))
    batches_per_epoch = math.ceil(len(tr_theta) / batch_size)
    schedule = LrSchedule(
        total_steps=config.max_epochs * batches_per_epoch,
        warmup_fraction=config.warmup_fraction,
        start_lr=config.start_lr, peak_lr=config.lr, final_lr=config.final_lr,
    )
    opt = AdamW(lr=config.lr, weight_decay=config.weight_decay, amsgrad=True)
    stopper = EarlyStopping(min_delta=config.min_delta, patience=config.patience)
    result = TrainResult(best_val_loss=np.inf, epochs_run=0)
    best = surrogate.params.copy_values()
    lr_scale = 1.0
    global_step = 0
    shuffle_rng = streams["shuffle"]
    loss_rng = streams["loss"]

    epoch = 0
    while epoch < config.max_epochs:
        epoch_start_values = surrogate.params.copy_values()
        order = shuffle_rng.permutation(len(tr_theta))
        epoch_losses = []
        try:
            for start in range(0, len(tr_theta), batch_size):
                sl = order[start : start + batch_size]
                batch = Batch(tr_theta[sl], tr_x[sl])
                loss = _run_loss(config, surrogate, batch, loss_rng)
                grads = gradient(loss, trainable)
                lr = lr_scale * schedule.lr_at(min(global_step + 1,
                                                  schedule.total_steps))
                opt.step(trainable, grads, lr=lr)
                global_step += 1
                epoch_losses.append(loss.item())
            val_batch = Batch(val_theta, val_x)
            val_loss = _run_loss(config, surrogate, val_batch, loss_rng).item()
            if not math.isfinite(val_loss):
                raise FloatingPointError("non-finite validation loss")
        except FloatingPointError as err:
            if result.lr_halved:
                raise RunFailure(f"diverged twice: {err}") from err
            log.warning("loss diverged (%s); halving lr and restarting epoch", err)
            surrogate.params.load_values(epoch_start_values)
            lr_scale = 0.5
            result.lr_halved = True
            continue
        result.train_curve.append(float(np.mean(epoch_losses)))
        result.val_curve.append(val_loss)
        result.epochs_run = epoch + 1
        if val_loss < result.best_val_loss:
            result.best_val_loss = val_loss
            best = surrogate.params.copy_values()
        if not stopper.update(val_loss):
            break
        epoch += 1
    surrogate.params.load_values(best)
    return surrogate, result


def save_surrogate(path, config, surrogate):
    sio.save_checkpoint(path, asdict(config), surrogate.params)


def load_surrogate(path):
    """Rebuild a surrogate from a checkpoint archive."""
    cfg_dict, arrays = sio.load_checkpoint(path)
    config = RunConfig(**cfg_dict)
    task = tasklib.get_task(config.task)
    surrogate = build_surrogate(config, task, np.random.default_rng(0))
    surrogate.params.load_values(arrays)
    return config, surrogate


class FlowProposal:
    """Adapter exposing a flow surrogate as a rejection-sampler proposal."""

    def __init__(self, flow, params, x_o):
        self.flow = flow
        self.params = params
        self.x_o = np.atleast_1d(x_o)

    @property
    def dim(self):
        return self.flow.theta_dim

    def sample(self, rng, size):
        return self.flow.sample(self.params, self.x_o, rng, n=size,
                                stop_gradient=True)

    def log_pdf(self, draws):
        if self.flow.bijection is not None:
            b = self.flow.bijection
            inside = np.all((draws > b.lower) & (draws < b.upper), axis=-1)
            out = np.full(len(draws), -np.inf)
            if np.any(inside):
                out[inside] = self.flow.log_prob(
                    self.params, draws[inside], self.x_o
                ).data
            return out
        return self.flow.log_prob(self.params, draws, self.x_o).data


def draw_surrogate_samples(surrogate, task, x_o, n, rng, mode="full"):
    """theta-hat draws from the surrogate at one observation.

    Flow: direct sampling. Ratio: random-walk MH. Hybrid: rejection with the
    base as proposal (mode="full"), or base-only draws (mode="base"); a
    rejection abort falls back to MH with a flag.
    """
    flags = []
    if surrogate.kind == "flow" or (surrogate.kind == "hybrid" and mode == "base"):
        samples = surrogate.flow.sample(surrogate.params, x_o, rng, n=n)
        return samples, flags
    target = lambda th: surrogate.log_unnorm(th, x_o)
    if surrogate.kind == "hybrid":
        proposal = FlowProposal(surrogate.flow, surrogate.params, x_o)
        try:
            samples, rate = rejection_sample(target, proposal, n,
                                             RejectionConfig(), rng)
            if rate < 1e-3:
                flags.append(f"low_acceptance:{rate:.2e}")
            return samples, flags
        except RuntimeError as err:
            log.warning("rejection aborted (%s); falling back to MH", err)
            flags.append("rejection_fallback_mh")
    cfg = MhConfig(n_steps=4_000, burn_in=2_000,
                   thinning=max(1, 2_000 * 16 // n))
    samples, diag = mh_sample(target, task.prior, cfg, rng)
    flags.extend(diag.warnings)
    idx = rng.permutation(len(samples))[:n]
    return samples[idx], flags


def evaluate(surrogate, task, observation_index, config=None, rng=None,
             mode="full", reference=None):
    """C2ST accuracy of surrogate draws against the reference posterior."""
    rng = rng if rng is not None else np.random.default_rng(0)
    n = config.eval_samples if config is not None else 10_000
    _, x_o = tasklib.make_observation(task, observation_index)
    if reference is None:
        reference = tasklib.reference_posterior_samples(task, x_o, n, rng)
    samples, flags = draw_surrogate_samples(surrogate, task, x_o, n, rng,
                                            mode=mode)
    acc, folds = c2st(reference, samples, C2stConfig(), rng)
    acc = max(acc, 1.0 - acc)
    return acc, folds, flags


def confidence_interval(values, level=0.95):
    """Two-sided t-interval for the mean of `values`."""
    values = np.asarray(values, dtype=np.float64)
    n = len(values)
    mean = float(np.mean(values))
    if n < 2:
        return mean, mean, mean
    half = sps.t.ppf(0.5 + level / 2, n - 1) * np.std(values, ddof=1) / math.sqrt(n)
    return mean, mean - half, mean + half


def _cell_id(config):
    return f"{config.task}_{config.model}_{config.budget}_s{config.seed}"


def run_cell(config, out_dir):
    """Train and evaluate one benchmark cell; writes a JSON record and
    returns the CSV rows for every observation."""
    out_dir = Path(out_dir)
    cell_dir = out_dir / "cells"
    cell_dir.mkdir(parents=True, exist_ok=True)
    marker = cell_dir / f"{_cell_id(config)}.json"
    if marker.exists():
        return json.loads(marker.read_text())["rows"]

    t0 = time.perf_counter()
    surrogate, train_result = train(config)
    streams = _streams(config)
    task = tasklib.get_task(config.task)
    rows = []
    accuracies = []
    for obs in range(1, config.n_observations + 1):
        t_obs = time.perf_counter()
        acc, folds, flags = evaluate(surrogate, task, obs, config,
                                     streams["eval"])
        accuracies.append(acc)
        rows.append({
            "task": config.task, "model": config.model,
            "budget": config.budget, "seed": config.seed,
            "observation": obs, "c2st": acc,
            "wall_seconds": time.perf_counter() - t_obs,
            "flags": ";".join(flags),
        })
    mean, lo, hi = confidence_interval(accuracies)
    record = {
        "config": asdict(config),
        "rows": rows,
        "mean_c2st": mean, "ci": [lo, hi],
        "wall_seconds": time.perf_counter() - t0,
        "best_val_loss": train_result.best_val_loss,
        "epochs_run": train_result.epochs_run,
        "train_curve": train_result.train_curve[-50:],
        "val_curve": train_result.val_curve[-50:],
    }
    marker.write_text(json.dumps(record, indent=2))
    return rows


CSV_HEADER = ["task", "model", "budget", "seed", "observation", "c2st",
              "wall_seconds", "flags"]


def write_results_csv(rows, path):
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=CSV_HEADER, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow(row)


def benchmark(matrix, out_dir, workers=1, overrides=None):
    """Run every (task, model, budget, seed) cell, resumably.

    Completed cells are skipped via their on-disk marker; individual cell
    failures are recorded and the sweep continues. Writes results.csv and a
    per-point summary.csv with 95% t-intervals over seeds.
    """
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    configs = []
    for task in matrix["tasks"]:
        for model in matrix["models"]:
            for budget in matrix["budgets"]:
                for seed in matrix["seeds"]:
                    configs.append(RunConfig(task=task, model=model,
                                             budget=int(budget), seed=int(seed),
                                             **(overrides or {})))
    if not configs:
        raise ValueError("empty benchmark matrix")

    all_rows = []
    failures = []
    if workers > 1:
        from concurrent.futures import ProcessPoolExecutor

        with ProcessPoolExecutor(max_workers=workers) as pool:
            futures = {pool.submit(run_cell, c, out_dir): c for c in configs}
            for fut, cfg in futures.items():
                try:
                    all_rows.extend(fut.result())
                except Exception as err:
                    log.error("cell %s failed: %s", _cell_id(cfg), err)
                    failures.append({"cell": _cell_id(cfg), "error": str(err)})
    else:
        for cfg in configs:
            try:
                all_rows.extend(run_cell(cfg, out_dir))
            except Exception as err:
                log.error("cell %s failed: %s", _cell_id(cfg), err)
                failures.append({"cell": _cell_id(cfg), "error": str(err)})

    write_results_csv(all_rows, out_dir / "results.csv")
    _write_summary(all_rows, out_dir / "summary.csv")
    if failures:
        (out_dir / "failures.json").write_text(json.dumps(failures, indent=2))
    return all_rows


def _write_summary(rows, path):
    groups = {}
    for row in rows:
        key = (row["task"], row["model"], row["budget"])
        groups.setdefault(key, {}).setdefault(row["seed"], []).append(row["c2st"])
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh, lineterminator="\n")
        writer.writerow(["task", "model", "budget", "n_seeds", "mean_c2st",
                         "ci_lo", "ci_hi"])
        for (task, model, budget), by_seed in sorted(groups.items()):
            seed_means = [float(np.mean(v)) for v in by_seed.values()]
            mean, lo, hi = confidence_interval(seed_means)
            writer.writerow([task, model, budget, len(seed_means),
                             f"{mean:.6f}", f"{lo:.6f}", f"{hi:.6f}"])
