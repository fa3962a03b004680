"""Command line entry points."""

import json
import logging
from pathlib import Path

import click
import numpy as np
import tomli

from . import harness, io as sio, tasks as tasklib


def _load_toml(path):
    with open(path, "rb") as fh:
        return tomli.load(fh)


@click.group()
@click.option("-v", "--verbose", is_flag=True)
def main(verbose):
    logging.basicConfig(level=logging.DEBUG if verbose else logging.INFO,
                        format="%(levelname)s %(name)s: %(message)s")


@main.command()
@click.option("--task", required=True, type=click.Choice(tasklib.TASK_NAMES))
@click.option("--budget", required=True, type=int)
@click.option("--seed", required=True, type=int)
@click.option("--out", required=True, type=click.Path())
def simulate(task, budget, seed, out):
    """Draw joint (theta, x) pairs and store them as a dataset archive."""
    spec = tasklib.get_task(task)
    code = tasklib.TASK_NAMES.index(task)
    rng = np.random.default_rng(np.random.SeedSequence([seed, code, budget]))
    theta, x = tasklib.sample_joint(spec, budget, rng)
    sio.save_dataset(out, task, theta, x, seed)
    click.echo(f"wrote {budget} joint draws to {out}")


@main.command()
@click.option("--config", "config_path", required=True, type=click.Path(exists=True))
@click.option("--out", default=None, type=click.Path(),
              help="checkpoint path (default: <task>_<model>_<budget>_s<seed>.ckpt)")
def train(config_path, out):
    """Train a surrogate from a TOML run configuration."""
    cfg = harness.RunConfig(**_load_toml(config_path))
    surrogate, result = harness.train(cfg)
    if out is None:
        out = f"{cfg.task}_{cfg.model}_{cfg.budget}_s{cfg.seed}.ckpt"
    harness.save_surrogate(out, cfg, surrogate)
    click.echo(f"best validation loss {result.best_val_loss:.4f} "
               f"after {result.epochs_run} epochs -> {out}")


@main.command()
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--observation", required=True, type=int)
@click.option("--n", default=10_000, type=int)
@click.option("--mode", default="full", type=click.Choice(["full", "base"]))
@click.option("--seed", default=0, type=int)
@click.option("--out", required=True, type=click.Path())
def sample(checkpoint, observation, n, mode, seed, out):
    """Draw surrogate posterior samples at one benchmark observation."""
    cfg, surrogate = harness.load_surrogate(checkpoint)
    task = tasklib.get_task(cfg.task)
    _, x_o = tasklib.make_observation(task, observation)
    rng = np.random.default_rng(seed)
    samples, flags = harness.draw_surrogate_samples(surrogate, task, x_o, n,
                                                   rng, mode=mode)
    model_id = cfg.model if mode == "full" else f"{cfg.model}_base"
    sio.save_samples(out, cfg.task, model_id, observation, samples)
    note = f" ({';'.join(flags)})" if flags else ""
    click.echo(f"wrote {n} samples to {out}{note}")


@main.command()
@click.option("--checkpoint", required=True, type=click.Path(exists=True))
@click.option("--task", "task_name", default=None,
              type=click.Choice(tasklib.TASK_NAMES))
@click.option("--obs", required=True, type=int)
@click.option("--mode", default="full", type=click.Choice(["full", "base"]))
@click.option("--seed", default=0, type=int)
def evaluate(checkpoint, task_name, obs, mode, seed):
    """C2ST accuracy of a checkpoint against the reference posterior."""
    cfg, surrogate = harness.load_surrogate(checkpoint)
    task = tasklib.get_task(task_name or cfg.task)
    rng = np.random.default_rng(seed)
    acc, folds, flags = harness.evaluate(surrogate, task, obs, cfg, rng,
                                         mode=mode)
    click.echo(json.dumps({"c2st": acc, "folds": folds, "flags": flags}))


@main.command()
@click.option("--matrix", required=True, type=click.Path(exists=True),
              help="TOML with tasks/models/budgets/seeds lists")
@click.option("--out-dir", required=True, type=click.Path())
@click.option("--workers", default=1, type=int)
def benchmark(matrix, out_dir, workers):
    """Run the full sweep; resumable, one results row per observation."""
    spec = _load_toml(matrix)
    overrides = spec.pop("overrides", None)
    rows = harness.benchmark(spec, out_dir, workers=workers,
                             overrides=overrides)
    click.echo(f"{len(rows)} result rows in {Path(out_dir) / 'results.csv'}")


@main.command()
@click.option("--in", "in_dir", required=True, type=click.Path(exists=True))
@click.option("--out", "out_dir", required=True, type=click.Path())
def report(in_dir, out_dir):
    """Render benchmark plots (delegates to the report package)."""
    try:
        from sbireport.cli import render
    except ImportError as err:
        raise click.ClickException(
            "the report package is not installed; install it from report/"
        ) from err
    written = render(in_dir, out_dir)
    for path in written:
        click.echo(str(path))


if __name__ == "__main__":
    main()
