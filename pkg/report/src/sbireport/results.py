"""Reading benchmark output files: the results CSV and sample archives."""

import csv
import io as _io
import json
import math
import zipfile
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

SCHEMA = ("task", "model", "budget", "seed", "observation", "c2st",
          "wall_seconds", "flags")


@dataclass(frozen=True)
class ResultRow:
    task: str
    model: str
    budget: int
    seed: int
    observation: int
    c2st: float
    wall_seconds: float
    flags: str


class ResultsTable:
    """Schema-validated view of the benchmark results CSV.

    One row per (task, model, budget, seed, observation); unknown or missing
    columns are rejected rather than ignored.
    """

    def __init__(self, rows):
        self.rows = list(rows)

    @classmethod
    def from_csv(cls, path):
        with open(path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = tuple(reader.fieldnames or ())
            extra = set(header) - set(SCHEMA)
            missing = set(SCHEMA) - set(header)
            if extra:
                raise ValueError(f"unknown column(s) {sorted(extra)} in {path}")
            if missing:
                raise ValueError(f"missing column(s) {sorted(missing)} in {path}")
            rows = [
                ResultRow(
                    task=r["task"], model=r["model"], budget=int(r["budget"]),
                    seed=int(r["seed"]), observation=int(r["observation"]),
                    c2st=float(r["c2st"]),
                    wall_seconds=float(r["wall_seconds"]), flags=r["flags"],
                )
                for r in reader
            ]
        if not rows:
            raise ValueError(f"no result rows in {path}")
        return cls(rows)

    @property
    def tasks(self):
        return sorted({r.task for r in self.rows})

    @property
    def models(self):
        return sorted({r.model for r in self.rows})

    def seed_means(self, task, model, budget):
        """Per-seed accuracy, averaged over observations and folded so the
        reported value never sits below chance level."""
        by_seed = {}
        for r in self.rows:
            if (r.task, r.model, r.budget) == (task, model, budget):
                by_seed.setdefault(r.seed, []).append(max(r.c2st, 1 - r.c2st))
        return {seed: float(np.mean(v)) for seed, v in sorted(by_seed.items())}

    def budgets(self, task, model):
        return sorted({r.budget for r in self.rows
                       if (r.task, r.model) == (task, model)})


def t_interval(values, level=0.95):
    """(mean, lower, upper) of the two-sided t-interval for the mean."""
    values = np.asarray(values, dtype=np.float64)
    mean = float(np.mean(values))
    if len(values) < 2:
        return mean, mean, mean
    half = (sps.t.ppf(0.5 + level / 2, len(values) - 1)
            * np.std(values, ddof=1) / math.sqrt(len(values)))
    return mean, mean - half, mean + half


def read_samples(path):
    """Load one binary sample archive: a zip of header.json plus samples.npy."""
    try:
        with zipfile.ZipFile(path, "r") as zf:
            header = json.loads(zf.read("header.json"))
            if header.get("kind") != "samples":
                raise ValueError(f"{path} is not a samples archive")
            samples = np.load(_io.BytesIO(zf.read("samples.npy")))
    except (zipfile.BadZipFile, KeyError, json.JSONDecodeError) as err:
        raise ValueError(f"{path} is not a samples archive: {err}") from err
    return header, samples
