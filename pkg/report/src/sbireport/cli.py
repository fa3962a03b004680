"""Batch rendering of a benchmark output directory."""

import logging
from pathlib import Path

from .plots import corner_plot, plot_c2st
from .results import ResultsTable, read_samples

log = logging.getLogger(__name__)


def _collect_sample_sets(in_dir):
    """Group sample archives by (task, observation) and split them into the
    reference set (model == "reference") and surrogate sets."""
    in_dir = Path(in_dir)
    groups = {}
    candidates = sorted(set(in_dir.glob("*.samples")) | set(in_dir.glob("*.zip")))
    for path in candidates:
        try:
            header, samples = read_samples(path)
        except (ValueError, KeyError) as err:
            log.warning("skipping %s: %s", path, err)
            continue
        key = (header["task"], header["observation"])
        groups.setdefault(key, {"reference": None, "surrogates": {}})
        if header["model"] == "reference":
            groups[key]["reference"] = samples
        else:
            groups[key]["surrogates"][header["model"]] = samples
    return groups


def render(in_dir, out_dir):
    """Render every plot the input directory supports; returns written paths.

    Expects ``results.csv`` (benchmark schema) and/or ``*.samples`` archives;
    each surrogate sample set is drawn over the matching reference set in its
    own corner plot.
    """
    in_dir = Path(in_dir)
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []

    csv_path = in_dir / "results.csv"
    if csv_path.exists():
        written.extend(plot_c2st(ResultsTable.from_csv(csv_path), out_dir))

    for (task, obs), group in sorted(_collect_sample_sets(in_dir).items()):
        if group["reference"] is None:
            log.warning("no reference samples for %s observation %s", task, obs)
            continue
        for model, samples in sorted(group["surrogates"].items()):
            path = out_dir / f"corner_{task}_obs{obs}_{model}.png"
            corner_plot(group["reference"], {model: samples}, path)
            written.append(path)

    if not written:
        raise ValueError(f"nothing to render in {in_dir}")
    return written
