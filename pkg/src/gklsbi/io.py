"""On-disk formats: checkpoints, datasets, sample sets, observations.

All binary files are zip archives holding a plain-text ``header.json`` next
to little-endian float64 ``.npy`` entries; the header carries a format
version.
"""

import io as _io
import json
import zipfile

import numpy as np

FORMAT_VERSION = 1


def _write_archive(path, header, arrays):
    header = dict(header, format_version=FORMAT_VERSION)
    with zipfile.ZipFile(path, "w", compression=zipfile.ZIP_DEFLATED) as zf:
        zf.writestr("header.json", json.dumps(header, indent=2, sort_keys=True))
        for name, arr in arrays.items():
            buf = _io.BytesIO()
            np.save(buf, np.asarray(arr, dtype="<f8"))
            zf.writestr(f"{name}.npy", buf.getvalue())


def _read_archive(path):
    with zipfile.ZipFile(path, "r") as zf:
        header = json.loads(zf.read("header.json"))
        if header.get("format_version") != FORMAT_VERSION:
            raise ValueError(
                f"unsupported format version {header.get('format_version')}"
            )
        arrays = {}
        for entry in zf.namelist():
            if entry.endswith(".npy"):
                arrays[entry[:-4]] = np.load(_io.BytesIO(zf.read(entry)))
    return header, arrays


def save_checkpoint(path, config, params):
    """Named-tensor archive plus the surrogate/build configuration."""
    _write_archive(path, {"kind": "checkpoint", "config": config},
                   {k: v.data for k, v in params.items()})


def load_checkpoint(path):
    header, arrays = _read_archive(path)
    if header.get("kind") != "checkpoint":
        raise ValueError(f"{path} is not a checkpoint archive")
    return header["config"], arrays


def save_dataset(path, task_name, theta, x, seed):
    _write_archive(
        path,
        {
            "kind": "dataset",
            "task": task_name,
            "theta_dim": int(theta.shape[1]),
            "x_dim": int(x.shape[1]),
            "seed": int(seed),
            "count": int(theta.shape[0]),
        },
        {"theta": theta, "x": x},
    )


def load_dataset(path):
    header, arrays = _read_archive(path)
    if header.get("kind") != "dataset":
        raise ValueError(f"{path} is not a dataset archive")
    return header, arrays["theta"], arrays["x"]


def save_samples(path, task_name, model_id, observation_index, samples):
    _write_archive(
        path,
        {
            "kind": "samples",
            "task": task_name,
            "model": model_id,
            "observation": int(observation_index),
            "n": int(samples.shape[0]),
        },
        {"samples": samples},
    )


def load_samples(path):
    header, arrays = _read_archive(path)
    if header.get("kind") != "samples":
        raise ValueError(f"{path} is not a samples archive")
    return header, arrays["samples"]


def save_observation(path, x_o):
    np.savetxt(path, np.atleast_1d(x_o))


def load_observation(path):
    return np.loadtxt(path)
