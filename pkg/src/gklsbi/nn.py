"""Multilayer perceptrons with optional residual blocks and layer norm."""

from dataclasses import dataclass, field

import numpy as np

from . import autodiff as ad
from .autodiff import Tensor

ACTIVATIONS = {"relu": ad.relu, "gelu": ad.gelu, "tanh": ad.tanh}


class ParamStore(dict):
    """Named trainable tensors. Shapes are fixed after initialization."""

    def add(self, name, array):
        if name in self:
            raise KeyError(f"duplicate parameter name {name!r}")
        self[name] = Tensor(np.asarray(array, dtype=np.float64))
        return self[name]

    def subset(self, prefix):
        return ParamStore({k: v for k, v in self.items() if k.startswith(prefix)})

    def copy_values(self):
        return {k: v.data.copy() for k, v in self.items()}

    def load_values(self, values):
        for k, v in self.items():
            v.data[...] = values[k]


@dataclass
class MlpConfig:
    in_dim: int
    hidden: list = field(default_factory=lambda: [64])
    out_dim: int = 1
    activation: str = "relu"
    residual: bool = False
    layer_norm: bool = False
    zero_init_last: bool = False

    def __post_init__(self):
        if self.in_dim <= 0 or self.out_dim <= 0 or any(h <= 0 for h in self.hidden):
            raise ValueError("all layer dims must be positive")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"unknown activation {self.activation!r}")


def _init_linear(params, name, fan_in, fan_out, rng, zero=False):
    if zero:
        w = np.zeros((fan_in, fan_out))
    else:
        bound = 1.0 / np.sqrt(fan_in)
        w = rng.uniform(-bound, bound, size=(fan_in, fan_out))
    params.add(f"{name}.w", w)
    params.add(f"{name}.b", np.zeros(fan_out))


def init_mlp(params, prefix, cfg, rng):
    """Allocate all parameters of one MLP under `prefix` in `params`."""
    widths = [cfg.in_dim] + list(cfg.hidden)
    for i, (a, b) in enumerate(zip(widths[:-1], widths[1:])):
        if cfg.residual and a != b:
            raise ValueError("residual blocks require equal in/out width")
        _init_linear(params, f"{prefix}.h{i}.fc1", a, b, rng)
        if cfg.residual:
            _init_linear(params, f"{prefix}.h{i}.fc2", b, b, rng)
        if cfg.layer_norm:
            params.add(f"{prefix}.h{i}.ln_g", np.ones(a))
            params.add(f"{prefix}.h{i}.ln_b", np.zeros(a))
    _init_linear(params, f"{prefix}.out", widths[-1], cfg.out_dim, rng,
                 zero=cfg.zero_init_last)


def mlp_forward(params, prefix, cfg, x):
    """Forward pass; `x` is a Tensor with last dim == cfg.in_dim.

    Each hidden block applies (optional) layer norm, a linear map and the
    activation; with `residual` a second linear map is added back onto the
    block input.
    """
    if x.shape[-1] != cfg.in_dim:
        raise ValueError(f"input dim {x.shape[-1]} != configured {cfg.in_dim}")
    act = ACTIVATIONS[cfg.activation]
    h = x
    for i in range(len(cfg.hidden)):
        inner = h
        if cfg.layer_norm:
            inner = ad.layer_norm(inner, params[f"{prefix}.h{i}.ln_g"],
                                  params[f"{prefix}.h{i}.ln_b"])
        inner = act(inner @ params[f"{prefix}.h{i}.fc1.w"] + params[f"{prefix}.h{i}.fc1.b"])
        if cfg.residual:
            h = h + inner @ params[f"{prefix}.h{i}.fc2.w"] + params[f"{prefix}.h{i}.fc2.b"]
        else:
            h = inner
    return h @ params[f"{prefix}.out.w"] + params[f"{prefix}.out.b"]
