"""AdamW with optional amsgrad, warmup-cosine LR schedule, early stopping."""

import math
from dataclasses import dataclass, field

import numpy as np


@dataclass
class AdamW:
    """Decoupled-weight-decay Adam. Weight decay is applied directly to the
    parameters (lr * wd * w), never added to the gradient."""

    lr: float = 1e-3
    weight_decay: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    amsgrad: bool = True
    step_count: int = 0
    m: dict = field(default_factory=dict)
    v: dict = field(default_factory=dict)
    v_max: dict = field(default_factory=dict)

    def step(self, params, grads, lr=None):
        if lr is None:
            lr = self.lr
        missing = set(params) - set(grads)
        if missing:
            raise KeyError(f"missing gradients for parameters: {sorted(missing)}")
        self.step_count += 1
        t = self.step_count
        bc1 = 1.0 - self.beta1**t
        bc2 = 1.0 - self.beta2**t
        for name, p in params.items():
            g = grads[name]
            if name not in self.m:
                self.m[name] = g * 0.0
                self.v[name] = g * 0.0
                if self.amsgrad:
                    self.v_max[name] = g * 0.0
            m = self.m[name] = self.beta1 * self.m[name] + (1 - self.beta1) * g
            v = self.v[name] = self.beta2 * self.v[name] + (1 - self.beta2) * g * g
            m_hat = m / bc1
            v_hat = v / bc2
            if self.amsgrad:
                self.v_max[name] = v_hat = np.maximum(self.v_max[name], v_hat)
            p.data -= lr * (m_hat / (v_hat**0.5 + self.eps) + self.weight_decay * p.data)


@dataclass
class LrSchedule:
    """Linear warmup from start_lr to peak_lr, then cosine decay to final_lr."""

    total_steps: int
    warmup_fraction: float = 0.1
    start_lr: float = 1e-8
    peak_lr: float = 1e-3
    final_lr: float = 1e-8

    def __post_init__(self):
        if not 0.0 < self.warmup_fraction < 1.0:
            raise ValueError("warmup fraction must be in (0, 1)")
        if self.start_lr > self.peak_lr or self.final_lr > self.peak_lr:
            raise ValueError("peak lr must dominate start and final lr")

    def lr_at(self, step):
        if step < 0 or step > self.total_steps:
            raise ValueError(f"step {step} outside [0, {self.total_steps}]")
        warmup = self.warmup_fraction * self.total_steps
        if step <= warmup:
            frac = step / warmup if warmup > 0 else 1.0
            return self.start_lr + frac * (self.peak_lr - self.start_lr)
        frac = (step - warmup) / (self.total_steps - warmup)
        return self.final_lr + 0.5 * (self.peak_lr - self.final_lr) * (
            1.0 + math.cos(math.pi * frac)
        )


@dataclass
class EarlyStopping:
    """Stop after `patience` consecutive checks without an improvement of
    more than `min_delta` over the best validation loss seen so far."""

    min_delta: float = 0.003
    patience: int = 322
    best: float = math.inf
    since_improvement: int = 0

    def update(self, val_loss):
        """Returns True while training should continue."""
        if not math.isfinite(val_loss):
            raise ValueError("validation loss must be finite")
        if val_loss < self.best - self.min_delta:
            self.best = val_loss
            self.since_improvement = 0
            return True
        self.since_improvement += 1
        return self.since_improvement < self.patience
