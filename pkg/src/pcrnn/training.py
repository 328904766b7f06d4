"""SGD training loop for :class:`~pcrnn.model.LMModel`.

Defaults follow the usual two-layer LSTM word-model recipe: uniform init in
``[-0.04, 0.04]``, learning rate 1 for 14 epochs then divided by 1.15 each
epoch up to 55, gradients clipped to global norm 5, 65% dropout on recurrent
connections, batch 20, 35-step unrolling with state carried across windows.
"""
import logging
from dataclasses import dataclass, fields

import numpy as np

from .data import make_batches
from .errors import ConfigError, DataError
from .model import ModelState, backward_sequence, evaluate, forward_sequence, loss, perplexity
from .numerics import global_norm
from .prng import Rng

log = logging.getLogger(__name__)

DROPOUT_TARGETS = ("input", "recurrent", "both")


@dataclass(frozen=True)
class TrainConfig:
    init_range: float = 0.04
    base_lr: float = 1.0
    warm_epochs: int = 14
    decay_factor: float = 1 / 1.15
    total_epochs: int = 55
    clip_threshold: float = 5.0
    dropout_rate: float = 0.65
    dropout_target: str = "recurrent"
    batch: int = 20
    unroll: int = 35
    seed: int = 0
    threads: int = 1

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ConfigError(f"dropout_rate must be in [0, 1), got {self.dropout_rate}")
        if self.dropout_target not in DROPOUT_TARGETS:
            raise ConfigError(f"dropout_target must be one of {DROPOUT_TARGETS}, "
                              f"got {self.dropout_target!r}")
        if self.init_range <= 0:
            raise ConfigError(f"init_range must be > 0, got {self.init_range}")
        if self.clip_threshold <= 0:
            raise ConfigError(f"clip_threshold must be > 0, got {self.clip_threshold}")
        if self.base_lr < 0:
            raise ConfigError(f"base_lr must be >= 0, got {self.base_lr}")
        if not 0 < self.decay_factor <= 1:
            raise ConfigError(f"decay_factor must be in (0, 1], got {self.decay_factor}")
        if self.total_epochs < 1 or not 0 <= self.warm_epochs <= self.total_epochs:
            raise ConfigError(f"need 0 <= warm_epochs ({self.warm_epochs}) <= "
                              f"total_epochs ({self.total_epochs}) and total_epochs >= 1")
        for name in ("batch", "unroll", "threads"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")

    def to_items(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]


class DropoutPlan:
    """Inverted dropout masks drawn fresh at every call.

    Kept units are scaled by ``1 / (1 - rate)`` so evaluation runs without
    masks. ``target`` picks which connections are dropped: the input to each
    layer and to the softmax (``"input"``), the previous hidden state entering
    each cell's transform (``"recurrent"``), or both.
    """

    def __init__(self, rate, target, rng):
        if target not in DROPOUT_TARGETS:
            raise ConfigError(f"unknown dropout target {target!r}")
        self.rate = rate
        self.target = target
        self.rng = rng

    def _draw(self, shape):
        keep = 1.0 - self.rate
        return (self.rng.uniform(shape) < keep) / keep

    def input_mask(self, shape):
        if self.rate == 0 or self.target == "recurrent":
            return None
        return self._draw(shape)

    def recurrent_mask(self, shape):
        if self.rate == 0 or self.target == "input":
            return None
        return self._draw(shape)


def init_params(model, r, rng):
    """Fill every parameter i.i.d. uniform on ``[-r, r]``, in declaration order."""
    if r <= 0:
        raise ConfigError(f"init range must be > 0, got {r}")
    for a in model.arrays():
        a[...] = rng.uniform(a.shape, -r, r)
    return model


def lr_at(epoch, cfg):
    """Learning rate for a 1-based epoch."""
    if epoch < 1:
        raise ConfigError(f"epochs are 1-based, got {epoch}")
    if epoch <= cfg.warm_epochs:
        return cfg.base_lr
    return cfg.base_lr * cfg.decay_factor ** (epoch - cfg.warm_epochs)


def clip_gradients(grads, threshold):
    """Rescale ``grads`` (dict or list) so their global norm is at most ``threshold``."""
    if threshold <= 0:
        raise ConfigError(f"clip threshold must be > 0, got {threshold}")
    values = list(grads.values()) if isinstance(grads, dict) else list(grads)
    norm = global_norm(values)
    if norm <= threshold:
        return grads
    scale = threshold / norm
    if isinstance(grads, dict):
        return {k: v * scale for k, v in grads.items()}
    return [v * scale for v in values]


def sgd_step(model, grads, lr):
    """In-place ``p -= lr * g`` for every named parameter."""
    for name, p in model.named_arrays():
        g = grads[name]
        if g.shape != p.shape:
            raise ConfigError(f"gradient for {name} has shape {g.shape}, parameter {p.shape}")
        p -= lr * g
    return model


@dataclass
class EpochMetrics:
    epoch: int
    lr: float
    train_ppl: float
    valid_ppl: float


def run_epoch(model, stream, lr, cfg, dropout):
    """One pass over ``stream`` with SGD updates; returns mean training NLL."""
    state = ModelState.zeros(model, stream.batch)
    total, count = 0.0, 0
    for inputs, targets in stream:
        logits, state, tape = forward_sequence(model, inputs, state, None, dropout, cfg.threads)
        nll = loss(logits, targets)
        grads = backward_sequence(model, tape, targets, cfg.threads)
        grads = clip_gradients(grads, cfg.clip_threshold)
        sgd_step(model, grads, lr)
        total += nll * targets.size
        count += targets.size
    return total / count


def train(model, train_ids, valid_ids, cfg, rng=None, progress=None, on_best=None):
    """Train for ``cfg.total_epochs`` epochs.

    Each epoch starts from zero state and walks the contiguous windows in
    order, carrying the final state of one window into the next. After each
    epoch the validation perplexity is computed without dropout; ``on_best``
    (if given) is called with ``(model, epoch)`` whenever it improves.
    ``progress`` receives every :class:`EpochMetrics` row.
    """
    if rng is None:
        rng = Rng(cfg.seed)
    if len(train_ids) < cfg.batch * (cfg.unroll + 1):
        raise DataError(f"training corpus has {len(train_ids)} tokens, "
                        f"needs at least batch*(unroll+1) = {cfg.batch * (cfg.unroll + 1)}")
    stream = make_batches(train_ids, cfg.batch, cfg.unroll)
    dropout = DropoutPlan(cfg.dropout_rate, cfg.dropout_target, rng)
    valid_batch, valid_unroll = fit_eval_shape(len(valid_ids), cfg.batch, cfg.unroll)

    history = []
    best = np.inf
    for epoch in range(1, cfg.total_epochs + 1):
        lr = lr_at(epoch, cfg)
        train_nll = run_epoch(model, stream, lr, cfg, dropout)
        valid_nll = evaluate(model, valid_ids, valid_batch, valid_unroll, threads=cfg.threads)
        row = EpochMetrics(epoch, lr, perplexity(train_nll), perplexity(valid_nll))
        history.append(row)
        log.info("epoch %d lr %.6g train ppl %.4f valid ppl %.4f",
                 epoch, lr, row.train_ppl, row.valid_ppl)
        if progress is not None:
            progress(row)
        if valid_nll < best:
            best = valid_nll
            if on_best is not None:
                on_best(model, epoch)
    return model, history


def fit_eval_shape(n, batch, unroll):
    """Largest ``(batch, unroll)`` not exceeding the requested ones that fits ``n`` tokens."""
    if n < 2:
        raise DataError(f"evaluation corpus has only {n} tokens")
    unroll = min(unroll, n - 1)
    return min(batch, n // (unroll + 1)), unroll


def write_metrics(rows, path):
    with open(path, "w", encoding="utf-8", newline="") as fh:
        fh.write("epoch,lr,train_ppl,valid_ppl\n")
        for r in rows:
            fh.write(f"{r.epoch},{r.lr!r},{r.train_ppl!r},{r.valid_ppl!r}\n")
