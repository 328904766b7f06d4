"""Word/byte-level language model built from parallel-cell layers.

    tokens -> embedding -> layer 0 -> ... -> layer L-1 -> linear -> softmax

Arrays are batched: tokens are ``[B, T]``, logits ``[B, T, V]``. Each layer's
state is a list of per-cell :class:`CellState` with ``[B, h]`` arrays.
"""
from dataclasses import dataclass, fields, replace
from typing import List, Optional

import numpy as np

from .cells import CellKind
from .data import make_batches
from .errors import ConfigError, DataError, UsageError
from .numerics import DTYPE, log_softmax, softmax
from .pc_layer import RoutingMode, build_layer, pc_backward, pc_forward, zero_states


@dataclass(frozen=True)
class ModelConfig:
    vocab_size: int
    hidden: int = 200
    layers: int = 2
    wide: int = 1
    embed_dim: int = 0          # 0 means "same as hidden"
    cell: str = "lstm"
    activation: str = "tanh"    # naive RNN only
    literal: bool = False       # naive RNN only
    routing: str = "split"
    tokenize: str = "word"      # "word" or "byte"; how text maps to ids
    eos: bool = True

    def __post_init__(self):
        for name in ("vocab_size", "hidden", "layers", "wide"):
            if getattr(self, name) < 1:
                raise ConfigError(f"{name} must be positive, got {getattr(self, name)}")
        if self.embed_dim < 0:
            raise ConfigError(f"embed_dim must be >= 0, got {self.embed_dim}")
        if self.hidden % self.wide:
            raise ConfigError(f"hidden {self.hidden} is not divisible by wide {self.wide}")
        if self.cell not in ("lstm", "rnn"):
            raise ConfigError(f"cell must be 'lstm' or 'rnn', got {self.cell!r}")
        if self.routing not in ("split", "full"):
            raise ConfigError(f"routing must be 'split' or 'full', got {self.routing!r}")
        if self.tokenize not in ("word", "byte"):
            raise ConfigError(f"tokenize must be 'word' or 'byte', got {self.tokenize!r}")

    @property
    def input_dim(self):
        return self.embed_dim or self.hidden

    @property
    def kind(self):
        if self.cell == "lstm":
            return CellKind.lstm()
        return CellKind.rnn(self.activation, self.literal)

    def to_items(self):
        return [(f.name, getattr(self, f.name)) for f in fields(self)]

    @classmethod
    def from_items(cls, items):
        known = {f.name: f.type for f in fields(cls)}
        kw = {}
        for key, value in items.items():
            if key not in known:
                raise ConfigError(f"unknown model key {key!r}")
            kw[key] = _coerce(known[key], value, key)
        return cls(**kw)


def _coerce(typ, value, key):
    if not isinstance(value, str):
        return value
    try:
        if typ in (int, "int"):
            return int(value)
        if typ in (bool, "bool"):
            low = value.strip().lower()
            if low in ("1", "true", "yes", "on"):
                return True
            if low in ("0", "false", "no", "off"):
                return False
            raise ValueError(value)
        if typ in (float, "float"):
            return float(value)
    except ValueError:
        raise ConfigError(f"bad value {value!r} for key {key!r}") from None
    return value


class LMModel:
    def __init__(self, config: ModelConfig):
        self.config = config
        V, E, m = config.vocab_size, config.input_dim, config.hidden
        self.embedding = np.zeros((V, E), dtype=DTYPE)
        self.layers = []
        for layer_index in range(config.layers):
            in_dim = E if layer_index == 0 else m
            self.layers.append(
                build_layer(config.kind, in_dim, m, config.wide, RoutingMode(config.routing)))
        self.out_W = np.zeros((V, m), dtype=DTYPE)
        self.out_b = np.zeros(V, dtype=DTYPE)

    def named_arrays(self):
        """``(name, array)`` pairs in declaration order; the arrays are live."""
        out = [("embedding", self.embedding)]
        for li, layer in enumerate(self.layers):
            for ci, cell in enumerate(layer.cells):
                out.append((f"layer{li}.cell{ci}.W", cell.W))
                out.append((f"layer{li}.cell{ci}.b", cell.b))
        out += [("out.W", self.out_W), ("out.b", self.out_b)]
        return out

    def arrays(self):
        return [a for _, a in self.named_arrays()]

    def recurrent_param_count(self):
        return sum(c.count() for layer in self.layers for c in layer.cells)

    def copy(self):
        new = LMModel(self.config)
        for dst, src in zip(new.arrays(), self.arrays()):
            dst[...] = src
        return new


@dataclass
class ModelState:
    layers: List[list]

    @classmethod
    def zeros(cls, model, batch):
        return cls([zero_states(layer, (batch,)) for layer in model.layers])

    def copy(self):
        return ModelState([[replace(s, h=s.h.copy(), c=None if s.c is None else s.c.copy())
                            for s in layer] for layer in self.layers])


def normalize_mask(model, mask):
    """Accept ``None``, a list of per-layer index sets, or a ``{layer: set}`` dict."""
    n = len(model.layers)
    if mask is None:
        return [frozenset()] * n
    if isinstance(mask, dict):
        for li in mask:
            if not 0 <= li < n:
                raise UsageError(f"mask names layer {li}, model has {n}")
        return [frozenset(mask.get(li, ())) for li in range(n)]
    mask = list(mask)
    if len(mask) != n:
        raise UsageError(f"mask lists {len(mask)} layers, model has {n}")
    return [frozenset(m) for m in mask]


@dataclass
class SequenceTape:
    tokens: np.ndarray
    steps: list              # steps[t][l] = per-cell tapes
    in_masks: list           # in_masks[t][l] = dropout mask on layer l input, or None
    top_mask: Optional[np.ndarray]
    tops: np.ndarray         # [B, T, m] top-layer output (after dropout)
    logits: np.ndarray
    mask: list
    model: "LMModel"


def _check_tokens(tokens, V, what="token"):
    tokens = np.asarray(tokens)
    if tokens.size and (tokens.min() < 0 or tokens.max() >= V):
        bad = tokens[(tokens < 0) | (tokens >= V)].ravel()[0]
        raise DataError(f"{what} id {bad} outside vocabulary [0, {V})")
    return tokens


def forward_sequence(model, tokens, state, mask=None, dropout=None, threads=1):
    """Run ``T`` steps. Returns ``(logits [B,T,V], final_state, tape)``.

    ``dropout`` is any object with ``input_mask(shape)`` and
    ``recurrent_mask(shape)`` methods returning a multiplier array or
    ``None``; pass ``None`` at evaluation time.
    """
    cfg = model.config
    tokens = _check_tokens(tokens, cfg.vocab_size)
    if tokens.ndim != 2:
        raise DataError(f"tokens must be [B, T], got shape {tokens.shape}")
    B, T = tokens.shape
    mask = normalize_mask(model, mask)
    if len(state.layers) != len(model.layers):
        raise UsageError("state does not match model depth")
    layer_states = list(state.layers)

    emb = model.embedding[tokens]
    steps, in_masks = [], []
    tops = np.empty((B, T, cfg.hidden), dtype=DTYPE)
    for t in range(T):
        inp = emb[:, t]
        step_tapes, step_masks = [], []
        for li, layer in enumerate(model.layers):
            dm = dropout.input_mask(inp.shape) if dropout is not None else None
            if dm is not None:
                inp = inp * dm
            rms = None
            if dropout is not None:
                rms = [dropout.recurrent_mask((B, layer.cell_hidden)) for _ in range(layer.wide)]
            new, inp, tapes = pc_forward(layer, inp, layer_states[li], mask[li], rms, threads)
            layer_states[li] = new
            step_tapes.append(tapes)
            step_masks.append(dm)
        steps.append(step_tapes)
        in_masks.append(step_masks)
        tops[:, t] = inp

    top_mask = dropout.input_mask(tops.shape) if dropout is not None else None
    if top_mask is not None:
        tops = tops * top_mask
    logits = tops @ model.out_W.T + model.out_b
    tape = SequenceTape(tokens, steps, in_masks, top_mask, tops, logits, mask, model)
    return logits, ModelState(layer_states), tape


def loss(logits, targets):
    """Mean natural-log cross-entropy over all positions."""
    logits = np.asarray(logits, dtype=DTYPE)
    targets = np.asarray(targets)
    if targets.shape != logits.shape[:-1]:
        raise DataError(f"targets shape {targets.shape} != logits positions {logits.shape[:-1]}")
    _check_tokens(targets, logits.shape[-1], "target")
    logp = log_softmax(logits)
    picked = np.take_along_axis(logp, targets[..., None], axis=-1)[..., 0]
    return float(-picked.mean())


def target_logprobs(logits, targets):
    logp = log_softmax(logits)
    return np.take_along_axis(logp, np.asarray(targets)[..., None], axis=-1)[..., 0]


def backward_sequence(model, tape, targets, threads=1):
    """Gradient of :func:`loss` w.r.t. every parameter, truncated at the window.

    Returns a dict keyed like :meth:`LMModel.named_arrays`.
    """
    if tape.model is not model:
        raise UsageError("tape was produced by a different model")
    targets = np.asarray(targets)
    B, T = tape.tokens.shape
    if targets.shape != (B, T):
        raise DataError(f"targets shape {targets.shape} != tokens shape {(B, T)}")
    _check_tokens(targets, model.config.vocab_size, "target")
    m = model.config.hidden

    dlogits = softmax(tape.logits)
    np.put_along_axis(dlogits, targets[..., None],
                      np.take_along_axis(dlogits, targets[..., None], axis=-1) - 1.0, axis=-1)
    dlogits /= B * T

    flat = dlogits.reshape(-1, dlogits.shape[-1])
    g_out_W = flat.T @ tape.tops.reshape(-1, m)
    g_out_b = flat.sum(axis=0)
    dtops = dlogits @ model.out_W
    if tape.top_mask is not None:
        dtops = dtops * tape.top_mask

    g_cells = [[[np.zeros_like(c.W), np.zeros_like(c.b)] for c in layer.cells]
               for layer in model.layers]
    g_emb = np.zeros_like(model.embedding)
    carried = [None] * len(model.layers)

    for t in range(T - 1, -1, -1):
        g = dtops[:, t]
        for li in range(len(model.layers) - 1, -1, -1):
            layer = model.layers[li]
            grads, g, carried[li] = pc_backward(
                layer, tape.steps[t][li], g, carried[li], tape.mask[li], threads)
            for acc, cg in zip(g_cells[li], grads):
                acc[0] += cg.W
                acc[1] += cg.b
            dm = tape.in_masks[t][li]
            if dm is not None:
                g = g * dm
        np.add.at(g_emb, tape.tokens[:, t], g)

    out = {"embedding": g_emb}
    for li, layer in enumerate(g_cells):
        for ci, (gW, gb) in enumerate(layer):
            out[f"layer{li}.cell{ci}.W"] = gW
            out[f"layer{li}.cell{ci}.b"] = gb
    out["out.W"] = g_out_W
    out["out.b"] = g_out_b
    return out


def perplexity(mean_nll):
    return float(np.exp(mean_nll))


def score_tokens(model, ids, batch, unroll, mask=None, threads=1):
    """Log-probability of every predicted token in ``ids``.

    Runs the model without dropout over contiguous streams, carrying state
    between windows. Returns ``(logp, targets)`` as flat arrays ordered by
    stream then position.
    """
    stream = make_batches(ids, batch, unroll)
    state = ModelState.zeros(model, stream.batch)
    logps, tgts = [], []
    for inputs, targets in stream:
        logits, state, _ = forward_sequence(model, inputs, state, mask, None, threads)
        logps.append(target_logprobs(logits, targets))
        tgts.append(targets)
    return np.concatenate(logps, axis=1).ravel(), np.concatenate(tgts, axis=1).ravel()


def evaluate(model, ids, batch, unroll, mask=None, threads=1):
    """Mean negative log-likelihood per token (natural log)."""
    logp, _ = score_tokens(model, ids, batch, unroll, mask, threads)
    return float(-logp.mean())
