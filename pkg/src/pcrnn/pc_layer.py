"""Parallel cells: ``wide`` small independent cells acting as one layer.

A layer of total width ``m`` holds ``n`` cells of ``m // n`` units each. Every
cell runs on its own routed input and its own state; the layer output is the
concatenation of the cell outputs in cell order. No recurrent weight connects
one cell to another, so the recurrent parameter count falls to roughly
``1/n`` of a single ``m``-unit cell.

Routing decides what each cell sees:

* ``FULL``  - every cell gets the whole layer input.
* ``SPLIT`` - cell ``i`` gets the ``i``-th equal slice of the input. This is
  the layout for which an LSTM layer has exactly ``8 m**2 / n + 4 m``
  parameters when ``input_dim == m``.
"""
from concurrent.futures import ThreadPoolExecutor
from functools import lru_cache
from dataclasses import dataclass, field
from enum import Enum
from typing import List

import numpy as np

from .cells import CellGrads, CellKind, CellParams, CellState, cell_backward, cell_forward
from .errors import ConfigError, ShapeError, UsageError
from .numerics import DTYPE


class RoutingMode(str, Enum):
    FULL = "full"
    SPLIT = "split"


@dataclass(eq=False)
class ParallelLayer:
    kind: CellKind
    input_dim: int
    total_hidden: int
    wide: int
    routing: RoutingMode
    cells: List[CellParams] = field(default_factory=list)

    @property
    def cell_hidden(self):
        return self.total_hidden // self.wide

    @property
    def cell_input(self):
        if self.routing is RoutingMode.SPLIT:
            return self.input_dim // self.wide
        return self.input_dim

    def arrays(self):
        return [a for c in self.cells for a in c.arrays()]


def build_layer(kind, input_dim, total_hidden, wide, routing=RoutingMode.SPLIT):
    """Create a layer of ``wide`` zero-initialized cells."""
    routing = RoutingMode(routing)
    if wide < 1:
        raise ConfigError(f"wide must be >= 1, got {wide}")
    if total_hidden < 1 or input_dim < 1:
        raise ConfigError(f"dims must be positive, got input_dim={input_dim}, hidden={total_hidden}")
    if total_hidden % wide:
        raise ConfigError(f"hidden size {total_hidden} is not divisible by wide={wide}")
    if routing is RoutingMode.SPLIT and input_dim % wide:
        raise ConfigError(f"input_dim {input_dim} is not divisible by wide={wide} (split routing)")
    layer = ParallelLayer(kind, input_dim, total_hidden, wide, routing)
    try:
        layer.cells = [CellParams.zeros(kind, layer.cell_input, layer.cell_hidden)
                       for _ in range(wide)]
    except ShapeError as e:
        raise ConfigError(str(e)) from e
    return layer


def route(layer, x):
    """Per-cell inputs for layer input ``x``."""
    if x.shape[-1] != layer.input_dim:
        raise ShapeError(f"layer input has length {x.shape[-1]}, expected {layer.input_dim}")
    if layer.wide == 1 or layer.routing is RoutingMode.FULL:
        return [x] * layer.wide
    d = layer.cell_input
    return [x[..., k * d:(k + 1) * d] for k in range(layer.wide)]


def check_mask(layer, mask):
    mask = frozenset(mask or ())
    for k in mask:
        if not (isinstance(k, (int, np.integer)) and 0 <= k < layer.wide):
            raise UsageError(f"mask index {k!r} outside [0, {layer.wide})")
    return mask


def zero_states(layer, batch=()):
    return [CellState.zeros(layer.kind, layer.cell_hidden, batch) for _ in range(layer.wide)]


@lru_cache(maxsize=None)
def _pool(threads):
    return ThreadPoolExecutor(max_workers=threads, thread_name_prefix="pcrnn-cell")


def _run(fn, items, threads):
    # results come back in submission order, so the caller's reductions are
    # performed in the same order whatever the thread count
    if threads <= 1 or len(items) <= 1:
        return [fn(*it) for it in items]
    return list(_pool(threads).map(lambda it: fn(*it), items))


def pc_forward(layer, x, states, mask=None, rec_masks=None, threads=1):
    """Advance every cell one step.

    Cells in ``mask`` are not evaluated: their output slice is zero and their
    carried state is replaced by zeros. Returns ``(states, h, tapes)``; the
    tape of a masked cell is ``None``.
    """
    x = np.asarray(x, dtype=DTYPE)
    mask = check_mask(layer, mask)
    if len(states) != layer.wide:
        raise UsageError(f"got {len(states)} states for {layer.wide} cells")
    inputs = route(layer, x)
    batch = x.shape[:-1]
    if rec_masks is None:
        rec_masks = [None] * layer.wide

    def step(k, cell, xk, s, rm):
        if k in mask:
            zero = CellState.zeros(layer.kind, layer.cell_hidden, batch)
            return zero, zero.h, None
        return cell_forward(cell, xk, s, rm)

    out = _run(step, list(zip(range(layer.wide), layer.cells, inputs, states, rec_masks)), threads)
    new_states = [o[0] for o in out]
    hs = [o[1] for o in out]
    tapes = [o[2] for o in out]
    h = hs[0] if layer.wide == 1 else np.concatenate(hs, axis=-1)
    return new_states, h, tapes


def pc_backward(layer, tapes, grad_h, grad_states, mask=None, threads=1):
    """Backward through one :func:`pc_forward` step.

    ``grad_states`` are the gradients arriving at this step's output states
    from the following step (``None`` entries count as zero). Returns
    ``(grads, grad_x, grad_prev_states)`` with one :class:`CellGrads` per cell;
    masked cells get zero gradients and pass nothing backward.
    """
    mask = check_mask(layer, mask)
    if len(tapes) != layer.wide:
        raise UsageError(f"got {len(tapes)} tapes for {layer.wide} cells")
    grad_h = np.asarray(grad_h, dtype=DTYPE)
    if grad_h.shape[-1] != layer.total_hidden:
        raise ShapeError(f"grad_h has length {grad_h.shape[-1]}, expected {layer.total_hidden}")
    H = layer.cell_hidden
    batch = grad_h.shape[:-1]
    if grad_states is None:
        grad_states = [None] * layer.wide

    def step(k, cell, tape, gs):
        if k in mask:
            return None
        if tape is None or tape.params is not cell:
            raise UsageError(f"tape for cell {k} does not belong to this layer")
        gh = grad_h[..., k * H:(k + 1) * H]
        gc = None
        if gs is not None:
            gh = gh + gs.h
            gc = gs.c
        if layer.kind.is_lstm and gc is None:
            gc = np.zeros_like(gh)
        return cell_backward(cell, tape, gh, gc)

    out = _run(step, list(zip(range(layer.wide), layer.cells, tapes, grad_states)), threads)

    grads, dxs, prev = [], [], []
    for k, o in enumerate(out):
        if o is None:
            c = layer.cells[k]
            grads.append(CellGrads(np.zeros_like(c.W), np.zeros_like(c.b)))
            dxs.append(None)
            prev.append(CellState.zeros(layer.kind, H, batch))
        else:
            grads.append(o[0])
            dxs.append(o[1])
            prev.append(o[2])

    xshape = (*batch, layer.cell_input)
    if layer.wide == 1:
        grad_x = dxs[0] if dxs[0] is not None else np.zeros(xshape, dtype=DTYPE)
    elif layer.routing is RoutingMode.SPLIT:
        grad_x = np.concatenate(
            [d if d is not None else np.zeros(xshape, dtype=DTYPE) for d in dxs], axis=-1)
    else:
        grad_x = None
        for d in dxs:  # fixed cell order
            if d is not None:
                grad_x = d if grad_x is None else grad_x + d
        if grad_x is None:
            grad_x = np.zeros(xshape, dtype=DTYPE)
    return grads, grad_x, prev


def count_params(layer):
    """Exact number of weight and bias entries in the layer."""
    return sum(c.count() for c in layer.cells)


def _check_divisible(m, n):
    if n < 1 or m % n:
        raise ConfigError(f"hidden size {m} is not divisible by wide={n}")


def closed_form_lstm(m, n):
    _check_divisible(m, n)
    return 8 * m * m // n + 4 * m


def closed_form_rnn(m, n):
    _check_divisible(m, n)
    return m * m // n + m
