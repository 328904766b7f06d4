"""Single recurrent cells: naive RNN and LSTM, forward and backward.

Inputs and states may be single vectors or batches of row vectors; the
leading axes are carried through unchanged. Weight gradients are summed over
any batch axes.

LSTM layout follows one fused transform over ``[x; h_prev]`` whose row blocks
are ordered ``(i, f, o, g)``::

    i, f, o = sigmoid(z[:3H]);  g = tanh(z[3H:])
    c = f * c_prev + i * g
    h = o * tanh(c)
"""
from dataclasses import dataclass
from typing import Optional

import numpy as np

from .errors import ShapeError, UsageError
from .numerics import ACTIVATIONS, DTYPE, activate, activation_grad, sigmoid


@dataclass(frozen=True)
class CellKind:
    """Which cell family to build.

    ``tag`` is ``"lstm"`` or ``"rnn"``. ``activation`` applies to the naive
    RNN only. ``literal`` selects the naive RNN form ``f(W_h h + x + b)``
    where the input is added without projection (requires
    ``input_dim == hidden_dim``).
    """

    tag: str = "lstm"
    activation: Optional[str] = None
    literal: bool = False

    def __post_init__(self):
        if self.tag not in ("lstm", "rnn"):
            raise UsageError(f"unknown cell tag {self.tag!r}")
        if self.tag == "rnn":
            if self.activation is None:
                object.__setattr__(self, "activation", "tanh")
            if self.activation not in ACTIVATIONS:
                raise UsageError(f"unknown activation {self.activation!r}")
        else:
            if self.activation is not None:
                raise UsageError("activation is only meaningful for the naive RNN")
            if self.literal:
                raise UsageError("literal form is only defined for the naive RNN")

    @classmethod
    def lstm(cls):
        return cls("lstm")

    @classmethod
    def rnn(cls, activation="tanh", literal=False):
        return cls("rnn", activation, literal)

    @property
    def is_lstm(self):
        return self.tag == "lstm"

    @property
    def gates(self):
        return 4 if self.is_lstm else 1


def weight_shape(kind, input_dim, hidden_dim):
    rows = kind.gates * hidden_dim
    if kind.literal:
        return (rows, hidden_dim)
    return (rows, input_dim + hidden_dim)


@dataclass(eq=False)
class CellParams:
    kind: CellKind
    input_dim: int
    hidden_dim: int
    W: np.ndarray
    b: np.ndarray

    def __post_init__(self):
        if self.input_dim < 1 or self.hidden_dim < 1:
            raise ShapeError(f"dims must be positive, got {self.input_dim}, {self.hidden_dim}")
        if self.kind.literal and self.input_dim != self.hidden_dim:
            raise ShapeError(
                f"literal RNN needs input_dim == hidden_dim, got {self.input_dim} and {self.hidden_dim}"
            )
        want = weight_shape(self.kind, self.input_dim, self.hidden_dim)
        if self.W.shape != want:
            raise ShapeError(f"W has shape {self.W.shape}, expected {want}")
        if self.b.shape != (want[0],):
            raise ShapeError(f"b has shape {self.b.shape}, expected {(want[0],)}")

    @classmethod
    def zeros(cls, kind, input_dim, hidden_dim):
        shape = weight_shape(kind, input_dim, hidden_dim)
        return cls(kind, input_dim, hidden_dim,
                   np.zeros(shape, dtype=DTYPE), np.zeros(shape[0], dtype=DTYPE))

    def arrays(self):
        return [self.W, self.b]

    def count(self):
        return self.W.size + self.b.size

    def copy(self):
        return CellParams(self.kind, self.input_dim, self.hidden_dim, self.W.copy(), self.b.copy())


@dataclass
class CellState:
    h: np.ndarray
    c: Optional[np.ndarray] = None

    @classmethod
    def zeros(cls, kind, hidden_dim, batch=()):
        shape = (*batch, hidden_dim) if isinstance(batch, tuple) else (batch, hidden_dim)
        h = np.zeros(shape, dtype=DTYPE)
        return cls(h, np.zeros(shape, dtype=DTYPE) if kind.is_lstm else None)


@dataclass
class CellGrads:
    W: np.ndarray
    b: np.ndarray

    def arrays(self):
        return [self.W, self.b]


@dataclass
class CellTape:
    params: CellParams
    x: np.ndarray
    h_in: np.ndarray          # h_prev after any recurrent dropout
    rec_mask: Optional[np.ndarray]
    pre: np.ndarray           # pre-activations z
    act: np.ndarray           # activated gates (LSTM) or h (RNN)
    c_prev: Optional[np.ndarray] = None
    tanh_c: Optional[np.ndarray] = None


def _check_dims(p, x, s):
    if x.shape[-1] != p.input_dim:
        raise ShapeError(f"input has length {x.shape[-1]}, cell expects {p.input_dim}")
    if s.h.shape[-1] != p.hidden_dim:
        raise ShapeError(f"state h has length {s.h.shape[-1]}, cell expects {p.hidden_dim}")
    if p.kind.is_lstm:
        if s.c is None or s.c.shape != s.h.shape:
            raise ShapeError("LSTM state needs c with the same shape as h")
    elif s.c is not None:
        raise ShapeError("naive RNN state carries no c")


def cell_forward(p, x, s, rec_mask=None):
    """One time step. Returns ``(new_state, h_out, tape)``.

    ``rec_mask`` (optional) multiplies ``h_prev`` where it enters the
    transform; the carried state itself is left untouched.
    """
    x = np.asarray(x, dtype=DTYPE)
    _check_dims(p, x, s)
    H = p.hidden_dim
    h_in = s.h if rec_mask is None else s.h * rec_mask

    if p.kind.literal:
        pre = x + h_in @ p.W.T + p.b
    else:
        pre = np.concatenate([x, h_in], axis=-1) @ p.W.T + p.b

    if not p.kind.is_lstm:
        h = activate(p.kind.activation, pre)
        tape = CellTape(p, x, h_in, rec_mask, pre, h)
        return CellState(h), h, tape

    act = np.empty_like(pre)
    act[..., :3 * H] = sigmoid(pre[..., :3 * H])
    act[..., 3 * H:] = np.tanh(pre[..., 3 * H:])
    i, f, o, g = act[..., :H], act[..., H:2 * H], act[..., 2 * H:3 * H], act[..., 3 * H:]
    c = f * s.c + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    tape = CellTape(p, x, h_in, rec_mask, pre, act, s.c, tanh_c)
    return CellState(h, c), h, tape


def cell_backward(p, tape, grad_h, grad_c=None):
    """Backpropagate ``dL/dh`` (and ``dL/dc`` for LSTM) through one step.

    Returns ``(CellGrads, grad_x, grad_state)`` where ``grad_state`` holds the
    gradients with respect to the incoming ``h_prev`` and ``c_prev``.
    """
    if tape.params is not p:
        raise UsageError("tape was produced by a different cell")
    if p.kind.is_lstm and grad_c is None:
        raise UsageError("LSTM backward needs grad_c")
    if not p.kind.is_lstm and grad_c is not None:
        raise UsageError("naive RNN backward takes no grad_c")
    grad_h = np.asarray(grad_h, dtype=DTYPE)
    if grad_h.shape != tape.act.shape[:-1] + (p.hidden_dim,):
        raise ShapeError(f"grad_h has shape {grad_h.shape}, expected hidden {p.hidden_dim}")
    H = p.hidden_dim

    grad_c_prev = None
    if p.kind.is_lstm:
        act = tape.act
        i, f, o, g = act[..., :H], act[..., H:2 * H], act[..., 2 * H:3 * H], act[..., 3 * H:]
        tc = tape.tanh_c
        dc = grad_c + grad_h * o * (1.0 - tc * tc)
        dpre = np.empty_like(tape.pre)
        dpre[..., :H] = dc * g * i * (1.0 - i)
        dpre[..., H:2 * H] = dc * tape.c_prev * f * (1.0 - f)
        dpre[..., 2 * H:3 * H] = grad_h * tc * o * (1.0 - o)
        dpre[..., 3 * H:] = dc * i * (1.0 - g * g)
        grad_c_prev = dc * f
    else:
        dpre = grad_h * activation_grad(p.kind.activation, tape.pre, tape.act)

    rows = dpre.reshape(-1, dpre.shape[-1])
    db = rows.sum(axis=0)
    if p.kind.literal:
        dW = rows.T @ tape.h_in.reshape(-1, H)
        dx = dpre
        dh = dpre @ p.W
    else:
        xh = np.concatenate([tape.x, tape.h_in], axis=-1)
        dW = rows.T @ xh.reshape(-1, xh.shape[-1])
        dxh = dpre @ p.W
        dx = dxh[..., :p.input_dim]
        dh = dxh[..., p.input_dim:]
    if tape.rec_mask is not None:
        dh = dh * tape.rec_mask
    return CellGrads(dW, db), dx, CellState(dh, grad_c_prev)
