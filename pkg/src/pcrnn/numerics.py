"""Dense float64 kernels the recurrent cells are built from.

Everything accepts either a single vector ``(n,)`` or a batch of row
vectors ``(..., n)``.
"""
import numpy as np

from .errors import ShapeError, UsageError

DTYPE = np.float64

ACTIVATIONS = ("sigmoid", "tanh", "relu")


def affine(W, x, b):
    """Return ``W @ x + b`` applied to the trailing axis of ``x``."""
    W = np.asarray(W, dtype=DTYPE)
    x = np.asarray(x, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if W.ndim != 2:
        raise ShapeError(f"weight must be 2-D, got shape {W.shape}")
    if x.shape[-1] != W.shape[1]:
        raise ShapeError(f"input length {x.shape[-1]} != weight cols {W.shape[1]}")
    if b.shape != (W.shape[0],):
        raise ShapeError(f"bias length {b.shape} != weight rows {W.shape[0]}")
    return x @ W.T + b


def sigmoid(v):
    # exp of a non-positive argument only, so no overflow at either tail
    v = np.asarray(v, dtype=DTYPE)
    z = np.exp(-np.abs(v))
    return np.where(v >= 0, 1.0 / (1.0 + z), z / (1.0 + z))


def activate(kind, v):
    if kind == "sigmoid":
        return sigmoid(v)
    if kind == "tanh":
        return np.tanh(np.asarray(v, dtype=DTYPE))
    if kind == "relu":
        return np.maximum(np.asarray(v, dtype=DTYPE), 0.0)
    raise UsageError(f"unknown activation {kind!r}; expected one of {ACTIVATIONS}")


def activation_grad(kind, pre, out):
    """Derivative of ``activate(kind, pre)`` given both the input and output."""
    if kind == "sigmoid":
        return out * (1.0 - out)
    if kind == "tanh":
        return 1.0 - out * out
    if kind == "relu":
        return (pre > 0).astype(DTYPE)
    raise UsageError(f"unknown activation {kind!r}")


def hadamard(a, b):
    a = np.asarray(a, dtype=DTYPE)
    b = np.asarray(b, dtype=DTYPE)
    if a.shape != b.shape:
        raise ShapeError(f"hadamard operands differ: {a.shape} vs {b.shape}")
    return a * b


def concat(parts):
    """Join vectors along the trailing axis, preserving order."""
    if len(parts) == 0:
        raise UsageError("concat needs at least one part")
    if len(parts) == 1:
        return np.asarray(parts[0], dtype=DTYPE)
    return np.concatenate(parts, axis=-1)


def offsets(lengths):
    """Start offsets of consecutive slices with the given lengths."""
    return [0, *np.cumsum(lengths)[:-1].tolist()]


def split(v, lengths):
    """Inverse of :func:`concat` for the given part lengths."""
    v = np.asarray(v)
    if sum(lengths) != v.shape[-1]:
        raise ShapeError(f"lengths sum to {sum(lengths)}, vector has {v.shape[-1]}")
    return [v[..., o:o + n] for o, n in zip(offsets(lengths), lengths)]


def global_norm(tensors):
    """L2 norm over every entry of every tensor, as if flattened into one."""
    total = 0.0
    for t in tensors:
        t = np.asarray(t, dtype=DTYPE)
        total += float(np.dot(t.ravel(), t.ravel()))
    return float(np.sqrt(total))


def log_softmax(logits):
    logits = np.asarray(logits, dtype=DTYPE)
    shifted = logits - logits.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(logits):
    logits = np.asarray(logits, dtype=DTYPE)
    e = np.exp(logits - logits.max(axis=-1, keepdims=True))
    return e / e.sum(axis=-1, keepdims=True)
