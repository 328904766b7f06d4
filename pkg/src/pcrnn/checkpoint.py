"""Binary checkpoint format.

Layout (all integers little-endian)::

    b"PCRN"                      magic
    u32  version                 currently 1
    u32  n, n bytes              UTF-8 "key=value" lines: model config, epoch, rng state
    u32  tensor count
    per tensor: u32 rank, rank x u32 dims, row-major float64 LE data
    u32  has_state (0/1); if 1, the per-cell h (and c) tensors of the final
         ModelState follow in layer/cell order, encoded as above

Parameter tensors are written in :meth:`LMModel.named_arrays` order. The file
contains nothing time- or host-dependent, so equal models produce equal bytes.
"""
import io
import struct
from dataclasses import dataclass
from typing import Optional, Tuple

import numpy as np

from .cells import CellState
from .errors import CheckpointDimensionError, DataError, MagicError, TruncatedError, VersionError
from .model import LMModel, ModelConfig, ModelState

MAGIC = b"PCRN"
VERSION = 1


@dataclass
class Checkpoint:
    model: LMModel
    epoch: int = 0
    rng_state: Optional[Tuple[int, int]] = None
    state: Optional[ModelState] = None


def _config_block(model, epoch, rng_state):
    lines = [f"{k}={_fmt(v)}" for k, v in model.config.to_items()]
    lines.append(f"epoch={epoch}")
    if rng_state is not None:
        lines.append(f"rng_state={rng_state[0]}")
        lines.append(f"rng_inc={rng_state[1]}")
    return "\n".join(lines).encode("utf-8")


def _fmt(v):
    if isinstance(v, bool):
        return "true" if v else "false"
    return str(v)


def _write_tensor(out, a):
    a = np.ascontiguousarray(a, dtype="<f8")
    out.write(struct.pack(f"<I{a.ndim}I", a.ndim, *a.shape))
    out.write(a.tobytes())


def to_bytes(model, epoch=0, rng_state=None, state=None):
    out = io.BytesIO()
    out.write(MAGIC)
    out.write(struct.pack("<I", VERSION))
    block = _config_block(model, epoch, rng_state)
    out.write(struct.pack("<I", len(block)))
    out.write(block)
    arrays = model.arrays()
    out.write(struct.pack("<I", len(arrays)))
    for a in arrays:
        _write_tensor(out, a)
    out.write(struct.pack("<I", 0 if state is None else 1))
    if state is not None:
        for layer in state.layers:
            for s in layer:
                _write_tensor(out, s.h)
                if s.c is not None:
                    _write_tensor(out, s.c)
    return out.getvalue()


def save_checkpoint(model, path, epoch=0, rng_state=None, state=None):
    data = to_bytes(model, epoch, rng_state, state)
    with open(path, "wb") as fh:
        fh.write(data)


class _Reader:
    def __init__(self, data):
        self.data = data
        self.pos = 0

    def take(self, n, what):
        if self.pos + n > len(self.data):
            raise TruncatedError(
                f"checkpoint truncated while reading {what} "
                f"(need {n} bytes at offset {self.pos}, file has {len(self.data)})")
        chunk = self.data[self.pos:self.pos + n]
        self.pos += n
        return chunk

    def u32(self, what):
        return struct.unpack("<I", self.take(4, what))[0]

    def tensor(self, what):
        rank = self.u32(f"{what} rank")
        dims = struct.unpack(f"<{rank}I", self.take(4 * rank, f"{what} dims"))
        n = int(np.prod(dims, dtype=np.int64))
        raw = self.take(8 * n, f"{what} data")
        return np.frombuffer(raw, dtype="<f8").reshape(dims).astype(np.float64)


def from_bytes(data, expected=None):
    """Decode a checkpoint; ``expected`` (a ModelConfig) adds a compatibility check."""
    r = _Reader(data)
    magic = r.take(4, "magic")
    if magic != MAGIC:
        raise MagicError(f"not a checkpoint: magic {magic!r}, expected {MAGIC!r}")
    version = r.u32("version")
    if version != VERSION:
        raise VersionError(f"checkpoint format version {version}, this library reads {VERSION}")
    block = r.take(r.u32("config length"), "config block").decode("utf-8")
    items = dict(line.split("=", 1) for line in block.split("\n") if line)
    epoch = int(items.pop("epoch", 0))
    rng_state = None
    if "rng_state" in items:
        rng_state = (int(items.pop("rng_state")), int(items.pop("rng_inc")))
    config = ModelConfig.from_items(items)

    model = LMModel(config)
    reference = LMModel(expected) if expected is not None else model
    count = r.u32("tensor count")
    expect = [(name, ref.shape) for name, ref in reference.named_arrays()]
    tensors = []
    for i in range(count):
        name = expect[i][0] if i < len(expect) else f"tensor {i}"
        t = r.tensor(name)
        if i < len(expect) and t.shape != expect[i][1]:
            raise CheckpointDimensionError(
                f"tensor {name} has shape {t.shape}, expected {expect[i][1]}")
        tensors.append(t)
    if count != len(expect):
        name = expect[count][0] if count < len(expect) else f"tensor {len(expect)}"
        raise CheckpointDimensionError(
            f"checkpoint holds {count} tensors, expected {len(expect)} (first mismatch: {name})")
    for (_, dst), t in zip(model.named_arrays(), tensors):
        if dst.shape != t.shape:
            raise CheckpointDimensionError(f"stored config disagrees with tensor shape {t.shape}")
        dst[...] = t

    state = None
    if r.u32("state flag"):
        state = ModelState.zeros(model, 1)
        for li, layer in enumerate(state.layers):
            for ci in range(len(layer)):
                h = r.tensor(f"state layer{li}.cell{ci}.h")
                c = r.tensor(f"state layer{li}.cell{ci}.c") if config.kind.is_lstm else None
                layer[ci] = CellState(h, c)
    if r.pos != len(data):
        raise DataError(f"checkpoint has {len(data) - r.pos} trailing bytes")
    return Checkpoint(model, epoch, rng_state, state)


def load_checkpoint(path, expected=None):
    try:
        with open(path, "rb") as fh:
            data = fh.read()
    except OSError as e:
        raise DataError(f"cannot read checkpoint {path}: {e.strerror}") from e
    return from_bytes(data, expected)
