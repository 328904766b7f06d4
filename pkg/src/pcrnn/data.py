"""Corpus reading, vocabulary, and contiguous batching for truncated BPTT."""
from collections import Counter
from dataclasses import dataclass, field
from pathlib import Path
from typing import Dict, List, Optional

import numpy as np

from .errors import DataError

UNK = "<unk>"
EOS = "<eos>"


@dataclass
class Vocab:
    tokens: List[str]
    index: Dict[str, int] = field(default_factory=dict)
    unk_id: int = 0
    eos_id: Optional[int] = None

    def __post_init__(self):
        if not self.index:
            self.index = {t: i for i, t in enumerate(self.tokens)}
        if len(self.index) != len(self.tokens):
            raise DataError("vocabulary contains duplicate tokens")
        if UNK not in self.index:
            raise DataError(f"vocabulary has no {UNK} entry")
        self.unk_id = self.index[UNK]
        self.eos_id = self.index.get(EOS)

    def __len__(self):
        return len(self.tokens)

    def __contains__(self, token):
        return token in self.index

    def save(self, path):
        Path(path).write_text("".join(t + "\n" for t in self.tokens), encoding="utf-8")

    @classmethod
    def load(cls, path):
        try:
            lines = Path(path).read_text(encoding="utf-8").split("\n")
        except OSError as e:
            raise DataError(f"cannot read vocabulary {path}: {e}") from e
        if lines and lines[-1] == "":
            lines.pop()
        return cls(lines)


def build_vocab(tokens, max_size, eos=False):
    """Most frequent tokens plus the reserved ``<unk>`` (and ``<eos>``).

    Reserved entries take the first ids; the rest follow by descending
    count, ties broken lexicographically. Occurrences of the reserved symbols
    in the corpus are not counted as ordinary words.
    """
    reserved = [UNK] + ([EOS] if eos else [])
    if max_size < len(reserved):
        raise DataError(f"max_size {max_size} leaves no room for reserved tokens {reserved}")
    if len(tokens) == 0:
        raise DataError("cannot build a vocabulary from an empty corpus")
    counts = Counter(t for t in tokens if t not in reserved)
    ranked = sorted(counts.items(), key=lambda kv: (-kv[1], kv[0]))
    keep = [t for t, _ in ranked[:max_size - len(reserved)]]
    return Vocab(reserved + keep)


def byte_vocab():
    """Fixed vocabulary for byte-level models: ids 0..255 are the bytes."""
    return Vocab([f"<{b:02x}>" for b in range(256)] + [UNK])


def encode(tokens, vocab):
    get, unk = vocab.index.get, vocab.unk_id
    return np.fromiter((get(t, unk) for t in tokens), dtype=np.int64, count=len(tokens))


def decode(ids, vocab):
    return [vocab.tokens[i] for i in ids]


def word_tokens(text, eos=True):
    """Whitespace tokens, with ``<eos>`` closing each non-empty line."""
    out = []
    for line in text.splitlines():
        words = line.split()
        if not words:
            continue
        out.extend(words)
        if eos:
            out.append(EOS)
    return out


def read_text(path):
    try:
        return Path(path).read_bytes()
    except OSError as e:
        raise DataError(f"cannot read corpus {path}: {e.strerror}") from e


def load_ids(path, tokenize, vocab=None, eos=True):
    """Read a corpus file as ids. Word mode needs ``vocab``."""
    raw = read_text(path)
    if tokenize == "byte":
        return np.frombuffer(raw, dtype=np.uint8).astype(np.int64)
    try:
        text = raw.decode("utf-8")
    except UnicodeDecodeError as e:
        raise DataError(f"corpus {path} is not UTF-8: {e}") from e
    return encode(word_tokens(text, eos), vocab)


@dataclass
class BatchStream:
    """``B`` contiguous token streams cut into ``T``-step windows.

    Row ``b`` covers one contiguous span of the corpus, so the state left by
    window ``k`` is the right initial state for window ``k + 1``. The last
    window of an epoch may be shorter than ``T``.
    """

    rows: np.ndarray
    unroll: int

    @property
    def batch(self):
        return self.rows.shape[0]

    def __len__(self):
        return -(-(self.rows.shape[1] - 1) // self.unroll)

    def __iter__(self):
        n = self.rows.shape[1] - 1
        for start in range(0, n, self.unroll):
            stop = min(start + self.unroll, n)
            yield self.rows[:, start:stop], self.rows[:, start + 1:stop + 1]

    @property
    def positions(self):
        return self.batch * (self.rows.shape[1] - 1)


def make_batches(ids, batch, unroll):
    ids = np.asarray(ids, dtype=np.int64)
    if batch < 1 or unroll < 1:
        raise DataError(f"batch and unroll must be positive, got {batch}, {unroll}")
    if len(ids) < batch * (unroll + 1):
        raise DataError(
            f"corpus has {len(ids)} tokens; batch={batch} x (unroll+1)={unroll + 1} "
            f"needs at least {batch * (unroll + 1)}")
    per_row = len(ids) // batch
    return BatchStream(ids[:batch * per_row].reshape(batch, per_row), unroll)
