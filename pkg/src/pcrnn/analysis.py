"""Cell-masking sweeps, model averaging, and parameter-count tables."""
import csv
import logging
import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence

import numpy as np

from .cells import CellKind
from .errors import ConfigError, DataError
from .model import perplexity, score_tokens
from .pc_layer import RoutingMode, build_layer, closed_form_lstm, closed_form_rnn, count_params

log = logging.getLogger(__name__)


@dataclass
class MaskReport:
    """Perplexity per masked configuration (rows) and token group (columns)."""

    columns: List[str]
    rows: List[str] = field(default_factory=list)
    values: List[List[float]] = field(default_factory=list)

    def value(self, row, column="all"):
        return self.values[self.rows.index(row)][self.columns.index(column)]

    def write_csv(self, path):
        with open(path, "w", encoding="utf-8", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["mask", *self.columns])
            for name, vals in zip(self.rows, self.values):
                w.writerow([name, *(repr(v) for v in vals)])


def mask_label(layers, cell):
    return "none" if cell is None else "layers=" + "+".join(map(str, layers)) + f";cell={cell}"


def _group_ids(groups, vocab):
    out = {}
    for name, words in groups.items():
        ids = []
        for w in words:
            if vocab is None or w not in vocab:
                log.warning("group %s: token %r not in vocabulary, skipped", name, w)
                continue
            ids.append(vocab.index[w])
        out[name] = np.array(sorted(set(ids)), dtype=np.int64)
    return out


def mask_sweep(model, ids, batch, unroll, groups=None, vocab=None, layers=None, threads=1):
    """Evaluate with each single cell masked in turn.

    Row ``none`` is the unmasked model; row ``k`` masks cell ``k`` in every
    layer listed in ``layers`` (default: all layers). ``groups`` maps a name to
    a list of tokens; each adds a column holding the perplexity over
    positions whose target token is in the group.
    """
    n_layers = len(model.layers)
    layers = list(range(n_layers)) if layers is None else sorted(set(layers))
    for li in layers:
        if not 0 <= li < n_layers:
            raise ConfigError(f"layer {li} outside [0, {n_layers})")
    gids = _group_ids(groups or {}, vocab)
    report = MaskReport(["all", *gids])
    wide = model.config.wide
    for cell in [None, *range(wide)]:
        mask = None if cell is None else {li: {cell} for li in layers}
        logp, targets = score_tokens(model, ids, batch, unroll, mask, threads)
        vals = [perplexity(-logp.mean())]
        for name, g in gids.items():
            sel = np.isin(targets, g)
            vals.append(perplexity(-logp[sel].mean()) if sel.any() else math.nan)
        report.rows.append(mask_label(layers, cell))
        report.values.append(vals)
    return report


def read_groups(path):
    """Parse ``name: tok tok ...`` lines; blank lines and ``#`` comments are ignored."""
    groups = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.strip()
            if not line or line.startswith("#"):
                continue
            if ":" not in line:
                raise DataError(f"{path}:{lineno}: expected 'name: tokens...'")
            name, words = line.split(":", 1)
            groups[name.strip()] = words.split()
    return groups


def ensemble_logprobs(member_logps):
    """Log of the mean of member probabilities, per position.

    Uses ``max + log(sum(exp(x - max))) - log(k)`` so one member returns its
    own log-probabilities unchanged.
    """
    stack = np.stack(member_logps)
    k = stack.shape[0]
    top = stack.max(axis=0)
    mixed = top + np.log(np.exp(stack - top).sum(axis=0))
    return mixed if k == 1 else mixed - math.log(k)


def ensemble_eval(models, ids, batch, unroll, threads=1):
    """Perplexity of the arithmetic mean of the members' predicted distributions."""
    models = list(models)
    if not models:
        raise ConfigError("ensemble needs at least one model")
    V = models[0].config.vocab_size
    tok = models[0].config.tokenize
    for m in models[1:]:
        if m.config.vocab_size != V or m.config.tokenize != tok:
            raise ConfigError(
                f"ensemble members disagree on vocabulary: {V}/{tok} vs "
                f"{m.config.vocab_size}/{m.config.tokenize}")
    logps = [score_tokens(m, ids, batch, unroll, None, threads)[0] for m in models]
    return perplexity(-ensemble_logprobs(logps).mean())


def read_ensemble_spec(path):
    """One checkpoint path per line; blank lines and ``#`` comments are skipped."""
    paths = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            s = line.strip()
            if not s or s.startswith("#"):
                continue
            if len(s.split()) != 1:
                raise DataError(f"{path}: line {lineno}: expected a single checkpoint path")
            paths.append(s)
    if not paths:
        raise DataError(f"{path}: no checkpoints listed")
    return paths


@dataclass
class ParamRow:
    hidden: int
    wide: int
    cell: str
    routing: str
    input_dim: int
    exact: int
    closed_form: Optional[int]

    @property
    def difference(self):
        return None if self.closed_form is None else self.exact - self.closed_form


def param_report(configs: Sequence[tuple], literal=False, input_dim=None):
    """Exact layer parameter counts next to the closed forms.

    Each config is ``(m, n, cell, routing)``. The closed form applies when the
    layer input has ``m`` entries and routing is split (or ``n == 1``); for the
    naive RNN it is the literal form without an input projection.
    """
    rows = []
    for m, n, cell, routing in configs:
        kind = CellKind.lstm() if cell == "lstm" else CellKind.rnn(literal=literal)
        d = m if input_dim is None else input_dim
        layer = build_layer(kind, d, m, n, RoutingMode(routing))
        closed = None
        if d == m and (routing == "split" or n == 1):
            if cell == "lstm":
                closed = closed_form_lstm(m, n)
            elif literal:
                closed = closed_form_rnn(m, n)
        rows.append(ParamRow(m, n, cell, RoutingMode(routing).value, d, count_params(layer), closed))
    return rows


def write_param_report(rows, fh):
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["hidden", "wide", "cell", "routing", "input_dim", "exact", "closed_form",
                "difference", "millions"])
    for r in rows:
        w.writerow([r.hidden, r.wide, r.cell, r.routing, r.input_dim, r.exact,
                    "" if r.closed_form is None else r.closed_form,
                    "" if r.difference is None else r.difference,
                    f"{r.exact / 1e6:.1f}"])
