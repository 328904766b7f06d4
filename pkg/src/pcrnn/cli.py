"""Command-line experiment runner.

    pcrnn train --config run.cfg [key=value ...]
    pcrnn eval CHECKPOINT CORPUS [--mask layer=0,cell=1]
    pcrnn mask CHECKPOINT CORPUS [--groups FILE] [--layer L] --out DIR
    pcrnn ensemble SPEC CORPUS
    pcrnn params --hidden 1950 --wide 1,2,3,4,5

Exit codes: 0 success, 1 usage/config error, 2 data error, 3 internal error.
"""
import argparse
import logging
import sys
from dataclasses import fields
from pathlib import Path

from . import analysis
from .checkpoint import load_checkpoint, save_checkpoint
from .data import Vocab, build_vocab, byte_vocab, load_ids, read_text, word_tokens
from .errors import ConfigError, DataError, PCRNError, UsageError
from .model import LMModel, ModelConfig, _coerce, evaluate, perplexity
from .prng import Rng
from .training import TrainConfig, fit_eval_shape, init_params, train, write_metrics

log = logging.getLogger("pcrnn")

DATA_KEYS = {
    "train_path": str,
    "valid_path": str,
    "test_path": str,
    "out_dir": str,
    "valid_fraction": float,
}
MODEL_KEYS = {f.name: f.type for f in fields(ModelConfig)}
TRAIN_KEYS = {f.name: f.type for f in fields(TrainConfig)}
ALL_KEYS = {**DATA_KEYS, **MODEL_KEYS, **TRAIN_KEYS}


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def parse_kv_lines(lines, source):
    out = {}
    for lineno, raw in enumerate(lines, 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"{source}:{lineno}: expected key=value, got {raw.strip()!r}")
        key, value = (s.strip() for s in line.split("=", 1))
        if key not in ALL_KEYS:
            raise ConfigError(f"{source}:{lineno}: unknown key {key!r}")
        out[key] = value
    return out


def resolve_config(path, overrides):
    values = {}
    if path is not None:
        try:
            text = Path(path).read_text(encoding="utf-8")
        except OSError as e:
            raise ConfigError(f"cannot read config {path}: {e.strerror}") from e
        values.update(parse_kv_lines(text.splitlines(), path))
    values.update(parse_kv_lines(overrides, "command line"))
    typed = {k: _coerce(ALL_KEYS[k], v, k) for k, v in values.items()}
    for key in ("train_path", "out_dir"):
        if key not in typed:
            raise ConfigError(f"missing required key {key!r}")
    return typed


def _split(typed, keys):
    return {k: v for k, v in typed.items() if k in keys}


def cmd_train(args):
    typed = resolve_config(args.config, args.overrides)
    if args.threads is not None:
        typed["threads"] = args.threads
    out = Path(typed["out_dir"])
    tokenize = typed.get("tokenize", "word")
    eos = typed.get("eos", True)

    raw = read_text(typed["train_path"])
    if tokenize == "byte":
        vocab = byte_vocab()
    else:
        vocab = build_vocab(word_tokens(raw.decode("utf-8"), eos),
                            typed.get("vocab_size", 10000), eos=eos)
    model_kw = _split(typed, MODEL_KEYS)
    model_kw["vocab_size"] = len(vocab)
    mcfg = ModelConfig(**model_kw)
    tcfg = TrainConfig(**_split(typed, TRAIN_KEYS))

    train_ids = load_ids(typed["train_path"], tokenize, vocab, eos)
    if "valid_path" in typed:
        valid_ids = load_ids(typed["valid_path"], tokenize, vocab, eos)
    else:
        frac = typed.get("valid_fraction", 0.05)
        cut = len(train_ids) - max(2, int(len(train_ids) * frac))
        train_ids, valid_ids = train_ids[:cut], train_ids[cut:]
    test_ids = load_ids(typed["test_path"], tokenize, vocab, eos) if "test_path" in typed else None

    out.mkdir(parents=True, exist_ok=True)
    resolved = {**typed, **dict(mcfg.to_items()), **dict(tcfg.to_items())}
    with open(out / "resolved-config.txt", "w", encoding="utf-8") as fh:
        for k in sorted(resolved):
            v = resolved[k]
            fh.write(f"{k}={str(v).lower() if isinstance(v, bool) else v}\n")
    if tokenize == "word":
        vocab.save(out / "vocab.txt")

    rng = Rng(tcfg.seed)
    model = init_params(LMModel(mcfg), tcfg.init_range, rng)
    history = []

    def progress(row):
        history.append(row)
        write_metrics(history, out / "metrics.csv")
        print(f"epoch {row.epoch} lr {row.lr:.6g} train_ppl {row.train_ppl:.4f} "
              f"valid_ppl {row.valid_ppl:.4f}", flush=True)

    def on_best(m, epoch):
        save_checkpoint(m, out / "best.ckpt", epoch, rng.get_state())

    model, _ = train(model, train_ids, valid_ids, tcfg, rng, progress, on_best)
    save_checkpoint(model, out / "final.ckpt", tcfg.total_epochs, rng.get_state())
    if test_ids is not None:
        b, t = fit_eval_shape(len(test_ids), tcfg.batch, tcfg.unroll)
        print(f"test_ppl {perplexity(evaluate(model, test_ids, b, t, threads=tcfg.threads)):.6f}")
    return 0


def _load_for_eval(ckpt_path, vocab_path):
    model = load_checkpoint(ckpt_path).model
    cfg = model.config
    if cfg.tokenize == "byte":
        vocab = byte_vocab()
    else:
        vocab = Vocab.load(vocab_path or Path(ckpt_path).parent / "vocab.txt")
    if len(vocab) != cfg.vocab_size:
        raise ConfigError(f"vocabulary has {len(vocab)} entries, checkpoint expects {cfg.vocab_size}")
    return model, vocab


def _corpus(path, model, vocab, batch, unroll):
    ids = load_ids(path, model.config.tokenize, vocab, model.config.eos)
    b, t = fit_eval_shape(len(ids), batch, unroll)
    return ids, b, t


def parse_mask(specs, n_layers):
    """``layer=L,cell=C`` entries (``layer`` optional: all layers) into a layer->cells dict."""
    mask = {}
    for spec in specs or ():
        parts = {}
        for item in spec.split(","):
            if "=" not in item:
                raise UsageError(f"bad mask {spec!r}; expected layer=L,cell=C")
            k, v = item.split("=", 1)
            if k.strip() not in ("layer", "cell"):
                raise UsageError(f"bad mask key {k!r} in {spec!r}")
            try:
                parts[k.strip()] = int(v)
            except ValueError:
                raise UsageError(f"bad mask value {v!r} in {spec!r}") from None
        if "cell" not in parts:
            raise UsageError(f"mask {spec!r} names no cell")
        layers = [parts["layer"]] if "layer" in parts else range(n_layers)
        for li in layers:
            mask.setdefault(li, set()).add(parts["cell"])
    return mask or None


def cmd_eval(args):
    model, vocab = _load_for_eval(args.checkpoint, args.vocab)
    ids, b, t = _corpus(args.corpus, model, vocab, args.batch, args.unroll)
    mask = parse_mask(args.mask, len(model.layers))
    nll = evaluate(model, ids, b, t, mask, args.threads)
    print(f"perplexity {perplexity(nll):.6f}")
    return 0


def cmd_mask(args):
    model, vocab = _load_for_eval(args.checkpoint, args.vocab)
    ids, b, t = _corpus(args.corpus, model, vocab, args.batch, args.unroll)
    groups = analysis.read_groups(args.groups) if args.groups else None
    report = analysis.mask_sweep(model, ids, b, t, groups, vocab, args.layer, args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    report.write_csv(out / "mask_report.csv")
    for name, vals in zip(report.rows, report.values):
        print(name, " ".join(f"{v:.6f}" for v in vals))
    return 0


def cmd_ensemble(args):
    paths = analysis.read_ensemble_spec(args.spec)
    base = Path(args.spec).parent
    members = []
    vocab = None
    for p in paths:
        p = Path(p) if Path(p).is_absolute() else base / p
        model, v = _load_for_eval(p, args.vocab)
        if vocab is not None and v.tokens != vocab.tokens:
            raise ConfigError(f"checkpoint {p} uses a different vocabulary")
        vocab = v
        members.append(model)
    ids, b, t = _corpus(args.corpus, members[0], vocab, args.batch, args.unroll)
    print(f"perplexity {analysis.ensemble_eval(members, ids, b, t, args.threads):.6f}")
    return 0


def cmd_params(args):
    try:
        wides = [int(w) for w in args.wide.split(",")]
    except ValueError:
        raise UsageError(f"--wide must be a comma list of integers, got {args.wide!r}") from None
    configs = [(args.hidden, n, args.cell, args.routing) for n in wides]
    rows = analysis.param_report(configs, literal=args.literal, input_dim=args.input_dim)
    analysis.write_param_report(rows, sys.stdout)
    return 0


def build_parser():
    p = _Parser(prog="pcrnn", description="Parallel-cell recurrent language models.")
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    t = sub.add_parser("train", help="train a language model from a key=value config")
    t.add_argument("--config", help="flat key=value file")
    t.add_argument("--threads", type=int)
    t.add_argument("overrides", nargs="*", metavar="key=value")
    t.set_defaults(func=cmd_train)

    def eval_args(q):
        q.add_argument("--vocab", help="vocabulary file (word models; default: next to checkpoint)")
        q.add_argument("--batch", type=int, default=20)
        q.add_argument("--unroll", type=int, default=35)
        q.add_argument("--threads", type=int, default=1)

    e = sub.add_parser("eval", help="test perplexity of a checkpoint")
    e.add_argument("checkpoint")
    e.add_argument("corpus")
    e.add_argument("--mask", action="append", metavar="layer=L,cell=C")
    eval_args(e)
    e.set_defaults(func=cmd_eval)

    m = sub.add_parser("mask", help="mask each cell in turn and report perplexity")
    m.add_argument("checkpoint")
    m.add_argument("corpus")
    m.add_argument("--groups", help="file of 'name: tok tok ...' lines")
    m.add_argument("--layer", type=int, action="append", help="layer(s) to mask (default all)")
    m.add_argument("--out", default=".")
    eval_args(m)
    m.set_defaults(func=cmd_mask)

    s = sub.add_parser("ensemble", help="perplexity of averaged member distributions")
    s.add_argument("spec", help="file listing one checkpoint path per line")
    s.add_argument("corpus")
    eval_args(s)
    s.set_defaults(func=cmd_ensemble)

    c = sub.add_parser("params", help="exact and closed-form parameter counts")
    c.add_argument("--hidden", type=int, required=True)
    c.add_argument("--wide", required=True, help="comma list, e.g. 1,2,3")
    c.add_argument("--cell", choices=("lstm", "rnn"), default="lstm")
    c.add_argument("--routing", choices=("split", "full"), default="split")
    c.add_argument("--literal", action="store_true", help="naive RNN without input projection")
    c.add_argument("--input-dim", type=int)
    c.set_defaults(func=cmd_params)
    return p


def main(argv=None):
    try:
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                            format="%(levelname)s %(name)s: %(message)s")
        return args.func(args)
    except (UsageError, ConfigError) as e:
        print(f"error: {e}", file=sys.stderr)
        return 1
    except DataError as e:
        print(f"error: {e}", file=sys.stderr)
        return 2
    except PCRNError as e:
        print(f"internal error: {e}", file=sys.stderr)
        return 3


if __name__ == "__main__":
    sys.exit(main())
