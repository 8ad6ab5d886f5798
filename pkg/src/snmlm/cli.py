"""Command-line pipeline: build-vocab, count, train, eval, interpolate, inspect.

Settings are layered: built-in defaults < ``--config`` JSON file <
environment variables (paths only) < command-line flags.  Exit status is
0 on success, 1 on a runtime failure (bad input, IO, unknown key) and 2 on
a usage error.
"""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from dataclasses import dataclass, field, fields

from .adjustment import DEFAULT_BITS, DEFAULT_SEED, MetafeatureConfig
from .corpus import build_vocabulary, oov_rate, read_corpus, read_vocabulary, tokenize_corpus, write_vocabulary
from .counts import count_corpus, read_counts
from .errors import ConfigError, InputError, SnmError
from .evaluation import (
    EvalReport, ProbabilityStream, interpolate, optimize_weights, perplexity_of, token_probabilities,
)
from .features import EMPTY_KEY, load_templates
from .model import SnmModel, build_model
from .training import TrainerConfig, train

log = logging.getLogger("snmlm")

ENV_PATHS = {
    "corpus": "SNM_CORPUS",
    "vocab": "SNM_VOCAB",
    "counts": "SNM_COUNTS",
    "model": "SNM_MODEL",
    "test": "SNM_TEST",
    "templates": "SNM_TEMPLATES",
}

MF_FLAGS = tuple(MetafeatureConfig().to_dict())


class UsageError(Exception):
    pass


@dataclass
class PipelineConfig:
    corpus: str | None = None
    vocab: str | None = None
    counts: str | None = None
    model: str | None = None
    test: str | None = None
    streams: list[str] = field(default_factory=list)
    templates: str = "snm5"
    min_count: int = 3
    bits: int = DEFAULT_BITS
    seed: int = DEFAULT_SEED
    mf_config: dict = field(default_factory=dict)
    learning_rate: float = TrainerConfig.learning_rate
    epochs: int = TrainerConfig.epochs
    leave_one_out: bool = TrainerConfig.leave_one_out
    shuffle_seed: int = TrainerConfig.shuffle_seed
    deterministic: bool = False
    workers: int | None = None
    log_every: int = TrainerConfig.log_every
    checkpoint: str | None = None

    def trainer(self) -> TrainerConfig:
        return TrainerConfig(
            learning_rate=self.learning_rate, epochs=self.epochs, leave_one_out=self.leave_one_out,
            shuffle_seed=self.shuffle_seed, deterministic=self.deterministic, workers=self.workers,
            log_every=self.log_every, checkpoint_path=self.checkpoint,
        )

    def metafeatures(self) -> MetafeatureConfig:
        return MetafeatureConfig.from_dict(self.mf_config)

    def require(self, *names: str) -> None:
        missing = [n for n in names if getattr(self, n) in (None, "", [])]
        if missing:
            flags = ", ".join("--" + n.replace("_", "-") for n in missing)
            raise UsageError(f"missing required setting(s): {flags}")


def resolve_config(args: argparse.Namespace, environ=os.environ) -> tuple[PipelineConfig, dict]:
    """Merge config file, environment and flags (later wins).

    Returns the config and the subcommand-only options (query, weights, ...).
    """
    values: dict = {}
    if getattr(args, "config", None):
        try:
            with open(args.config, encoding="utf-8") as fh:
                from_file = json.load(fh)
        except OSError as exc:
            raise InputError(f"cannot read config {args.config}: {exc}") from exc
        except json.JSONDecodeError as exc:
            raise UsageError(f"config {args.config} is not valid JSON: {exc}") from exc
        if not isinstance(from_file, dict):
            raise UsageError(f"config {args.config} must hold a JSON object")
        stray = set(from_file) - {f.name for f in fields(PipelineConfig)} - set(vars(args))
        if stray:
            raise UsageError(f"unknown settings in {args.config}: {sorted(stray)}")
        values.update(from_file)
    for name, var in ENV_PATHS.items():
        if environ.get(var):
            values[name] = environ[var]
    flags = {k: v for k, v in vars(args).items() if v is not None and k not in ("command", "config", "func")}
    mf = dict(values.get("mf_config", {}))
    for name in MF_FLAGS:
        if name in flags:
            mf[name] = flags.pop(name)
    values.update(flags)
    values["mf_config"] = mf
    known = {f.name for f in fields(PipelineConfig)}
    unknown = set(values) - known
    return PipelineConfig(**{k: v for k, v in values.items() if k in known}), {
        k: values[k] for k in unknown
    }


# -- subcommands --------------------------------------------------------------


def cmd_build_vocab(cfg: PipelineConfig, extra: dict, out) -> int:
    cfg.require("corpus", "vocab")
    if cfg.min_count < 1:
        raise UsageError("--min-count must be >= 1")
    vocab = build_vocabulary(read_corpus(cfg.corpus), cfg.min_count)
    write_vocabulary(vocab, cfg.vocab)
    print(f"vocabulary: {len(vocab)} entries -> {cfg.vocab}", file=out)
    return 0


def _training_data(cfg: PipelineConfig):
    vocab = read_vocabulary(cfg.vocab)
    templates = load_templates(cfg.templates)
    sentences = tokenize_corpus(read_corpus(cfg.corpus), vocab)
    store, events = count_corpus(sentences, templates, vocab)
    return vocab, templates, store, events


def cmd_count(cfg: PipelineConfig, extra: dict, out) -> int:
    cfg.require("corpus", "vocab", "counts")
    _, _, store, events = _training_data(cfg)
    store.write(cfg.counts)
    print(f"counts: {store.n_features} features, {store.n_pairs} pairs, {len(events)} events -> {cfg.counts}",
          file=out)
    return 0


def cmd_train(cfg: PipelineConfig, extra: dict, out) -> int:
    cfg.require("corpus", "vocab", "model")
    trainer = cfg.trainer()
    vocab, templates, store, events = _training_data(cfg)
    if cfg.counts:
        # the aggregated update is only valid on the events the counts came from
        if read_counts(cfg.counts, vocab) != store:
            raise InputError(f"counts file {cfg.counts} was not built from {cfg.corpus} with these templates")
    model = build_model(store, templates, cfg.metafeatures(), cfg.bits, cfg.seed)
    trained = train(events, model, trainer)
    trained.save(cfg.model)
    print(f"model: {store.n_features} features, 2^{cfg.bits} weights -> {cfg.model}", file=out)
    return 0


def cmd_eval(cfg: PipelineConfig, extra: dict, out) -> int:
    cfg.require("model", "test")
    model = SnmModel.load(cfg.model)
    test = tokenize_corpus(read_corpus(cfg.test), model.vocab)
    probs, flagged = token_probabilities(model, test)
    report = EvalReport(perplexity_of(probs), len(probs), oov_rate(test), int(flagged.sum()))
    if extra.get("stream_out"):
        ProbabilityStream(probs, os.path.basename(cfg.model)).save(extra["stream_out"])
    out.write(report.to_text())
    print(report.summary_line(), file=out)
    return 0


def cmd_interpolate(cfg: PipelineConfig, extra: dict, out) -> int:
    cfg.require("streams")
    streams = [ProbabilityStream.load(p) for p in cfg.streams]
    weights = extra.get("weights")
    if weights is None:
        dev = [ProbabilityStream.load(p) for p in extra["dev_streams"]] if extra.get("dev_streams") else streams
        if len(dev) != len(streams):
            raise UsageError("--dev-streams must list one stream per --streams entry")
        fit = optimize_weights(dev)
        weights = fit.weights.tolist()
        print(f"weights: {' '.join(f'{w:.6f}' for w in weights)} (EM, {fit.iterations} iterations"
              f"{', degenerate' if fit.degenerate else ''})", file=out)
    elif len(weights) != len(streams):
        raise UsageError("--weights needs one value per stream")
    report = interpolate(streams, weights)
    out.write(report.to_text())
    print(report.summary_line(), file=out)
    return 0


def cmd_inspect(cfg: PipelineConfig, extra: dict, out) -> int:
    cfg.require("model")
    query = extra.get("query")
    if not query:
        raise UsageError("inspect needs a feature key or metafeature key")
    model = SnmModel.load(cfg.model)
    lines = []
    if query.startswith("mf|"):
        elements = tuple(query.split("|")[1:])
        slot = model.table.slot(elements)
        lines.append(f"metafeature {query}")
        lines.append(f"slot {slot} weight {float(model.table.weights[slot])!r}")
    else:
        c = model.counts
        i = c.get_id(query)
        if i < 0:
            print(f"not found: feature {query!r}", file=sys.stderr)
            return 1
        targets, counts = c.row(i)
        lines.append(f"feature {query} id {i} type {c.types[i]}")
        lines.append(f"total {c.total(i)} targets {len(targets)} row_sum {float(model.row_sums[i])!r}")
        target = extra.get("target_word")
        if target is None:
            for t, n in zip(targets.tolist(), counts.tolist()):
                lines.append(f"  {model.vocab.words[t]}\t{n}\tM={model.entry(i, t)!r}")
        else:
            if target not in model.vocab:
                print(f"not found: target {target!r} not in vocabulary", file=sys.stderr)
                return 1
            j = model.vocab.id(target)
            n = c.count(i, j)
            if n == 0:
                print(f"not found: pair ({query!r}, {target!r}) has no count", file=sys.stderr)
                return 1
            lines.append(f"target {target} id {j} count {n}")
            for key, weight, slot, value in model.adjustment_breakdown(i, j):
                lines.append(f"  {key}\tweight={weight!r}\tslot={slot}\ttheta={value!r}")
            lines.append(f"A {model.adjustment(i, j)!r}")
            lines.append(f"M {model.entry(i, j)!r}")
    out.write("\n".join(lines) + "\n")
    return 0


COMMANDS = {
    "build-vocab": cmd_build_vocab,
    "count": cmd_count,
    "train": cmd_train,
    "eval": cmd_eval,
    "interpolate": cmd_interpolate,
    "inspect": cmd_inspect,
}


# -- argument parsing -----------------------------------------------------------


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(f"{self.prog}: {message}")


def _bool_flag(p, name: str, help: str) -> None:
    p.add_argument(f"--{name}", dest=name.replace("-", "_"), action=argparse.BooleanOptionalAction,
                   default=None, help=help)


def build_parser() -> argparse.ArgumentParser:
    common = _Parser(add_help=False)
    common.add_argument("--config", help="JSON file with settings (flags override it)")
    common.add_argument("--log-level", default=None, help="logging level (default WARNING)")
    for name in ("corpus", "vocab", "counts", "model", "test"):
        common.add_argument(f"--{name}", default=None, help=f"{name} path (env {ENV_PATHS[name]})")
    common.add_argument("--templates", default=None,
                        help="preset name (snm5, snm5-skip, snm10-skip) or template file")

    parser = _Parser(prog="snm", description="Sparse non-negative matrix language models.")
    sub = parser.add_subparsers(dest="command", parser_class=_Parser)
    sub.required = True

    p = sub.add_parser("build-vocab", parents=[common], help="build a vocabulary file")
    p.add_argument("--min-count", type=int, default=None)

    sub.add_parser("count", parents=[common], help="accumulate feature-target counts")

    p = sub.add_parser("train", parents=[common], help="train the metafeature weights")
    p.add_argument("--bits", type=int, default=None, help="weight table size exponent")
    p.add_argument("--seed", type=lambda s: int(s, 0), default=None, help="hash seed")
    for name in MF_FLAGS:
        _bool_flag(p, name.replace("_", "-"), "enable/disable this metafeature element")
    p.add_argument("--learning-rate", type=float, default=None)
    p.add_argument("--epochs", type=int, default=None)
    _bool_flag(p, "leave-one-out", "leave-one-out gradients (default on)")
    p.add_argument("--shuffle-seed", type=int, default=None)
    p.add_argument("--deterministic", action="store_true", default=None,
                   help="single worker, bit-reproducible")
    p.add_argument("--workers", type=int, default=None)
    p.add_argument("--log-every", type=int, default=None)
    p.add_argument("--checkpoint", default=None, help="model file written after every epoch")

    p = sub.add_parser("eval", parents=[common], help="perplexity of a model on a test corpus")
    p.add_argument("--stream-out", default=None, help="write the per-token log10 stream here")

    p = sub.add_parser("interpolate", parents=[common], help="interpolate probability streams")
    p.add_argument("--streams", nargs="+", default=None)
    p.add_argument("--weights", nargs="+", type=float, default=None)
    p.add_argument("--dev-streams", nargs="+", default=None,
                   help="fit weights by EM on these (default: on the streams themselves)")

    p = sub.add_parser("inspect", parents=[common], help="show counts and adjustment details")
    p.add_argument("query", nargs="?", default=None, help=f"feature key (e.g. '{EMPTY_KEY}') or mf|... key")
    p.add_argument("--target", dest="target_word", default=None, help="target word for the A(i, j) breakdown")
    return parser


def main(argv=None, out=None) -> int:
    out = out or sys.stdout
    try:
        # invalid settings (ConfigError) count as usage errors
        args = build_parser().parse_args(argv)
        logging.basicConfig(level=(args.log_level or "WARNING").upper(),
                            format="%(asctime)s %(name)s %(levelname)s %(message)s")
        cfg, extra = resolve_config(args)
        return COMMANDS[args.command](cfg, extra, out)
    except (UsageError, ConfigError) as exc:
        print(f"usage error: {exc}", file=sys.stderr)
        return 2
    except (SnmError, OSError, KeyError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
