"""N-gram and skip-gram context features.

Feature keys are canonical strings built from the vocabulary spelling of
the context words:

* n-grams: ``[w1 ... wk]``, the empty context being ``[]``;
* skip-grams: ``[remote ... skip-S adjacent ...]`` where ``S`` is the skip
  length, or ``*`` when skips are tied.

Context never extends past the sentence-begin marker.
"""

from __future__ import annotations

import re
from collections.abc import Iterable, Sequence
from dataclasses import dataclass
from importlib import resources
from pathlib import Path
from typing import NamedTuple, Union

from .corpus import BOS_ID, Sentence
from .errors import ConfigError

Range = tuple[int, Union[int, None]]

EMPTY_KEY = "[]"
_SKIP_TOKEN = re.compile(r"skip-(\d+|\*)$")


class Feature(NamedTuple):
    key: str
    type_id: str


class Event(NamedTuple):
    features: tuple[Feature, ...]
    target: int


def ngram_type(order: int) -> str:
    return f"ngram({order})"


def skip_type(r: int, s: int | None, a: int) -> str:
    return f"skip({r},{'*' if s is None else s},{a})"


EMPTY_FEATURE = Feature(EMPTY_KEY, ngram_type(1))


def feature_type(key: str) -> str:
    """Type id recovered from a canonical key."""
    body = key[1:-1]
    tokens = body.split(" ") if body else []
    for pos, tok in enumerate(tokens):
        m = _SKIP_TOKEN.match(tok)
        if m:
            s = None if m.group(1) == "*" else int(m.group(1))
            return skip_type(pos, s, len(tokens) - pos - 1)
    return ngram_type(len(tokens) + 1)


def _in(value: int, rng: Range) -> bool:
    lo, hi = rng
    return value >= lo and (hi is None or value <= hi)


@dataclass(frozen=True)
class NgramTemplate:
    """All contexts of length 0..order-1 immediately left of the target."""

    order: int

    def __post_init__(self):
        if self.order < 1:
            raise ConfigError(f"n-gram order must be >= 1, got {self.order}")

    def to_line(self) -> str:
        return f"ngram order={self.order}"


@dataclass(frozen=True)
class SkipGramConfig:
    """Constraints on (remote, skip, adjacent) placements.

    Ranges are inclusive ``(min, max)`` pairs; ``max=None`` is unbounded.
    """

    r_range: Range = (1, None)
    s_range: Range = (1, None)
    a_range: Range = (0, None)
    ra_range: Range = (1, None)
    tie_skips: bool = False

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        for name in ("r_range", "s_range", "a_range", "ra_range"):
            lo, hi = getattr(self, name)
            if lo < 0:
                raise ConfigError(f"{name} minimum must be >= 0")
            if hi is not None and hi < lo:
                raise ConfigError(f"{name} minimum exceeds maximum")
        lo = max(self.r_range[0] + self.a_range[0], self.ra_range[0], 1)
        his = [
            None if self.r_range[1] is None or self.a_range[1] is None
            else self.r_range[1] + self.a_range[1],
            self.ra_range[1],
        ]
        his = [h for h in his if h is not None]
        if his and min(his) < lo:
            raise ConfigError("no (r, a) pair satisfies the r, a and r+a ranges")

    def to_line(self) -> str:
        def fmt(rng):
            lo, hi = rng
            return f"{lo}..{'*' if hi is None else hi}"

        return (
            f"skip r={fmt(self.r_range)} s={fmt(self.s_range)} a={fmt(self.a_range)} "
            f"ra={fmt(self.ra_range)} tie={int(self.tie_skips)}"
        )


Template = Union[NgramTemplate, SkipGramConfig]


def _check_position(sentence: Sentence, position: int) -> None:
    if not 1 <= position < len(sentence.ids):
        raise IndexError(f"position {position} outside 1..{len(sentence.ids) - 1}")


def _ngram_keys(words: Sequence[str], position: int, max_order: int) -> list[str]:
    keys = [EMPTY_KEY]
    for k in range(1, min(max_order - 1, position) + 1):
        keys.append("[" + " ".join(words[position - k : position]) + "]")
    return keys


def _skipgram_keys(words: Sequence[str], position: int, cfg: SkipGramConfig) -> list[str]:
    keys = []
    seen = set()
    r_lo, r_hi = cfg.r_range
    a_lo, a_hi = cfg.a_range
    s_lo, s_hi = cfg.s_range
    n = position
    a_max = n if a_hi is None else min(a_hi, n)
    for a in range(a_lo, a_max + 1):
        adjacent = words[position - a : position]
        r_max = n - a if r_hi is None else min(r_hi, n - a)
        for r in range(r_lo, r_max + 1):
            if r + a == 0 or not _in(r + a, cfg.ra_range):
                continue
            s_max = n - a - r if s_hi is None else min(s_hi, n - a - r)
            for s in range(s_lo, s_max + 1):
                end = position - a - s
                remote = words[end - r : end]
                marker = "skip-*" if cfg.tie_skips else f"skip-{s}"
                key = "[" + " ".join([*remote, marker, *adjacent]) + "]"
                if key not in seen:
                    seen.add(key)
                    keys.append(key)
    return keys


def extract_ngrams(sentence: Sentence, position: int, max_order: int) -> list[Feature]:
    """N-gram context features for the token at `position`.

    Returns the empty context plus every context of up to ``max_order - 1``
    words ending just left of the target, shortest first.
    """
    _check_position(sentence, position)
    if max_order < 1:
        raise ConfigError(f"max_order must be >= 1, got {max_order}")
    return [
        Feature(k, ngram_type(n + 1))
        for n, k in enumerate(_ngram_keys(sentence.words, position, max_order))
    ]


def extract_skipgrams(sentence: Sentence, position: int, config: SkipGramConfig) -> list[Feature]:
    _check_position(sentence, position)
    if not isinstance(config, SkipGramConfig):
        raise ConfigError("extract_skipgrams needs a SkipGramConfig")
    config.validate()
    return [Feature(k, feature_type(k)) for k in _skipgram_keys(sentence.words, position, config)]


def context_keys(words: Sequence[str], position: int, templates: Sequence[Template]) -> list[str]:
    """Sorted, de-duplicated feature keys of one prediction site.

    Always contains the empty context.
    """
    keys = {EMPTY_KEY}
    for tpl in templates:
        if isinstance(tpl, NgramTemplate):
            keys.update(_ngram_keys(words, position, tpl.order))
        else:
            keys.update(_skipgram_keys(words, position, tpl))
    return sorted(keys)


def make_events(sentence: Sentence, templates: Sequence[Template]) -> list[Event]:
    """One event per predicted token (every token but sentence-begin)."""
    events = []
    for pos in range(1, len(sentence.ids)):
        target = sentence.ids[pos]
        if target == BOS_ID:
            raise ConfigError("sentence-begin marker inside a sentence")
        keys = context_keys(sentence.words, pos, templates)
        events.append(Event(tuple(Feature(k, feature_type(k)) for k in keys), target))
    return events


# -- template files ---------------------------------------------------------


def _parse_range(text: str) -> Range:
    if ".." in text:
        lo, hi = text.split("..", 1)
        return int(lo), None if hi == "*" else int(hi)
    return int(text), int(text)


def parse_templates(text: str) -> list[Template]:
    """Parse a template config: one ``ngram ...`` or ``skip ...`` per line."""
    templates: list[Template] = []
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        kind, *fields = line.split()
        try:
            opts = dict(f.split("=", 1) for f in fields)
        except ValueError:
            raise ConfigError(f"template line {lineno}: expected key=value fields") from None
        try:
            if kind == "ngram":
                if set(opts) != {"order"}:
                    raise ConfigError(f"template line {lineno}: ngram takes only order=K")
                templates.append(NgramTemplate(int(opts["order"])))
            elif kind == "skip":
                unknown = set(opts) - {"r", "s", "a", "ra", "tie"}
                if unknown:
                    raise ConfigError(f"template line {lineno}: unknown fields {sorted(unknown)}")
                kwargs = {
                    f"{name}_range": _parse_range(opts[name])
                    for name in ("r", "s", "a", "ra")
                    if name in opts
                }
                tie = opts.get("tie", "0")
                if tie not in ("0", "1"):
                    raise ConfigError(f"template line {lineno}: tie must be 0 or 1")
                templates.append(SkipGramConfig(**kwargs, tie_skips=tie == "1"))
            else:
                raise ConfigError(f"template line {lineno}: unknown template kind {kind!r}")
        except ValueError as exc:
            if isinstance(exc, ConfigError):
                raise
            raise ConfigError(f"template line {lineno}: {exc}") from None
    if not templates:
        raise ConfigError("template config defines no templates")
    return templates


def templates_to_text(templates: Iterable[Template]) -> str:
    return "".join(t.to_line() + "\n" for t in templates)


PRESETS = ("snm5", "snm5-skip", "snm10-skip")


def load_templates(source: str | Path) -> list[Template]:
    """Templates from a preset name or a template config path."""
    if str(source) in PRESETS:
        text = resources.files("snmlm.presets").joinpath(f"{source}.tpl").read_text()
    else:
        try:
            text = Path(source).read_text(encoding="utf-8")
        except OSError as exc:
            raise ConfigError(f"cannot read template config {source}: {exc}") from exc
    return parse_templates(text)
