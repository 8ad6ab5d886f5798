"""Perplexity, probability streams and linear interpolation.

Probability streams are the bridge to models built elsewhere: one log10
probability per predicted token, in corpus order (sentence-end included,
sentence-begin never).
"""

from __future__ import annotations

import json
import math
from collections.abc import Sequence
from dataclasses import asdict, dataclass
from pathlib import Path

import numpy as np

from .corpus import UNK_ID, Sentence
from .errors import InputError, UndefinedRateError
from .features import make_events
from .model import SnmModel


@dataclass
class EvalReport:
    perplexity: float
    token_count: int
    oov_rate: float
    flagged_events: int = 0

    def to_text(self) -> str:
        return "".join(f"{k}: {v}\n" for k, v in asdict(self).items())

    def summary_line(self) -> str:
        d = asdict(self)
        # NaN is not valid JSON; an unknown rate is written as null
        d = {k: None if isinstance(v, float) and math.isnan(v) else v for k, v in d.items()}
        return json.dumps(d, sort_keys=True)


class ProbabilityStream:
    """Per-token probabilities of one model on a test corpus."""

    def __init__(self, probs, name: str = ""):
        probs = np.asarray(probs, dtype=np.float64)
        if probs.ndim != 1:
            raise InputError("a probability stream is one-dimensional")
        if np.any(~(probs > 0.0)) or np.any(probs > 1.0 + 1e-12):
            raise InputError("stream probabilities must lie in (0, 1]")
        self.probs = probs
        self.name = name

    def __len__(self) -> int:
        return len(self.probs)

    def perplexity(self) -> float:
        return perplexity_of(self.probs)

    def save(self, path) -> None:
        with open(path, "w", encoding="utf-8") as fh:
            if self.name:
                fh.write(f"# {self.name}\n")
            for p in self.probs:
                fh.write(f"{math.log10(p):.17g}\n")

    @classmethod
    def load(cls, path) -> ProbabilityStream:
        values = []
        try:
            with open(path, encoding="utf-8") as fh:
                for n, line in enumerate(fh, 1):
                    line = line.strip()
                    if not line or line.startswith("#"):
                        continue
                    try:
                        values.append(float(line))
                    except ValueError:
                        raise InputError(f"{path}:{n}: not a log10 probability") from None
        except OSError as exc:
            raise InputError(f"cannot read stream {path}: {exc}") from exc
        return cls(np.power(10.0, np.array(values, dtype=np.float64)), Path(path).stem)


def perplexity_of(probs) -> float:
    probs = np.asarray(probs, dtype=np.float64)
    if len(probs) == 0:
        raise UndefinedRateError("perplexity of an empty test set")
    return math.exp(-math.fsum(np.log(probs)) / len(probs))


def sentence_logprob(model: SnmModel, sentence: Sentence) -> float:
    """Natural-log probability of a sentence, sentence-end included."""
    total = 0.0
    for ev in make_events(sentence, model.templates):
        p, _ = model.probability_detail(ev.features, ev.target)
        total += math.log(p) if p > 0 else math.log(model.floor_probability)
    return total


def token_probabilities(model: SnmModel, test: Sequence[Sentence]) -> tuple[np.ndarray, np.ndarray]:
    """Probability of every predicted token and whether it was floored.

    A zero denominator or a target never seen in training gets the
    model's floor probability; those tokens are flagged.
    """
    events = model.counts.encode_sentences(test, model.templates)
    probs, flagged = model.score_events(events)
    zero = probs <= 0.0
    probs[zero] = model.floor_probability
    return probs, flagged | zero


def perplexity(model: SnmModel, test: Sequence[Sentence]) -> EvalReport:
    test = list(test)
    probs, flagged = token_probabilities(model, test)
    if len(probs) == 0:
        raise UndefinedRateError("perplexity of an empty test set")
    unknown = sum(1 for s in test for i in s.ids[1:] if i == UNK_ID)
    return EvalReport(perplexity_of(probs), len(probs), unknown / len(probs), int(flagged.sum()))


def model_stream(model: SnmModel, test: Sequence[Sentence], name: str = "snm") -> ProbabilityStream:
    return ProbabilityStream(token_probabilities(model, test)[0], name)


def _as_matrix(streams) -> np.ndarray:
    arrays = [s.probs if isinstance(s, ProbabilityStream) else np.asarray(s, dtype=np.float64)
              for s in streams]
    if not arrays:
        raise InputError("no streams given")
    if len({len(a) for a in arrays}) != 1:
        raise InputError("streams differ in length")
    return np.vstack(arrays)


def interpolate(streams, weights, oov: float = float("nan")) -> EvalReport:
    """Perplexity of the per-token mixture sum_m w_m p_m."""
    P = _as_matrix(streams)
    w = np.asarray(weights, dtype=np.float64)
    if w.shape != (P.shape[0],):
        raise InputError("one weight per stream required")
    if np.any(w < 0) or abs(w.sum() - 1.0) > 1e-9:
        raise InputError("weights must be non-negative and sum to 1")
    mix = w @ P
    return EvalReport(perplexity_of(mix), P.shape[1], oov, 0)


@dataclass
class MixtureWeights:
    weights: np.ndarray
    log_likelihood: float
    iterations: int
    degenerate: bool = False


def optimize_weights(dev_streams, tol: float = 1e-10, max_iter: int = 200) -> MixtureWeights:
    """EM for the mixture weights maximizing dev-set log-likelihood.

    Stops when the per-token log-likelihood improves by less than `tol`
    or after `max_iter` iterations.
    """
    P = _as_matrix(dev_streams)
    m, n = P.shape
    if m < 2:
        raise InputError("need at least two streams")
    if n == 0:
        raise UndefinedRateError("empty streams")
    w = np.full(m, 1.0 / m)
    if np.all(P == P[0]):
        return MixtureWeights(w, float(np.log(P[0]).mean()), 0, degenerate=True)
    ll = float(np.log(w @ P).mean())
    it = 0
    for it in range(1, max_iter + 1):
        mix = w @ P
        w = (w[:, None] * P / mix).mean(axis=1)
        w /= w.sum()
        new_ll = float(np.log(w @ P).mean())
        improved = new_ll - ll
        ll = new_ll
        if improved < tol:
            break
    return MixtureWeights(w, ll, it)

