import math
import random

import numpy as np
import pytest

from snmlm.corpus import build_vocabulary, tokenize
from snmlm.counts import count_corpus
from snmlm.errors import InputError, UndefinedRateError
from snmlm.evaluation import (
    EvalReport, ProbabilityStream, interpolate, model_stream, optimize_weights, perplexity,
    perplexity_of, sentence_logprob,
)
from snmlm.features import NgramTemplate
from snmlm.model import build_model

from oracles import random_instance


def _uniform_model():
    """Unigram model whose targets (every non-begin token) occur equally often."""
    lines = ["a b c", "b c a", "c a b"]  # a, b, c and </S> three times each
    vocab = build_vocabulary(lines, 1)
    sents = [tokenize(line, vocab) for line in lines]
    store = count_corpus(sents, [NgramTemplate(1)], vocab)[0]
    return build_model(store, [NgramTemplate(1)], bits=8), sents


def test_uniform_model_perplexity():
    model, sents = _uniform_model()
    row = model.counts.row(model.counts.feature_id("[]"))[1]
    assert len(set(row.tolist())) == 1
    n_targets = len(row)
    report = perplexity(model, sents)
    assert report.perplexity == pytest.approx(n_targets, abs=1e-6)
    assert report.flagged_events == 0
    s = sents[0]
    assert sentence_logprob(model, s) == pytest.approx(-(len(s) - 1) * math.log(n_targets), rel=1e-12)


def test_degenerate_model_has_perplexity_one():
    # only the sentence-end marker is ever predicted
    vocab = build_vocabulary([], 1)
    sents = [tokenize("", vocab)] * 3
    store = count_corpus(sents, [NgramTemplate(1)], vocab)[0]
    model = build_model(store, [NgramTemplate(1)], bits=8)
    assert perplexity(model, sents).perplexity == pytest.approx(1.0, abs=1e-12)


def test_end_only_sentence_is_one_prediction():
    model, _ = _uniform_model()
    s = tokenize("", model.vocab)
    assert perplexity(model, [s]).token_count == 1


def test_hand_computed_perplexity():
    model, _, sentences = random_instance(8)
    test = sentences[:5]
    total = sum(sentence_logprob(model, s) for s in test)
    n = sum(s.n_predictions for s in test)
    assert perplexity(model, test).perplexity == pytest.approx(math.exp(-total / n), rel=1e-10)


def test_perplexity_invariant_to_sentence_order():
    model, _, sentences = random_instance(6)
    shuffled = sentences[:]
    random.Random(1).shuffle(shuffled)
    assert perplexity(model, shuffled).perplexity == pytest.approx(perplexity(model, sentences).perplexity,
                                                                   rel=1e-12)


def test_unseen_target_is_floored_and_flagged():
    # <UNK> never occurred in training, so no row predicts it: probability 0
    vocab = build_vocabulary(["a b"], 1)
    store = count_corpus([tokenize("a b", vocab)], [NgramTemplate(2)], vocab)[0]
    m = build_model(store, [NgramTemplate(2)], bits=8)
    report = perplexity(m, [tokenize("a zzz", vocab)])
    assert report.flagged_events == 1 and math.isfinite(report.perplexity)
    assert report.oov_rate == pytest.approx(1 / 3)


def test_empty_test_set():
    model, _ = _uniform_model()
    with pytest.raises(UndefinedRateError):
        perplexity(model, [])


def test_stream_round_trip(tmp_path):
    model, _, sentences = random_instance(2)
    s = model_stream(model, sentences, "snm")
    s.save(tmp_path / "s.txt")
    back = ProbabilityStream.load(tmp_path / "s.txt")
    np.testing.assert_allclose(back.probs, s.probs, rtol=1e-14)
    assert (tmp_path / "s.txt").read_text().startswith("# snm\n")
    assert back.perplexity() == pytest.approx(perplexity(model, sentences).perplexity, rel=1e-12)


def test_stream_validation(tmp_path):
    with pytest.raises(InputError):
        ProbabilityStream([0.5, 0.0])
    with pytest.raises(InputError):
        ProbabilityStream([1.5])
    (tmp_path / "bad.txt").write_text("-0.1\nhello\n")
    with pytest.raises(InputError):
        ProbabilityStream.load(tmp_path / "bad.txt")


def test_interpolate_examples():
    a = ProbabilityStream([0.1, 0.5, 0.2])
    b = ProbabilityStream([0.3, 0.3, 0.3])
    assert interpolate([a, b], [1.0, 0.0]).perplexity == a.perplexity()
    assert interpolate([a, a], [0.3, 0.7]).perplexity == pytest.approx(a.perplexity(), rel=1e-14)
    with pytest.raises(InputError):
        interpolate([a, ProbabilityStream([0.1])], [0.5, 0.5])
    with pytest.raises(InputError):
        interpolate([a, b], [0.5, 0.6])
    with pytest.raises(InputError):
        interpolate([a, b], [1.2, -0.2])


def test_em_dominating_stream():
    rng = np.random.default_rng(0)
    p = rng.uniform(0.01, 0.2, 500)
    fit = optimize_weights([p * 4, p])
    assert fit.weights[0] == pytest.approx(1.0, abs=1e-3)


def test_em_symmetric_pair():
    rng = np.random.default_rng(1)
    p, q = rng.uniform(0.01, 0.5, 300), rng.uniform(0.01, 0.5, 300)
    fit = optimize_weights([np.r_[p, q], np.r_[q, p]])
    np.testing.assert_allclose(fit.weights, [0.5, 0.5], atol=1e-6)


def test_em_degenerate_streams_flagged():
    fit = optimize_weights([[0.2, 0.3], [0.2, 0.3], [0.2, 0.3]])
    assert fit.degenerate
    np.testing.assert_allclose(fit.weights, 1 / 3)
    with pytest.raises(InputError):
        optimize_weights([[0.2, 0.3]])


def synthetic_mixture(lam, n=20000, vocab=50, seed=0):
    """Tokens drawn from lam*P1 + (1-lam)*P2; returns both models' streams."""
    rng = np.random.default_rng(seed)
    p1 = rng.dirichlet(np.full(vocab, 0.3))
    p2 = rng.dirichlet(np.full(vocab, 0.3))
    comp = rng.random(n) < lam
    tokens = np.where(comp, rng.choice(vocab, n, p=p1), rng.choice(vocab, n, p=p2))
    return ProbabilityStream(p1[tokens]), ProbabilityStream(p2[tokens])


def test_em_recovers_known_mixture():
    s1, s2 = synthetic_mixture(0.3)
    fit = optimize_weights([s1, s2])
    assert fit.weights[0] == pytest.approx(0.3, abs=0.02)
    mix = interpolate([s1, s2], fit.weights).perplexity
    assert mix <= min(s1.perplexity(), s2.perplexity()) * (1 + 1e-9)


def test_report_formats():
    r = EvalReport(12.5, 10, 0.1, 2)
    assert r.to_text() == "perplexity: 12.5\ntoken_count: 10\noov_rate: 0.1\nflagged_events: 2\n"
    assert '"perplexity": 12.5' in r.summary_line()
    assert '"oov_rate": null' in EvalReport(2.0, 1, float("nan"), 0).summary_line()
    assert perplexity_of([0.5, 0.5]) == pytest.approx(2.0)
