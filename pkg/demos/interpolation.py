"""Linear interpolation of two models through their probability streams.

Each model writes one log10 probability per test token.  EM picks the
mixture weights on a held-out half of the test set, and the mix is scored
on the other half.
"""

import os
import tempfile

import numpy as np

from _common import load_split

import snmlm
from snmlm.evaluation import interpolate, model_stream, optimize_weights

train_lines, test_lines = load_split()
vocab = snmlm.build_vocabulary(train_lines, 3)
train_sents = [snmlm.tokenize(l, vocab) for l in train_lines]
test_sents = [snmlm.tokenize(l, vocab) for l in test_lines]

half = len(test_sents) // 2
dev, evl = test_sents[:half], test_sents[half:]

streams = {}
for name, order in [("bigram", 2), ("5gram", 5)]:
    templates = [snmlm.NgramTemplate(order)]
    counts, events = snmlm.count_corpus(train_sents, templates, vocab)
    model = snmlm.train(events, snmlm.build_model(counts, templates, bits=18),
                        snmlm.TrainerConfig(deterministic=True))
    streams[name] = (model_stream(model, dev, name), model_stream(model, evl, name))
    print("%-7s dev ppl %.3f   eval ppl %.3f" % (name, streams[name][0].perplexity(), streams[name][1].perplexity()))

fit = optimize_weights([d for d, _ in streams.values()])
print("EM weights:", np.round(fit.weights, 4), "after", fit.iterations, "iterations")
print("mixed eval ppl:", interpolate([e for _, e in streams.values()], fit.weights).perplexity)

# streams are plain text, so they round-trip through files
with tempfile.TemporaryDirectory() as tmp:
    path = os.path.join(tmp, "5gram.txt")
    streams["5gram"][1].save(path)
    back = snmlm.ProbabilityStream.load(path)
    print("reloaded stream:", len(back), "tokens, ppl", back.perplexity())
