"""From raw text to a trained SNM 5-gram, one step at a time.

    python demos/walkthrough.py                 # small fixture, a few seconds
    python demos/walkthrough.py --shakespeare   # full corpus, several minutes
"""

from _common import load_split

import snmlm
from snmlm.evaluation import perplexity

train_lines, test_lines = load_split()

vocab = snmlm.build_vocabulary(train_lines, min_count=3)
print("vocabulary:", len(vocab), "words (ids 0-2 are <S>, </S>, <UNK>)")

train_sents = [snmlm.tokenize(l, vocab) for l in train_lines]
test_sents = [snmlm.tokenize(l, vocab) for l in test_lines]
print("test OOV rate: %.4f" % snmlm.oov_rate(test_sents))

# features of one position
s = train_sents[0]
print(" ".join(s.words))
for f in snmlm.extract_ngrams(s, 3, 5):
    print("   ", f.type_id, f.key)

templates = snmlm.load_templates("snm5")
counts, events = snmlm.count_corpus(train_sents, templates, vocab)
print(counts)

# all-zero weights: every adjustment is exp(0) = 1, i.e. plain relative frequencies
base = snmlm.build_model(counts, templates, bits=18)
print("theta = 0  :", perplexity(base, test_sents).perplexity)

model = snmlm.train(events, base, snmlm.TrainerConfig(learning_rate=0.01, epochs=1, deterministic=True))
report = perplexity(model, test_sents)
print("trained    :", report.perplexity)
print(report.to_text(), end="")

# a single probability, and where it comes from
ev = snmlm.make_events(test_sents[0], templates)[1]
word = vocab.word(ev.target)
print("P(%s | %s) = %.5f" % (word, " ".join(test_sents[0].words[:2]), model.probability(ev.features, ev.target)))
for i in model.active_features(ev.features):
    key = counts.keys[i]
    if counts.count(i, ev.target):
        print("    %-28s C=%3d/%-5d M=%.4f" % (key, counts.count(i, ev.target), counts.total(i),
                                             model.entry(key, ev.target)))
