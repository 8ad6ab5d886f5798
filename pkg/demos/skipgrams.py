"""Does adding skip-grams to the 5-gram features help?

Trains the same recipe with two template sets and compares test perplexity.
The skip-gram set is a small one (remote contexts of one or two words);
the full snm5-skip preset needs far more memory than a laptop on the
bundled corpus.
"""

import time

from _common import load_split

import snmlm
from snmlm.evaluation import perplexity
from snmlm.features import parse_templates

train_lines, test_lines = load_split()
vocab = snmlm.build_vocabulary(train_lines, 3)
train_sents = [snmlm.tokenize(l, vocab) for l in train_lines]
test_sents = [snmlm.tokenize(l, vocab) for l in test_lines]

SKIP_LIGHT = """
ngram order=5
skip r=1..2 s=1..3 a=0..1 tie=0
skip r=1 s=4..* a=0 tie=1
"""

recipes = {
    "snm5": snmlm.load_templates("snm5"),
    "snm5 + skip": parse_templates(SKIP_LIGHT),
}

for name, templates in recipes.items():
    t0 = time.time()
    counts, events = snmlm.count_corpus(train_sents, templates, vocab)
    model = snmlm.build_model(counts, templates, bits=20)
    model = snmlm.train(events, model, snmlm.TrainerConfig(learning_rate=0.01, deterministic=True))
    rep = perplexity(model, test_sents)
    print("%-12s features=%-8d ppl=%8.3f  (%.1fs)" % (name, counts.n_features, rep.perplexity, time.time() - t0))

# what a skip-gram feature looks like
s = test_sents[0]
for f in snmlm.extract_skipgrams(s, len(s) - 1, snmlm.SkipGramConfig(r_range=(1, 1), s_range=(1, 3), a_range=(0, 1))):
    print(f.type_id, f.key)
