"""Which elementary metafeatures matter?

Drops one metafeature at a time from the adjustment function and retrains.
Also shows the breakdown of one adjustment into its hashed conjunctions.
"""

from _common import load_split

import snmlm
from snmlm.adjustment import MetafeatureConfig
from snmlm.evaluation import perplexity

train_lines, test_lines = load_split()
vocab = snmlm.build_vocabulary(train_lines, 3)
train_sents = [snmlm.tokenize(l, vocab) for l in train_lines]
test_sents = [snmlm.tokenize(l, vocab) for l in test_lines]
templates = snmlm.load_templates("snm5")
counts, events = snmlm.count_corpus(train_sents, templates, vocab)

configs = {"all": MetafeatureConfig()}
for name in ["feature", "feature_type", "feature_count", "target", "pair_count"]:
    configs["no " + name] = MetafeatureConfig(**{name: False})
configs["double buckets"] = MetafeatureConfig(double_bucket_feature_count=True, double_bucket_pair_count=True)

models = {}
for name, mf in configs.items():
    model = snmlm.build_model(counts, templates, mf_config=mf, bits=18)
    model = snmlm.train(events, model, snmlm.TrainerConfig(deterministic=True))
    models[name] = model
    print("%-16s ppl %.3f" % (name, perplexity(model, test_sents).perplexity))

model = models["all"]
i = counts.feature_id("[]")
j = vocab.id("the") if "the" in vocab.words else 3
print()
print("A([] -> %s) = %.5f" % (vocab.word(j), model.adjustment(i, j)))
for key, weight, slot, theta in model.adjustment_breakdown(i, j)[:8]:
    print("  %-40s w=%.3f slot=%-7d theta=%+.5f" % (key, weight, slot, theta))
print("  ... %d conjunctions in total" % len(model.adjustment_breakdown(i, j)))
