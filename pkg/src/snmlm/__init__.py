"""Sparse non-negative matrix language models."""

from .adjustment import MetafeatureConfig, WeightTable, adjustment, bucketize, enumerate_metafeatures
from .corpus import Sentence, Vocabulary, build_vocabulary, oov_rate, tokenize
from .counts import CountStore, accumulate, count_corpus, merge, relative_frequency
from .evaluation import (
    EvalReport, ProbabilityStream, interpolate, optimize_weights, perplexity, sentence_logprob,
)
from .features import (
    Event, Feature, NgramTemplate, SkipGramConfig, extract_ngrams, extract_skipgrams, load_templates,
    make_events,
)
from .model import SnmModel, build_model
from .training import (
    TrainerConfig, gradient_aggregated, gradient_leave_one_out, poisson_loss, train,
)

__version__ = "0.1.0"
