import gzip

import pytest
from hypothesis import given
from hypothesis import strategies as st

from snmlm.corpus import (
    BOS_ID, EOS_ID, RESERVED, UNK, UNK_ID, build_vocabulary, count_words, detokenize,
    merge_word_counts, oov_rate, read_vocabulary, tokenize, vocabulary_from_counts, write_vocabulary,
)
from snmlm.errors import ConfigError, InputError, UndefinedRateError


def test_cutoff():
    v = build_vocabulary(["a a a b b c"], 3)
    assert v.words == RESERVED + ("a",)


def test_empty_corpus():
    assert build_vocabulary([], 3).words == RESERVED


def test_order_count_then_lexicographic():
    v = build_vocabulary(["b a c c d d"], 1)
    assert v.words[3:] == ("c", "d", "a", "b")


def test_min_count_validation():
    with pytest.raises(ConfigError):
        build_vocabulary(["a"], 0)


def test_unreadable_stream(tmp_path):
    with pytest.raises(InputError):
        build_vocabulary(tmp_path / "missing.txt", 1)
    bad = tmp_path / "bad.txt"
    bad.write_bytes(b"\xff\xfe bad")
    with pytest.raises(InputError):
        build_vocabulary(bad, 1)


def test_gzip_and_plain_agree(tmp_path):
    text = "x y z\ny y\n"
    (tmp_path / "c.txt").write_text(text)
    with gzip.open(tmp_path / "c.txt.gz", "wt") as fh:
        fh.write(text)
    assert build_vocabulary(tmp_path / "c.txt", 1) == build_vocabulary(tmp_path / "c.txt.gz", 1)


def test_tokenize():
    v = build_vocabulary(["a"], 1)
    s = tokenize("a zzz", v)
    assert s.ids == (BOS_ID, v.id("a"), UNK_ID, EOS_ID)
    assert s.words[2] == UNK
    assert tokenize("", v).ids == (BOS_ID, EOS_ID)
    assert s.n_predictions == 3


def test_oov_rate():
    v = build_vocabulary(["a b"], 1)
    assert oov_rate([tokenize("a b", v)]) == 0.0
    # the sentence-end marker is predicted too: 2 of 3 predictions unknown
    assert oov_rate([tokenize("x y", v)]) == pytest.approx(2 / 3)
    with pytest.raises(UndefinedRateError):
        oov_rate([])


def test_all_unknown_rate_is_one():
    from snmlm.corpus import Sentence

    assert oov_rate([Sentence((BOS_ID, UNK_ID, UNK_ID), ("<S>", UNK, UNK))]) == 1.0


def test_vocabulary_file_round_trip(tmp_path):
    v = build_vocabulary(["a a b c c c", "d"], 2)
    write_vocabulary(v, tmp_path / "v.txt")
    assert read_vocabulary(tmp_path / "v.txt") == v
    assert (tmp_path / "v.txt").read_text().splitlines()[1] == "<S>\t2"


def test_malformed_vocabulary(tmp_path):
    (tmp_path / "v.txt").write_text("a\t1\n")
    with pytest.raises(InputError):
        read_vocabulary(tmp_path / "v.txt")


def test_sharded_counts_merge_is_order_free():
    lines = ["a b c", "b c", "c", "a a", "d"]
    whole = count_words(lines)
    shards = [count_words(lines[:2]), count_words(lines[2:4]), count_words(lines[4:])]
    assert merge_word_counts(*shards) == whole
    assert merge_word_counts(*reversed(shards)) == whole
    assert vocabulary_from_counts(*merge_word_counts(*shards), 1) == build_vocabulary(lines, 1)


words = st.text(alphabet="abcdefg", min_size=1, max_size=4)


@given(st.lists(st.lists(words, max_size=8), max_size=10))
def test_tokenize_detokenize_round_trip(sentences):
    lines = [" ".join(s) for s in sentences]
    v = build_vocabulary(lines, 1)
    for line, s in zip(lines, sentences):
        tok = tokenize(line, v)
        assert detokenize(tok) == s
        assert tok.ids[0] == BOS_ID and tok.ids[-1] == EOS_ID
        assert BOS_ID not in tok.ids[1:]


@given(st.lists(st.lists(words, max_size=8), max_size=10), st.integers(1, 3))
def test_build_is_deterministic_and_respects_cutoff(sentences, k):
    lines = [" ".join(s) for s in sentences]
    a, b = build_vocabulary(lines, k), build_vocabulary(list(lines), k)
    assert a == b
    assert all(c >= k for c in a.counts[3:])
