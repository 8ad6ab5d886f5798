"""Build the bundled Shakespeare corpus used by the end-to-end experiments.

The source texts are the Project Gutenberg plays and poems shipped in the
``shakespeare`` sdist on PyPI (``pip download --no-binary :all: shakespeare``).
Only the modern-spelling ``*_gut.txt`` files are used; the First Folio
``*_gut_f.txt`` variants would duplicate most of the text.

Output: one lowercased, tokenized sentence per line, punctuation split off,
sentence order shuffled with a fixed seed (as in the usual LM benchmarks).

    python scripts/prepare_corpus.py path/to/shakespeare-0.6 data/shakespeare.txt.gz
"""

import argparse
import gzip
import random
import re
from pathlib import Path

TOKEN_RE = re.compile(r"[a-z]+(?:'[a-z]+)*|[0-9]+|[^\sa-z0-9]")
SENTENCE_END = {".", "?", "!"}


def sentences_from_text(text):
    for paragraph in re.split(r"\n\s*\n", text):
        tokens = TOKEN_RE.findall(paragraph.lower().replace("--", " -- "))
        current = []
        for tok in tokens:
            current.append(tok)
            if tok in SENTENCE_END:
                yield current
                current = []
        if current:
            yield current


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("source", type=Path, help="extracted shakespeare-0.6 directory")
    parser.add_argument("output", type=Path)
    parser.add_argument("--seed", type=int, default=1234)
    args = parser.parse_args()

    files = sorted((args.source / "shksprdata" / "texts").glob("*_gut.txt"))
    sentences = []
    for path in files:
        text = path.read_text(encoding="latin-1")
        sentences.extend(" ".join(s) for s in sentences_from_text(text))
    random.Random(args.seed).shuffle(sentences)
    args.output.parent.mkdir(parents=True, exist_ok=True)
    # mtime=0 keeps the gzip bytes reproducible
    with open(args.output, "wb") as raw, gzip.GzipFile(
        fileobj=raw, mode="wb", mtime=0, filename=""
    ) as gz:
        gz.write(("\n".join(sentences) + "\n").encode("utf-8"))
    n_tokens = sum(len(s.split()) for s in sentences)
    print(f"{len(files)} files, {len(sentences)} sentences, {n_tokens} tokens")


if __name__ == "__main__":
    main()
