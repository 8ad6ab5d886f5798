import gzip
import random
import sys
from pathlib import Path

ROOT = Path(__file__).resolve().parents[1]
FIXTURE_TRAIN = ROOT / "tests" / "data" / "fixture_train.txt"
FIXTURE_TEST = ROOT / "tests" / "data" / "fixture_test.txt"
SHAKESPEARE = ROOT / "data" / "shakespeare.txt.gz"


def load_split(argv=None, max_lines=None):
    """(train, test) lines: the fixture, or a 90/10 split of the bundled corpus with --shakespeare."""
    argv = sys.argv[1:] if argv is None else argv
    if "--shakespeare" not in argv:
        return FIXTURE_TRAIN.read_text().splitlines(), FIXTURE_TEST.read_text().splitlines()
    with gzip.open(SHAKESPEARE, "rt", encoding="utf-8") as fh:
        lines = fh.read().splitlines()
    if max_lines:
        random.Random(0).shuffle(lines)
        lines = lines[:max_lines]
    cut = int(0.9 * len(lines))
    return lines[:cut], lines[cut:]
