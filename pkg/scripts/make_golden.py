"""Regenerate tests/data/golden.json from the 1k-sentence fixture.

Run only when the file formats or the training rule change on purpose.
"""

import hashlib
import io
import json
import sys
import tempfile
from pathlib import Path

from snmlm.cli import main

DATA = Path(__file__).resolve().parents[1] / "tests" / "data"
train, test = DATA / "fixture_train.txt", DATA / "fixture_test.txt"

with tempfile.TemporaryDirectory() as tmp:
    d = Path(tmp)
    steps = [
        ["build-vocab", "--corpus", train, "--vocab", d / "v.txt", "--min-count", "2"],
        ["count", "--corpus", train, "--vocab", d / "v.txt", "--counts", d / "c.txt", "--templates", "snm5-skip"],
        ["train", "--corpus", train, "--vocab", d / "v.txt", "--counts", d / "c.txt", "--templates", "snm5-skip",
         "--model", d / "m.snm", "--bits", "16", "--deterministic"],
    ]
    for argv in steps:
        if main([str(a) for a in argv], out=io.StringIO()) != 0:
            sys.exit(f"step failed: {argv[0]}")
    out = io.StringIO()
    main(["eval", "--model", str(d / "m.snm"), "--test", str(test)], out=out)
    report = json.loads(out.getvalue().splitlines()[-1])
    golden = {
        "vocab_sha256": hashlib.sha256((d / "v.txt").read_bytes()).hexdigest(),
        "counts_sha256": hashlib.sha256((d / "c.txt").read_bytes()).hexdigest(),
        "perplexity": report["perplexity"],
        "token_count": report["token_count"],
        "flagged_events": report["flagged_events"],
    }
(DATA / "golden.json").write_text(json.dumps(golden, indent=2, sort_keys=True) + "\n")
print(json.dumps(golden, indent=2))
