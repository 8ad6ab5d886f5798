"""The SNM matrix M and its conditional probabilities.

``M_ij = exp(A(i, j)) * C_ij / C_i*``; a context's prediction vector is
the sum of the rows of its active features, normalized by the sum of the
precomputed row sums of those same features.
"""

from __future__ import annotations

import io
import json
import math
from collections.abc import Iterable, Sequence
from pathlib import Path

import numpy as np

from . import _kernels as K
from .adjustment import (
    DEFAULT_BITS, DEFAULT_SEED, MetafeatureConfig, WeightTable, build_hash_tables,
    enumerate_metafeatures, splitmix64,
)
from .corpus import Vocabulary, vocabulary_from_text, vocabulary_to_text
from .counts import CountStore, EventArrays
from .errors import DomainError, ModelFormatError
from .features import EMPTY_KEY, Feature, Template, parse_templates, templates_to_text

MAGIC = b"SNMLM"
FORMAT_VERSION = 1


class SnmModel:
    """Counts + weight table + metafeature config, with cached row sums."""

    def __init__(self, counts: CountStore, table: WeightTable | None = None,
                 mf_config: MetafeatureConfig | None = None,
                 templates: Sequence[Template] = (), row_sums=None):
        self.counts = counts
        self.table = table if table is not None else WeightTable()
        self.mf_config = mf_config if mf_config is not None else MetafeatureConfig()
        self.templates = list(templates)
        self.row_sums = None if row_sums is None else np.asarray(row_sums, dtype=np.float64)
        self.row_lookups = 0
        self._hashes = None

    # -- plumbing -----------------------------------------------------------

    @property
    def vocab(self) -> Vocabulary:
        return self.counts.vocab

    @property
    def finalized(self) -> bool:
        return self.row_sums is not None

    @property
    def floor_probability(self) -> float:
        return 1.0 / (10 * len(self.vocab))

    def hashes(self):
        if self._hashes is None:
            c = self.counts
            h = build_hash_tables(c.keys, c.types, self.vocab.words)
            self._hashes = (h.feat, h.ftype, h.target, h.fc, h.pc)
        return self._hashes

    def kernel_args(self, theta=None):
        """(flags, h0, H, theta, mask) as consumed by the compiled kernels."""
        theta = self.table.weights if theta is None else theta
        h0 = np.uint64(splitmix64(self.table.seed))
        return self.mf_config.flags(), h0, self.hashes(), theta, np.uint64(self.table.size - 1)

    def _fid(self, feature) -> int:
        if isinstance(feature, (int, np.integer)):
            self.counts._check(int(feature))
            return int(feature)
        key = feature.key if isinstance(feature, Feature) else feature
        return self.counts.feature_id(key)

    # -- entries ------------------------------------------------------------

    def adjustment(self, i: int, j: int, feature_count: int | None = None,
                   pair_count: int | None = None) -> float:
        """A(i, j), optionally with substituted counts (leave-one-out)."""
        c = self.counts
        fc = c.total(i) if feature_count is None else feature_count
        pc = c.count(i, j) if pair_count is None else pair_count
        if fc < 1 or pc < 1:
            raise DomainError("adjustment needs positive counts")
        flags, h0, H, theta, mask = self.kernel_args()
        return K.pair_adjustment(i, j, fc, pc, flags, h0, H, theta, mask, *K._scratch())

    def adjustment_breakdown(self, i: int, j: int):
        """(metafeature key, weight, slot, table value) for every conjunction."""
        c = self.counts
        feature = Feature(c.keys[i], c.types[i])
        out = []
        for mf in enumerate_metafeatures(feature, self.vocab.words[j], c.total(i), c.count(i, j),
                                         self.mf_config):
            slot = self.table.slot(mf.elements)
            out.append((mf.key, mf.weight, slot, float(self.table.weights[slot])))
        return out

    def entry(self, feature, j: int) -> float:
        i = self._fid(feature)
        cij = self.counts.count(i, j)
        if cij == 0:
            return 0.0
        return math.exp(self.adjustment(i, j)) * cij / self.counts.total(i)

    def entries(self) -> np.ndarray:
        """M_ij for every stored pair, in pair order."""
        c = self.counts
        return K.entries(c.indptr, c.targets, c.counts, c.totals, *self.kernel_args())

    def finalize(self) -> SnmModel:
        """Compute the row sums; the weights become read-only."""
        c = self.counts
        self.row_sums = K.row_sums(c.indptr, c.targets, c.counts, c.totals, *self.kernel_args())
        self.table.weights.flags.writeable = False
        return self

    # -- prediction ---------------------------------------------------------

    def active_features(self, features: Iterable) -> list[int]:
        """Known feature ids of a context; unknown ones dropped.

        Falls back to the empty context when nothing is known.
        """
        ids = set()
        for f in features:
            if isinstance(f, (int, np.integer)):
                ids.add(int(f))
                continue
            key = f.key if isinstance(f, Feature) else f
            i = self.counts.get_id(key)
            if i >= 0:
                ids.add(i)
        if not ids:
            empty = self.counts.get_id(EMPTY_KEY)
            if empty >= 0:
                ids.add(empty)
        return sorted(ids)

    def score(self, features: Iterable) -> dict[int, float]:
        """Sparse y = M f over the union of the active rows."""
        features = list(features)
        if not features:
            raise DomainError("empty feature set")
        y: dict[int, float] = {}
        for i in self.active_features(features):
            self.row_lookups += 1
            targets, _ = self.counts.row(i)
            for t, m in zip(targets.tolist(), self._row_entries(i).tolist()):
                y[t] = y.get(t, 0.0) + m
        return y

    def _row_entries(self, i: int) -> np.ndarray:
        c = self.counts
        lo, hi = c.indptr[i], c.indptr[i + 1]
        flags, h0, H, theta, mask = self.kernel_args()
        scratch = K._scratch()
        tot = c.totals[i]
        return np.array([
            math.exp(K.pair_adjustment(i, c.targets[k], tot, c.counts[k], flags, h0, H, theta, mask,
                                       *scratch)) * c.counts[k] / tot
            for k in range(lo, hi)
        ])

    def probability_detail(self, features: Iterable, target: int) -> tuple[float, bool]:
        """P(target | features) and whether the floor probability was used.

        The floor replaces only a zero denominator; a target never seen
        with any active feature gets probability 0.
        """
        if not self.finalized:
            raise DomainError("model must be finalized before computing probabilities")
        features = list(features)
        if not features:
            raise DomainError("empty feature set")
        c = self.counts
        y = 0.0
        denom = 0.0
        for i in self.active_features(features):
            self.row_lookups += 1
            denom += self.row_sums[i]
            k = c.pair_index(i, target)
            if k >= 0:
                y += math.exp(self.adjustment(i, target)) * c.counts[k] / c.totals[i]
        if denom > 0.0:
            return y / denom, False
        return self.floor_probability, True

    def probability(self, features: Iterable, target: int) -> float:
        return self.probability_detail(features, target)[0]

    def score_events(self, events: EventArrays) -> tuple[np.ndarray, np.ndarray]:
        """Vectorized probabilities and floor flags for encoded events."""
        if not self.finalized:
            raise DomainError("model must be finalized before computing probabilities")
        c = self.counts
        return K.score_events(
            events.ptr, events.features, events.targets, c.indptr, c.targets, c.counts, c.totals,
            self.row_sums, *self.kernel_args(), self.floor_probability,
        )

    # -- serialization ------------------------------------------------------

    def to_bytes(self, include_row_sums: bool = True) -> bytes:
        sections = {
            "vocab": vocabulary_to_text(self.vocab).encode("utf-8"),
            "feature_keys": "\n".join(self.counts.keys).encode("utf-8"),
            "indptr": _npy(self.counts.indptr),
            "targets": _npy(self.counts.targets),
            "counts": _npy(self.counts.counts),
            "weights": _npy(self.table.weights),
        }
        if include_row_sums and self.row_sums is not None:
            sections["row_sums"] = _npy(self.row_sums)
        header = {
            "version": FORMAT_VERSION,
            "hash_seed": self.table.seed,
            "bits": self.table.bits,
            "templates": templates_to_text(self.templates),
            "mf_config": self.mf_config.to_dict(),
            "sections": [[name, len(data)] for name, data in sections.items()],
        }
        head = json.dumps(header, sort_keys=True, separators=(",", ":")).encode("utf-8")
        return MAGIC + b"\n" + head + b"\n" + b"".join(sections.values())

    def save(self, path) -> None:
        Path(path).write_bytes(self.to_bytes())

    @classmethod
    def from_bytes(cls, data: bytes) -> SnmModel:
        try:
            magic, head, body = data.split(b"\n", 2)
            if magic != MAGIC:
                raise ModelFormatError("not an SNM model file (bad magic)")
            header = json.loads(head)
            if header.get("version") != FORMAT_VERSION:
                raise ModelFormatError(f"unsupported model version {header.get('version')}")
            sections = {}
            offset = 0
            for name, size in header["sections"]:
                sections[name] = body[offset : offset + size]
                if len(sections[name]) != size:
                    raise ModelFormatError(f"truncated section {name!r}")
                offset += size
            vocab = vocabulary_from_text(sections["vocab"].decode("utf-8"))
            keys_blob = sections["feature_keys"].decode("utf-8")
            keys = keys_blob.split("\n") if keys_blob else []
            store = CountStore(vocab, keys, _load(sections["indptr"]), _load(sections["targets"]),
                               _load(sections["counts"]))
            table = WeightTable(int(header["bits"]), int(header["hash_seed"]), _load(sections["weights"]))
            templates = parse_templates(header["templates"]) if header["templates"].strip() else []
            model = cls(store, table, MetafeatureConfig.from_dict(header["mf_config"]), templates)
        except ModelFormatError:
            raise
        except Exception as exc:  # any parse failure is a format error
            raise ModelFormatError(f"malformed model file: {exc}") from exc
        if "row_sums" in sections:
            model.row_sums = _load(sections["row_sums"])
            model.table.weights.flags.writeable = False
        else:
            model.finalize()
        return model

    @classmethod
    def load(cls, path) -> SnmModel:
        try:
            data = Path(path).read_bytes()
        except OSError as exc:
            raise ModelFormatError(f"cannot read model {path}: {exc}") from exc
        return cls.from_bytes(data)


def _npy(arr: np.ndarray) -> bytes:
    buf = io.BytesIO()
    np.lib.format.write_array(buf, np.ascontiguousarray(arr), allow_pickle=False)
    return buf.getvalue()


def _load(data: bytes) -> np.ndarray:
    return np.lib.format.read_array(io.BytesIO(data), allow_pickle=False)


def build_model(counts: CountStore, templates: Sequence[Template] = (),
                mf_config: MetafeatureConfig | None = None, bits: int = DEFAULT_BITS,
                seed: int = DEFAULT_SEED) -> SnmModel:
    """Untrained (all-zero weights) model, finalized."""
    return SnmModel(counts, WeightTable(bits, seed), mf_config, templates).finalize()
