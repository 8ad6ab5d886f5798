"""Poisson-loss SGD on the metafeature weights.

Two gradient rules are available, both touching positive pairs only:

* aggregated: ``M_ij (C_i*/C_ij - 1/y_j)`` per positive pair, folding the
  gradient mass of the negative examples onto the positives;
* leave-one-out: the event is removed from the counts it is trained on.
  The negative-example part, ``(C_i* - C_ij)/(C_i* - 1) exp(A')`` with
  ``A'`` evaluated at counts (C_i* - 1, C_ij), updates the metafeatures of
  those counts; the positive part ``M'_ij (1 - 1/y'_j)`` updates the
  metafeatures at (C_i* - 1, C_ij - 1).  Features seen once are skipped.

SGD operates per event: all pair gradients of an event are computed from
the current weights, then applied in canonical feature order.
"""

from __future__ import annotations

import logging
import math
import os
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from . import _kernels as K
from .counts import EventArrays
from .errors import ConfigError, ContractError
from .features import Event, Feature
from .model import SnmModel

log = logging.getLogger(__name__)


@dataclass
class TrainerConfig:
    learning_rate: float = 0.01
    epochs: int = 1
    leave_one_out: bool = True
    shuffle_seed: int = 0
    deterministic: bool = False
    workers: int | None = None
    log_every: int = 100_000
    checkpoint_path: str | None = field(default=None, repr=False)

    def __post_init__(self):
        self.validate()

    def validate(self) -> None:
        if not (isinstance(self.learning_rate, (int, float)) and self.learning_rate >= 0
                and math.isfinite(self.learning_rate)):
            raise ConfigError(f"learning_rate must be a finite non-negative number, got {self.learning_rate!r}")
        if not isinstance(self.epochs, int) or self.epochs < 1:
            raise ConfigError(f"epochs must be a positive integer, got {self.epochs!r}")
        if self.workers is not None and self.workers < 1:
            raise ConfigError("workers must be >= 1")

    @property
    def n_workers(self) -> int:
        if self.deterministic:
            return 1
        return self.workers or os.cpu_count() or 1


def poisson_loss(y, target: int) -> float:
    """Sum of all scores minus log of the target score.

    `y` is a sparse ``{target: score}`` map or a dense vector over the
    vocabulary.  Returns ``inf`` when the target score is zero.
    """
    if isinstance(y, Mapping):
        total = math.fsum(y.values())
        yt = y.get(target, 0.0)
    else:
        y = np.asarray(y, dtype=np.float64)
        total = math.fsum(y)
        yt = float(y[target])
    if yt <= 0.0:
        return math.inf
    return total - math.log(yt)


# -- per-pair gradients (reference path) -------------------------------------


def _event_ids(model: SnmModel, event) -> tuple[list[int], int]:
    features, target = event
    ids = []
    for f in features:
        if isinstance(f, (int, np.integer)):
            ids.append(int(f))
        else:
            key = f.key if isinstance(f, Feature) else f
            i = model.counts.get_id(key)
            if i >= 0:
                ids.append(i)
    return sorted(set(ids)), int(target)


def _feature_id(model: SnmModel, feature) -> int:
    if isinstance(feature, (int, np.integer)):
        return int(feature)
    key = feature.key if isinstance(feature, Feature) else feature
    return model.counts.feature_id(key)


def gradient_aggregated(model: SnmModel, event, feature) -> float:
    """Aggregated positive-only gradient w.r.t. A(i, target) for one event."""
    c = model.counts
    ids, j = _event_ids(model, event)
    i = _feature_id(model, feature)
    if i not in ids:
        raise ContractError("feature is not active in the event")
    cij = c.count(i, j)
    if cij == 0:
        raise ContractError("(feature, target) is not a positive pair")
    y = 0.0
    for f in ids:
        cfj = c.count(f, j)
        if cfj:
            y += math.exp(model.adjustment(f, j)) * cfj / c.total(f)
    m_ij = math.exp(model.adjustment(i, j)) * cij / c.total(i)
    return m_ij * (c.total(i) / cij - 1.0 / y)


def leave_one_out_terms(model: SnmModel, event, feature) -> tuple[float, float] | None:
    """(negative part, positive part) of the leave-one-out gradient.

    None for a feature seen once: removing the event leaves no evidence.
    """
    c = model.counts
    ids, j = _event_ids(model, event)
    i = _feature_id(model, feature)
    if i not in ids:
        raise ContractError("feature is not active in the event")
    cij = c.count(i, j)
    if cij == 0:
        raise ContractError("(feature, target) is not a positive pair")
    ci = c.total(i)
    if ci < 2:
        return None
    neg = 0.0
    if ci > cij:
        neg = (ci - cij) / (ci - 1) * math.exp(model.adjustment(i, j, ci - 1, cij))
    if cij < 2:
        return neg, 0.0
    y_loo = 0.0
    for f in ids:
        cf, cfj = c.total(f), c.count(f, j)
        if cf >= 2 and cfj >= 2:
            y_loo += math.exp(model.adjustment(f, j, cf - 1, cfj - 1)) * (cfj - 1) / (cf - 1)
    m_loo = math.exp(model.adjustment(i, j, ci - 1, cij - 1)) * (cij - 1) / (ci - 1)
    return neg, m_loo * (y_loo - 1.0) / y_loo


def gradient_leave_one_out(model: SnmModel, event, feature) -> float:
    """Leave-one-out gradient w.r.t. A(i, target); 0.0 for singleton features."""
    terms = leave_one_out_terms(model, event, feature)
    return 0.0 if terms is None else terms[0] + terms[1]


# -- batch quantities ---------------------------------------------------------


def as_event_arrays(model: SnmModel, events) -> EventArrays:
    if isinstance(events, EventArrays):
        return events
    return model.counts.encode_events(
        (ev if isinstance(ev, Event) else Event(*ev) for ev in events), strict=False
    )


def batch_gradient(model: SnmModel, events, leave_one_out: bool = False) -> np.ndarray:
    """Summed event gradients per weight slot, all taken at the current weights."""
    ev = as_event_arrays(model, events)
    c = model.counts
    flags, h0, H, theta, mask = model.kernel_args()
    out = np.zeros(model.table.size, dtype=np.float64)
    K.run_events(np.arange(len(ev), dtype=np.int64), ev.ptr, ev.features, ev.targets, c.indptr,
                 c.targets, c.counts, c.totals, flags, h0, H, theta, mask, out, 1.0, leave_one_out)
    return out


def total_poisson_loss(model: SnmModel, events, theta=None) -> float:
    """Poisson loss summed over events, with row sums computed at `theta`."""
    ev = as_event_arrays(model, events)
    c = model.counts
    args = model.kernel_args(theta)
    rows = K.row_sums(c.indptr, c.targets, c.counts, c.totals, *args)
    ents = K.entries(c.indptr, c.targets, c.counts, c.totals, *args)
    total = 0.0
    for e in range(len(ev)):
        ids = ev.event_features(e)
        j = ev.targets[e]
        y = 0.0
        for i in ids:
            k = K.find_pair(c.indptr, c.targets, i, j)
            if k >= 0:
                y += ents[k]
        total += rows[ids].sum() - (math.log(y) if y > 0 else -math.inf)
    return total


# -- SGD ----------------------------------------------------------------------


def train(events, model: SnmModel, cfg: TrainerConfig | None = None) -> SnmModel:
    """Train the weights of a copy of `model`; returns the finalized copy.

    In aggregated mode the events must be those the counts were taken from.
    """
    cfg = cfg or TrainerConfig()
    cfg.validate()
    ev = as_event_arrays(model, events)
    c = model.counts
    table = model.table.copy()
    trained = SnmModel(c, table, model.mf_config, model.templates)
    trained._hashes = model._hashes
    flags, h0, H, theta, mask = trained.kernel_args()
    rng = np.random.default_rng(cfg.shuffle_seed)
    workers = cfg.n_workers
    n = len(ev)
    step = cfg.log_every if cfg.log_every and cfg.log_every > 0 else n
    for epoch in range(cfg.epochs):
        order = rng.permutation(n).astype(np.int64)
        # running loss uses row sums refreshed once per epoch
        rows = K.row_sums(c.indptr, c.targets, c.counts, c.totals, flags, h0, H, theta, mask)
        mass = np.add.reduceat(rows[ev.features], ev.ptr[:-1]) if n else np.zeros(0)
        log_y = 0.0
        for start in range(0, n, step):
            chunk = order[start : start + step]
            if cfg.learning_rate == 0.0:
                continue
            if workers == 1:
                log_y += K.run_events(chunk, ev.ptr, ev.features, ev.targets, c.indptr, c.targets,
                                      c.counts, c.totals, flags, h0, H, theta, mask, theta,
                                      -cfg.learning_rate, cfg.leave_one_out)
            else:
                bounds = np.linspace(0, len(chunk), workers + 1).astype(np.int64)
                log_y += K.run_events_hogwild(chunk, bounds, ev.ptr, ev.features, ev.targets,
                                              c.indptr, c.targets, c.counts, c.totals, flags, h0, H,
                                              theta, mask, -cfg.learning_rate, cfg.leave_one_out)
            done = min(start + step, n)
            running = (mass[order[:done]].sum() - log_y) / max(done, 1)
            log.info("epoch %d: %d/%d events, running loss %.4f", epoch + 1, done, n, running)
        if cfg.checkpoint_path:
            snapshot = SnmModel(c, table.copy(), model.mf_config, model.templates)
            snapshot._hashes = trained._hashes
            snapshot.finalize().save(cfg.checkpoint_path)
    return trained.finalize()
