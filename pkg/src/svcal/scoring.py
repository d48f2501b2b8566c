"""Trial scoring: raw cosine and CMF-scaled scores over a trial list."""

from __future__ import annotations

from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .embedding import Embedding, EmbeddingStore, cosine, normalize_rows
from .errors import MissingCmf, OutOfRange, TrialMismatch
from .parallel import chunked_map

TARGET = "target"
NONTARGET = "nontarget"
COLUMNS = ("raw", "cmf", "asnorm", "qmf", "fused")


@dataclass(frozen=True)
class Trial:
    enroll_id: str
    test_id: str
    label: str | None = None

    def __post_init__(self):
        if self.label not in (None, TARGET, NONTARGET):
            raise ValueError("trial label must be target, nontarget or None, got %r" % (self.label,))

    @property
    def is_target(self) -> bool | None:
        return None if self.label is None else self.label == TARGET


@dataclass
class ScoreTable:
    """Per-trial score columns, each aligned index-for-index with ``trials``."""

    trials: list
    columns: dict = field(default_factory=dict)

    def __post_init__(self):
        self.trials = list(self.trials)
        for name, col in list(self.columns.items()):
            self.columns[name] = self._check(name, col)

    def _check(self, name, col) -> np.ndarray:
        col = np.asarray(col, dtype=np.float64)
        if col.shape != (len(self.trials),):
            raise TrialMismatch("column %r has %d scores for %d trials" % (name, col.size, len(self.trials)))
        if not np.all(np.isfinite(col)):
            raise ValueError("column %r contains non-finite scores" % name)
        return col

    def __len__(self):
        return len(self.trials)

    def __getitem__(self, name: str) -> np.ndarray:
        return self.columns[name]

    def with_column(self, name: str, values) -> "ScoreTable":
        cols = dict(self.columns)
        cols[name] = self._check(name, values)
        return ScoreTable(self.trials, cols)

    def labels(self) -> np.ndarray:
        """Boolean target mask; raises if any trial is unlabeled."""
        if any(t.label is None for t in self.trials):
            raise ValueError("trial list is not fully labeled")
        return np.array([t.label == TARGET for t in self.trials], dtype=bool)

    def same_trials(self, other: "ScoreTable") -> bool:
        return [(t.enroll_id, t.test_id) for t in self.trials] == [
            (t.enroll_id, t.test_id) for t in other.trials
        ]


def raw_score(enroll: Embedding, test: Embedding) -> float:
    """Cosine of the whole-utterance embeddings."""
    return cosine(enroll.vector, test.vector)


def cmf_calibrated_score(cmf_a: float, cmf_b: float, raw: float) -> float:
    """Scale a cosine score by the CMF of both sides: ``cmf_a * cmf_b * raw``."""
    if not (0.0 <= cmf_a <= 1.0 and 0.0 <= cmf_b <= 1.0):
        raise OutOfRange("CMF values must lie in [0, 1], got %r and %r" % (cmf_a, cmf_b))
    if not -1.0 <= raw <= 1.0:
        raise OutOfRange("raw cosine must lie in [-1, 1], got %r" % (raw,))
    return cmf_a * cmf_b * raw


def _index(trials: Sequence[Trial], store: EmbeddingStore):
    ids = []
    pos = {}
    enroll = np.empty(len(trials), dtype=np.int64)
    test = np.empty(len(trials), dtype=np.int64)
    for k, t in enumerate(trials):
        for utt, out in ((t.enroll_id, enroll), (t.test_id, test)):
            if utt not in pos:
                store[utt]  # raises MissingEmbedding
                pos[utt] = len(ids)
                ids.append(utt)
            out[k] = pos[utt]
    return ids, enroll, test


def pair_cosines(units: np.ndarray, left: np.ndarray, right: np.ndarray,
                 threads: int | None = None) -> np.ndarray:
    """Row-wise dot products ``units[left[k]] . units[right[k]]`` clamped to [-1, 1]."""

    def work(a, b):
        prod = np.einsum("ij,ij->i", units[left[a:b]], units[right[a:b]])
        return np.clip(prod, -1.0, 1.0)

    return chunked_map(work, len(left), threads)


def score_trials(
    trials: Sequence[Trial],
    embeddings: EmbeddingStore,
    cmfs: Mapping[str, float] | None = None,
    threads: int | None = None,
) -> ScoreTable:
    """Score every trial; adds a ``cmf`` column when a CMF map is given.

    Raises:
      MissingEmbedding: a trial id is absent from ``embeddings``.
      MissingCmf: ``cmfs`` is given but lacks a trial id.
    """
    trials = list(trials)
    ids, enroll, test = _index(trials, embeddings)
    units = normalize_rows(embeddings.matrix(ids)) if ids else np.zeros((0, 1))
    raw = pair_cosines(units, enroll, test, threads) if trials else np.zeros(0)
    table = ScoreTable(trials, {"raw": raw})
    if cmfs is not None:
        factors = np.empty(len(ids))
        for k, utt in enumerate(ids):
            if utt not in cmfs:
                raise MissingCmf(utt)
            value = float(cmfs[utt])
            if not 0.0 <= value <= 1.0:
                raise OutOfRange("CMF of %r is %r, outside [0, 1]" % (utt, value))
            factors[k] = value
        table = table.with_column("cmf", factors[enroll] * factors[test] * raw)
    return table
