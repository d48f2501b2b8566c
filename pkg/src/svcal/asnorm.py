"""Adaptive symmetric score normalization against a speaker-averaged cohort.

The cohort holds one mean embedding per speaker. For an utterance, its
cosine scores against every cohort entry are computed and the ``top_k``
highest kept; their mean and population standard deviation normalize the
trial score. The same mean doubles as the "imposter mean" quality feature
used by QMF.
"""

from __future__ import annotations

from collections import defaultdict
from collections.abc import Iterable, Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .embedding import Embedding, EmbeddingStore, _as_vector, l2_normalize, mean_vector, normalize_rows
from .errors import DegenerateStd, EmptyInput, MissingStats, TopKTooLarge
from .parallel import chunked_map
from .scoring import ScoreTable

DEFAULT_TOP_K = 400
MIN_STD = 1e-9


@dataclass(frozen=True)
class Cohort:
    speakers: tuple
    embeddings: np.ndarray  # raw speaker means, one row per speaker
    top_k: int

    def __post_init__(self):
        if not 1 <= self.top_k <= len(self.speakers):
            raise TopKTooLarge("top_k=%d with a cohort of %d speakers" % (self.top_k, len(self.speakers)))
        units = normalize_rows(self.embeddings)
        units.setflags(write=False)
        object.__setattr__(self, "_units", units)

    def __len__(self):
        return len(self.speakers)

    @property
    def units(self) -> np.ndarray:
        return self._units


@dataclass(frozen=True)
class CohortStats:
    mean: float
    std: float

    @property
    def imposter_mean(self) -> float:
        return self.mean

    def __iter__(self):
        return iter((self.mean, self.std))


def build_cohort(labeled_embeddings: Iterable[tuple], top_k: int = DEFAULT_TOP_K) -> Cohort:
    """Average embeddings speaker-wise into a cohort sorted by speaker id.

    Args:
      labeled_embeddings: ``(speaker_id, Embedding or vector)`` pairs.
      top_k: number of highest cohort scores kept per utterance.
    """
    groups = defaultdict(list)
    for speaker, emb in labeled_embeddings:
        groups[speaker].append(emb.vector if isinstance(emb, Embedding) else emb)
    if not groups:
        raise EmptyInput("no embeddings to build a cohort from")
    if top_k > len(groups):
        raise TopKTooLarge("top_k=%d exceeds the %d cohort speakers" % (top_k, len(groups)))
    speakers = tuple(sorted(groups))
    means = np.stack([mean_vector(groups[s]) for s in speakers])
    return Cohort(speakers, means, int(top_k))


def _stats_from_scores(scores: np.ndarray, top_k: int) -> tuple:
    """Mean and population std of the ``top_k`` largest entries of each row."""
    top = -np.sort(-scores, axis=1)[:, :top_k]
    return top.mean(axis=1), top.std(axis=1)


def cohort_stats(e, cohort: Cohort) -> CohortStats:
    """Top-K cohort score statistics for one embedding.

    Raises:
      ZeroVector: ``e`` is the zero vector.
      DegenerateStd: the top-K scores have std below 1e-9.
    """
    v = e.vector if isinstance(e, Embedding) else _as_vector(e)
    scores = np.clip(cohort.units @ l2_normalize(v), -1.0, 1.0)
    mean, std = _stats_from_scores(scores[None, :], cohort.top_k)
    if std[0] < MIN_STD:
        raise DegenerateStd("top-%d cohort scores have std %.3g" % (cohort.top_k, std[0]))
    return CohortStats(float(mean[0]), float(std[0]))


def compute_stats_map(
    store: EmbeddingStore,
    cohort: Cohort,
    ids: Sequence[str] | None = None,
    threads: int | None = None,
) -> dict:
    """Cohort statistics for many utterances at once, keyed by utterance id."""
    ids = list(store) if ids is None else list(ids)
    if not ids:
        return {}
    units = normalize_rows(store.matrix(ids))

    def work(a, b):
        scores = np.clip(units[a:b] @ cohort.units.T, -1.0, 1.0)
        mean, std = _stats_from_scores(scores, cohort.top_k)
        return np.stack([mean, std], axis=1)

    stats = chunked_map(work, len(ids), threads, chunk=256)
    bad = np.flatnonzero(stats[:, 1] < MIN_STD)
    if bad.size:
        raise DegenerateStd("utterance %r has degenerate cohort std" % ids[bad[0]])
    return {utt: CohortStats(float(m), float(s)) for utt, (m, s) in zip(ids, stats)}


def scale_stats(stats: Mapping[str, CohortStats], cmfs: Mapping[str, float]) -> dict:
    """Statistics of CMF-scaled cohort scores.

    Multiplying every cohort cosine of an utterance by its CMF multiplies the
    top-K mean and std by the same factor; cohort entries count as CMF 1.
    """
    out = {}
    for utt, st in stats.items():
        c = float(cmfs[utt])
        if c * st.std < MIN_STD:
            raise DegenerateStd("CMF-scaled cohort std of %r is below %.0e" % (utt, MIN_STD))
        out[utt] = CohortStats(c * st.mean, c * st.std)
    return out


def asnorm_score(raw: float, enroll_stats, test_stats) -> float:
    """``0.5 * ((raw - m_e) / s_e + (raw - m_t) / s_t)``.

    ``enroll_stats`` and ``test_stats`` are ``CohortStats`` or ``(mean, std)``.
    """
    me, se = enroll_stats
    mt, st = test_stats
    if se < MIN_STD or st < MIN_STD:
        raise DegenerateStd("normalization std below %.0e" % MIN_STD)
    return 0.5 * ((raw - me) / se + (raw - mt) / st)


def asnorm_table(
    table: ScoreTable,
    stats: Mapping[str, CohortStats],
    source: str | None = None,
) -> ScoreTable:
    """Add an ``asnorm`` column normalizing ``source`` (default: cmf if present, else raw)."""
    if source is None:
        source = "cmf" if "cmf" in table.columns else "raw"
    scores = table[source]
    n = len(table)
    me, se, mt, st = (np.empty(n) for _ in range(4))
    for k, t in enumerate(table.trials):
        for utt, m, s in ((t.enroll_id, me, se), (t.test_id, mt, st)):
            if utt not in stats:
                raise MissingStats(utt)
            m[k], s[k] = stats[utt]
    if n and (se.min() < MIN_STD or st.min() < MIN_STD):
        raise DegenerateStd("normalization std below %.0e" % MIN_STD)
    normed = 0.5 * ((scores - me) / se + (scores - mt) / st)
    return table.with_column("asnorm", normed)
