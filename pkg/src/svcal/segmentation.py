"""Half-overlapping segmentation, consistency vectors and CMF.

An utterance of ``T`` frames is cut into windows that overlap by half their
length. Each window yields a segment embedding; the sum of the unit-length
segment embeddings is the consistency vector ``c`` and ``||c|| / N`` is the
Consistency Measure Factor. CMF is 1 when every segment points the same
way and shrinks as they spread out.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .embedding import Embedding, _as_vector, cosine, normalize_rows
from .errors import DimensionMismatch, EmptyList, TooShort

EVAL_WINDOW = 400
SUBMISSION_WINDOW = 200
MIN_WINDOW = 100
MIN_SEGMENTS = 2


@dataclass(frozen=True)
class SegmentPlan:
    total_frames: int
    window: int
    hop: int
    ranges: tuple

    @property
    def count(self) -> int:
        return len(self.ranges)


def _starts(total_frames: int, window: int) -> list[int]:
    if total_frames < window:
        return []
    hop = window // 2
    starts = list(range(0, total_frames - window + 1, hop))
    if starts[-1] != total_frames - window:
        starts.append(total_frames - window)
    return starts


def plan_segments(
    total_frames: int,
    window: int = EVAL_WINDOW,
    min_segments: int = MIN_SEGMENTS,
    window_min: int = MIN_WINDOW,
) -> SegmentPlan:
    """Lay out half-overlapping windows over ``total_frames`` frames.

    Windows start at ``0, hop, 2*hop, ...`` with ``hop = window // 2``; when
    the last one stops short of the end, a right-anchored window
    ``[total_frames - window, total_frames)`` is appended. If fewer than
    ``min_segments`` windows fit, the window is halved (never below
    ``window_min``) and the layout redone.

    Raises:
      TooShort: if ``total_frames < window_min``.
    """
    for name, value in (("total_frames", total_frames), ("window", window),
                        ("min_segments", min_segments), ("window_min", window_min)):
        if int(value) != value or value < 1:
            raise ValueError("%s must be a positive integer, got %r" % (name, value))
    if window % 2 or window_min % 2:
        raise ValueError("window and window_min must be even")
    if total_frames < window_min:
        raise TooShort("%d frames is below the minimum window of %d" % (total_frames, window_min))

    starts = _starts(total_frames, window)
    while len(starts) < min_segments and window > window_min:
        window = max(window // 2, window_min)
        starts = _starts(total_frames, window)
    ranges = tuple((s, s + window) for s in starts)
    return SegmentPlan(total_frames, window, window // 2, ranges)


def _unit_rows(segments: Sequence) -> np.ndarray:
    if len(segments) == 0:
        raise EmptyList("no segment embeddings")
    rows = [s.vector if isinstance(s, Embedding) else _as_vector(s) for s in segments]
    dim = rows[0].size
    if any(r.size != dim for r in rows):
        raise DimensionMismatch("segment embeddings differ in dimension")
    return normalize_rows(np.stack(rows))


def consistency_vector(segments: Sequence) -> np.ndarray:
    """Sum of the unit-normalized segment embeddings."""
    return _unit_rows(segments).sum(axis=0)


def _cmf_from_units(units: np.ndarray) -> float:
    if np.all(units == units[0]):
        # identical directions: exactly 1, without summation round-off
        return 1.0
    value = float(np.linalg.norm(units.sum(axis=0))) / units.shape[0]
    return min(1.0, value)


def cmf(segments: Sequence) -> float:
    """Consistency Measure Factor: ``||consistency_vector|| / N`` in [0, 1]."""
    return _cmf_from_units(_unit_rows(segments))


def segment_score(segments_b: Sequence, y) -> float:
    """Mean cosine between each segment of utterance B and embedding ``y``."""
    y = y.vector if isinstance(y, Embedding) else _as_vector(y)
    if len(segments_b) == 0:
        raise EmptyList("no segment embeddings")
    return float(np.mean([cosine(s.vector if isinstance(s, Embedding) else s, y)
                          for s in segments_b]))


@dataclass(frozen=True)
class SegmentSet:
    """The segment embeddings of one utterance with their c and CMF."""

    utterance_id: str
    segment_embeddings: tuple
    consistency_vector: np.ndarray
    cmf: float

    @classmethod
    def from_segments(cls, utterance_id: str, segments: Sequence[Embedding]) -> "SegmentSet":
        units = _unit_rows(segments)
        c = units.sum(axis=0)
        c.setflags(write=False)
        return cls(utterance_id, tuple(segments), c, _cmf_from_units(units))

    def __len__(self):
        return len(self.segment_embeddings)


__all__ = [
    "EVAL_WINDOW", "SUBMISSION_WINDOW", "MIN_WINDOW", "MIN_SEGMENTS",
    "SegmentPlan", "SegmentSet", "plan_segments", "consistency_vector", "cmf",
    "segment_score",
]
