"""Embedding data model and the vector primitives every stage builds on.

All arithmetic is carried out in float64, whatever precision the vectors
were stored in.
"""

from __future__ import annotations

from collections.abc import Iterable, Iterator, Mapping, Sequence
from dataclasses import dataclass

import numpy as np

from .errors import DimensionMismatch, DuplicateId, EmptyList, MissingEmbedding, ZeroVector

ZERO_NORM = 1e-12


def _as_vector(v) -> np.ndarray:
    arr = np.asarray(v, dtype=np.float64)
    if arr.ndim != 1:
        raise DimensionMismatch("expected a 1-D vector, got shape %s" % (arr.shape,))
    return arr


def _checked_norm(v: np.ndarray) -> float:
    n = float(np.linalg.norm(v))
    if not n >= ZERO_NORM:
        raise ZeroVector("vector norm %.3g is below %.0e" % (n, ZERO_NORM))
    return n


@dataclass(frozen=True)
class Embedding:
    """A raw (not length-normalized) utterance embedding.

    Attributes:
      utterance_id: Identifier of the source utterance.
      vector: float64 array of shape ``(D,)``; read-only.
      duration_s: Duration of the source audio in seconds, 0 if unknown.
    """

    utterance_id: str
    vector: np.ndarray
    duration_s: float = 0.0

    def __post_init__(self):
        vec = np.array(self.vector, dtype=np.float64)
        if vec.ndim != 1 or vec.size < 1:
            raise DimensionMismatch("embedding %r must be a non-empty 1-D vector" % self.utterance_id)
        if not np.all(np.isfinite(vec)):
            raise ValueError("embedding %r has non-finite components" % self.utterance_id)
        if not self.duration_s >= 0:
            raise ValueError("duration of %r must be nonnegative" % self.utterance_id)
        vec.setflags(write=False)
        object.__setattr__(self, "vector", vec)
        object.__setattr__(self, "duration_s", float(self.duration_s))

    @property
    def dim(self) -> int:
        return self.vector.shape[0]

    def __eq__(self, other):
        if not isinstance(other, Embedding):
            return NotImplemented
        return (
            self.utterance_id == other.utterance_id
            and self.duration_s == other.duration_s
            and np.array_equal(self.vector, other.vector)
        )

    __hash__ = None


def speaker_label(speaker_id: str) -> str:
    """Validate a speaker identifier (any non-empty string)."""
    if not isinstance(speaker_id, str) or not speaker_id:
        raise ValueError("speaker id must be a non-empty string")
    return speaker_id


def l2_normalize(v) -> np.ndarray:
    """Scale ``v`` to unit Euclidean norm.

    Raises:
      ZeroVector: if ``||v|| < 1e-12``.
    """
    v = _as_vector(v)
    return v / _checked_norm(v)


def cosine(a, b) -> float:
    """Cosine similarity of two nonzero vectors, clamped to [-1, 1]."""
    a = _as_vector(a)
    b = _as_vector(b)
    if a.shape != b.shape:
        raise DimensionMismatch("cannot compare vectors of dims %d and %d" % (a.size, b.size))
    c = float(np.dot(a, b)) / (_checked_norm(a) * _checked_norm(b))
    return min(1.0, max(-1.0, c))


def magnitude(e) -> float:
    """Euclidean norm of the raw embedding vector."""
    v = e.vector if isinstance(e, Embedding) else _as_vector(e)
    top = float(np.max(np.abs(v))) if v.size else 0.0
    if top == 0.0:
        return 0.0
    # rescale first so tiny or huge components do not underflow or overflow
    return top * float(np.linalg.norm(v / top))


def mean_vector(vs: Sequence) -> np.ndarray:
    """Componentwise arithmetic mean of a non-empty list of equal-length vectors."""
    if len(vs) == 0:
        raise EmptyList("cannot average an empty list of vectors")
    rows = [_as_vector(v) for v in vs]
    dim = rows[0].size
    for r in rows:
        if r.size != dim:
            raise DimensionMismatch("vectors of dims %d and %d in one list" % (dim, r.size))
    return np.mean(np.stack(rows), axis=0)


def normalize_rows(mat: np.ndarray) -> np.ndarray:
    """Row-wise :func:`l2_normalize` for a 2-D array."""
    mat = np.asarray(mat, dtype=np.float64)
    norms = np.linalg.norm(mat, axis=1)
    bad = np.flatnonzero(~(norms >= ZERO_NORM))
    if bad.size:
        raise ZeroVector("row %d has norm %.3g" % (bad[0], norms[bad[0]]))
    return mat / norms[:, None]


class EmbeddingStore(Mapping):
    """Insertion-ordered map from utterance id to :class:`Embedding`.

    All embeddings in one store share the same dimension.
    """

    def __init__(self, embeddings: Iterable[Embedding] = ()):
        self._items = {}
        self.dim = None
        for e in embeddings:
            self.add(e)

    def add(self, e: Embedding) -> None:
        if e.utterance_id in self._items:
            raise DuplicateId("duplicate utterance id %r" % e.utterance_id)
        if self.dim is None:
            self.dim = e.dim
        elif e.dim != self.dim:
            raise DimensionMismatch(
                "embedding %r has dim %d, store dim is %d" % (e.utterance_id, e.dim, self.dim)
            )
        self._items[e.utterance_id] = e

    def __getitem__(self, key: str) -> Embedding:
        try:
            return self._items[key]
        except KeyError:
            raise MissingEmbedding(key) from None

    def __iter__(self) -> Iterator[str]:
        return iter(self._items)

    def __len__(self) -> int:
        return len(self._items)

    def __eq__(self, other):
        if not isinstance(other, EmbeddingStore):
            return NotImplemented
        return list(self._items.items()) == list(other._items.items())

    def matrix(self, ids: Sequence[str] | None = None) -> np.ndarray:
        """Stack the raw vectors of ``ids`` (default: all, in order) into an array."""
        ids = list(self) if ids is None else ids
        if not ids:
            return np.zeros((0, self.dim or 0))
        return np.stack([self[i].vector for i in ids])
