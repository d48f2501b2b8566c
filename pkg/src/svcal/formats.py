"""On-disk formats: embedding stores, trial lists, score files and side tables.

Binary embedding store (little-endian)::

    b"EMB1"  u32 dim  u32 count
    count x ( u16 id_len  id_len bytes UTF-8 id  dim x f32 )

Text formats are whitespace-separated, one record per line; blank lines and
lines starting with ``#`` are ignored on read.

    trials        ``<label> <enroll> <test>`` (label 0/1) or ``<enroll> <test>``
    scores        ``<enroll> <test> <score>`` with 6 decimals
    corpus        ``<utt>\\t<speaker>\\t<duration_s>``
    CMF map       ``<utt>\\t<cmf>``
    cohort stats  ``<utt>\\t<mean>\\t<std>``
    embedding TSV ``<utt>\\t<v1>\\t...\\t<vD>``
"""

from __future__ import annotations

import dataclasses
import struct
from collections.abc import Mapping, Sequence
from pathlib import Path

import numpy as np

from .asnorm import CohortStats
from .embedding import Embedding, EmbeddingStore
from .errors import BadMagic, DimensionMismatch, DuplicateId, FormatError, TruncatedFile
from .scoring import NONTARGET, TARGET, Trial
from .synth import SynthSpec

MAGIC = b"EMB1"
_HEADER = struct.Struct("<4sII")
_ID_LEN = struct.Struct("<H")
SCORE_FORMAT = "%.6f"
CORPUS_TAG = "# synth"


# ---------------------------------------------------------------------------
# embedding stores


def write_store(path, store: EmbeddingStore) -> None:
    """Write ``store`` in the binary layout; vectors are rounded to float32."""
    if store.dim is None and len(store):
        raise DimensionMismatch("store has no dimension")
    dim = store.dim or 0
    parts = [_HEADER.pack(MAGIC, dim, len(store))]
    for utt, emb in store.items():
        raw = utt.encode("utf-8")
        if len(raw) > 0xFFFF:
            raise FormatError("utterance id of %d bytes does not fit a u16 length" % len(raw))
        if emb.dim != dim:
            raise DimensionMismatch("embedding %r has dim %d, store dim is %d" % (utt, emb.dim, dim))
        parts.append(_ID_LEN.pack(len(raw)))
        parts.append(raw)
        parts.append(emb.vector.astype("<f4").tobytes())
    Path(path).write_bytes(b"".join(parts))


def read_store(path, durations: Mapping[str, float] | None = None) -> EmbeddingStore:
    """Read a binary store. Durations are taken from ``durations`` (default 0).

    Raises:
      BadMagic, TruncatedFile, DuplicateId, FormatError
    """
    data = Path(path).read_bytes()
    if len(data) < 4 or data[:4] != MAGIC:
        raise BadMagic("%s: not an EMB1 embedding store" % path)
    if len(data) < _HEADER.size:
        raise TruncatedFile("%s: header cut short" % path)
    _, dim, count = _HEADER.unpack_from(data)
    if count and dim < 1:
        raise FormatError("%s: dimension must be positive" % path)
    durations = durations or {}
    store = EmbeddingStore()
    pos = _HEADER.size
    vec_bytes = 4 * dim
    for k in range(count):
        if pos + _ID_LEN.size > len(data):
            raise TruncatedFile("%s: record %d of %d is missing" % (path, k + 1, count))
        (n,) = _ID_LEN.unpack_from(data, pos)
        pos += _ID_LEN.size
        if pos + n + vec_bytes > len(data):
            raise TruncatedFile("%s: record %d of %d is cut short" % (path, k + 1, count))
        try:
            utt = data[pos:pos + n].decode("utf-8")
        except UnicodeDecodeError as exc:
            raise FormatError("%s: record %d id is not UTF-8" % (path, k + 1)) from exc
        pos += n
        vec = np.frombuffer(data, dtype="<f4", count=dim, offset=pos).astype(np.float64)
        pos += vec_bytes
        if utt in store:
            raise DuplicateId("%s: duplicate utterance id %r" % (path, utt))
        store.add(Embedding(utt, vec, durations.get(utt, 0.0)))
    if pos != len(data):
        raise FormatError("%s: %d trailing bytes after %d records" % (path, len(data) - pos, count))
    return store


def write_store_tsv(path, store: EmbeddingStore) -> None:
    """Text store; values are written with full float64 precision."""
    with open(path, "w", encoding="utf-8") as f:
        for utt, emb in store.items():
            f.write(utt + "\t" + "\t".join(repr(float(v)) for v in emb.vector) + "\n")


def read_store_tsv(path, durations: Mapping[str, float] | None = None) -> EmbeddingStore:
    durations = durations or {}
    store = EmbeddingStore()
    for lineno, fields in _records(path, sep="\t"):
        if len(fields) < 2:
            raise FormatError("%s:%d: expected an id and at least one value" % (path, lineno))
        utt = fields[0]
        vec = _floats(fields[1:], path, lineno)
        if utt in store:
            raise DuplicateId("%s:%d: duplicate utterance id %r" % (path, lineno, utt))
        store.add(Embedding(utt, vec, durations.get(utt, 0.0)))
    return store


TSV_SUFFIXES = (".tsv", ".txt")


def load_store(path, durations: Mapping[str, float] | None = None) -> EmbeddingStore:
    """TSV store for ``.tsv``/``.txt`` paths, binary store otherwise."""
    if Path(path).suffix.lower() in TSV_SUFFIXES:
        return read_store_tsv(path, durations)
    return read_store(path, durations)


# ---------------------------------------------------------------------------
# text helpers


def _records(path, sep=None):
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            line = line.rstrip("\n").rstrip("\r")
            if not line.strip() or line.lstrip().startswith("#"):
                continue
            yield lineno, line.split(sep) if sep else line.split()


def _floats(tokens, path, lineno) -> np.ndarray:
    try:
        vals = np.array([float(t) for t in tokens], dtype=np.float64)
    except ValueError as exc:
        raise FormatError("%s:%d: %s" % (path, lineno, exc)) from exc
    if not np.all(np.isfinite(vals)):
        raise FormatError("%s:%d: non-finite value" % (path, lineno))
    return vals


def _write_lines(path, lines) -> None:
    with open(path, "w", encoding="utf-8") as f:
        for line in lines:
            f.write(line + "\n")


# ---------------------------------------------------------------------------
# trials and scores


def read_trials(path) -> list:
    """Labeled (``1 a b``) or unlabeled (``a b``) trial list; no mixing."""
    trials, labeled = [], None
    for lineno, fields in _records(path):
        if len(fields) == 3:
            if fields[0] not in ("0", "1"):
                raise FormatError("%s:%d: label must be 0 or 1, got %r" % (path, lineno, fields[0]))
            trial = Trial(fields[1], fields[2], TARGET if fields[0] == "1" else NONTARGET)
        elif len(fields) == 2:
            trial = Trial(fields[0], fields[1])
        else:
            raise FormatError("%s:%d: expected 2 or 3 fields, got %d" % (path, lineno, len(fields)))
        if labeled is None:
            labeled = trial.label is not None
        elif labeled != (trial.label is not None):
            raise FormatError("%s:%d: labeled and unlabeled trials mixed" % (path, lineno))
        trials.append(trial)
    return trials


def write_trials(path, trials: Sequence[Trial]) -> None:
    def fmt(t):
        if t.label is None:
            return "%s %s" % (t.enroll_id, t.test_id)
        return "%d %s %s" % (t.label == TARGET, t.enroll_id, t.test_id)

    _write_lines(path, (fmt(t) for t in trials))


def write_scores(path, trials: Sequence[Trial], scores) -> None:
    scores = np.asarray(scores, dtype=np.float64)
    if scores.shape != (len(trials),):
        raise DimensionMismatch("%d scores for %d trials" % (scores.size, len(trials)))
    _write_lines(path, ("%s %s %s" % (t.enroll_id, t.test_id, SCORE_FORMAT % s)
                        for t, s in zip(trials, scores)))


def read_scores(path) -> tuple:
    """Returns ``(unlabeled trials, float64 scores)`` in file order."""
    trials, scores = [], []
    for lineno, fields in _records(path):
        if len(fields) != 3:
            raise FormatError("%s:%d: expected `enroll test score`" % (path, lineno))
        trials.append(Trial(fields[0], fields[1]))
        scores.extend(_floats(fields[2:], path, lineno))
    return trials, np.array(scores, dtype=np.float64)


# ---------------------------------------------------------------------------
# corpus metadata and per-utterance side tables


def write_corpus(path, corpus: Sequence[tuple], spec: SynthSpec | None = None) -> None:
    """Corpus TSV; with ``spec`` a header line records how to regenerate the frames."""
    lines = []
    if spec is not None:
        pairs = []
        for f in dataclasses.fields(spec):
            v = getattr(spec, f.name)
            pairs.append("%s=%s" % (f.name, ",".join(map(repr, v)) if isinstance(v, tuple) else repr(v)))
        lines.append(CORPUS_TAG + " " + " ".join(pairs))
    lines.extend("%s\t%s\t%s" % (u, s, repr(float(d))) for u, s, d in corpus)
    _write_lines(path, lines)


def read_corpus(path) -> list:
    out, seen = [], set()
    for lineno, fields in _records(path, sep="\t"):
        if len(fields) != 3:
            raise FormatError("%s:%d: expected utterance, speaker, duration" % (path, lineno))
        d = _floats(fields[2:], path, lineno)[0]
        if d < 0:
            raise FormatError("%s:%d: negative duration" % (path, lineno))
        if fields[0] in seen:
            raise DuplicateId("%s:%d: duplicate utterance id %r" % (path, lineno, fields[0]))
        seen.add(fields[0])
        out.append((fields[0], fields[1], float(d)))
    return out


def read_corpus_spec(path) -> SynthSpec:
    """The generator settings from a corpus header written by :func:`write_corpus`."""
    with open(path, encoding="utf-8") as f:
        first = f.readline().rstrip("\n")
    if not first.startswith(CORPUS_TAG + " "):
        raise FormatError("%s: no `%s` header; the corpus was not generated by synth" % (path, CORPUS_TAG))
    kinds = {f.name: f.type for f in dataclasses.fields(SynthSpec)}
    values = {}
    for item in first[len(CORPUS_TAG) + 1:].split():
        name, sep, text = item.partition("=")
        if not sep or name not in kinds:
            raise FormatError("%s: unknown generator setting %r" % (path, item))
        try:
            if name == "frames_range":
                values[name] = tuple(int(t) for t in text.split(","))
            elif kinds[name] in ("int", int):
                values[name] = int(text)
            else:
                values[name] = float(text)
        except ValueError as exc:
            raise FormatError("%s: bad value for %s: %s" % (path, name, exc)) from exc
    spec = SynthSpec(**values)
    spec.validate()
    return spec


def write_value_map(path, values: Mapping[str, float]) -> None:
    """``utt\\tvalue`` lines with full precision (used for CMF maps)."""
    _write_lines(path, ("%s\t%r" % (u, float(v)) for u, v in values.items()))


def read_value_map(path) -> dict:
    out = {}
    for lineno, fields in _records(path, sep="\t"):
        if len(fields) != 2:
            raise FormatError("%s:%d: expected `utterance<TAB>value`" % (path, lineno))
        if fields[0] in out:
            raise DuplicateId("%s:%d: duplicate utterance id %r" % (path, lineno, fields[0]))
        out[fields[0]] = float(_floats(fields[1:], path, lineno)[0])
    return out


def write_stats(path, stats: Mapping[str, CohortStats]) -> None:
    _write_lines(path, ("%s\t%r\t%r" % (u, float(s.mean), float(s.std)) for u, s in stats.items()))


def read_stats(path) -> dict:
    out = {}
    for lineno, fields in _records(path, sep="\t"):
        if len(fields) != 3:
            raise FormatError("%s:%d: expected `utterance<TAB>mean<TAB>std`" % (path, lineno))
        if fields[0] in out:
            raise DuplicateId("%s:%d: duplicate utterance id %r" % (path, lineno, fields[0]))
        m, s = _floats(fields[1:], path, lineno)
        out[fields[0]] = CohortStats(float(m), float(s))
    return out


def read_id_list(path) -> list:
    """One identifier per line (e.g. cohort speakers)."""
    return [fields[0] for _, fields in _records(path)]
