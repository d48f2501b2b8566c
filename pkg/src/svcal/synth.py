"""Synthetic corpus and a toy statistics-pooling embedder.

These stand in for real audio and a trained network so the backend can be
exercised end to end. Frames of an utterance are

    frames[t] = speaker_offset
                + q * noise_scale * (session
                                     + amp[t] * (drift * (event[t] + noise_type_scale * g)
                                                 + frame_noise * eps[t]))

where ``speaker_offset`` lives in a ``latent_dim``-dimensional subspace of
the feature space, ``session`` is one draw per utterance, ``event[t]`` is a
piecewise-constant nuisance that changes every ``drift_frames`` frames or
so with burst amplitude ``amp`` (exponential), ``eps`` is drawn per frame
and ``q`` is a per-utterance quality multiplier (log-normal with spread
``quality_spread``). ``g`` is one of ``n_noise_types`` corpus-wide noise
directions; an utterance uses its speaker's home type with probability
``home_noise_prob`` and a random type otherwise. Bursts of a shared noise
type make unrelated noisy utterances look alike, so noisy utterances have
less reliable whole-utterance embeddings, less consistent segments and
inflated nontarget scores.

Everything is a pure function of the seed; per-utterance randomness comes
from its own stream so any utterance can be regenerated on its own.
"""

from __future__ import annotations

from collections.abc import Iterator
from dataclasses import dataclass
from functools import lru_cache

import numpy as np

from .embedding import Embedding
from .errors import InvalidSpec, RangeOutOfBounds
from .segmentation import EVAL_WINDOW, MIN_SEGMENTS, MIN_WINDOW, SegmentSet, plan_segments

FRAMES_PER_SECOND = 100
FEATURE_DIM = 80

_SPEAKER_STREAM = 1
_DURATION_STREAM = 2
_UTTERANCE_STREAM = 3
_MIXING_STREAM = 4
_NOISE_TYPE_STREAM = 5


@dataclass(frozen=True)
class SynthSpec:
    n_speakers: int = 50
    utts_per_speaker: int = 10
    dim: int = FEATURE_DIM
    frames_range: tuple = (200, 1500)
    speaker_scale: float = 1.0
    noise_scale: float = 0.5
    seed: int = 0
    latent_dim: int = 16
    frame_noise: float = 1.0
    drift: float = 1.0
    drift_frames: int = 150
    quality_spread: float = 0.5
    n_noise_types: int = 4
    noise_type_scale: float = 0.0
    home_noise_prob: float = 0.0

    def validate(self) -> None:
        lo, hi = self.frames_range
        checks = (
            (self.n_speakers >= 2, "n_speakers must be at least 2"),
            (self.utts_per_speaker >= 1, "utts_per_speaker must be positive"),
            (self.dim >= 2, "dim must be at least 2"),
            (1 <= lo <= hi, "frames_range must satisfy 1 <= low <= high"),
            (self.speaker_scale >= 0, "speaker_scale must be nonnegative"),
            (self.noise_scale >= 0, "noise_scale must be nonnegative"),
            (1 <= self.latent_dim <= self.dim, "latent_dim must lie in [1, dim]"),
            (self.frame_noise >= 0, "frame_noise must be nonnegative"),
            (self.drift >= 0, "drift must be nonnegative"),
            (self.drift_frames >= 2, "drift_frames must be at least 2"),
            (self.quality_spread >= 0, "quality_spread must be nonnegative"),
            (self.n_noise_types >= 1, "n_noise_types must be positive"),
            (self.noise_type_scale >= 0, "noise_type_scale must be nonnegative"),
            (0 <= self.home_noise_prob <= 1, "home_noise_prob must lie in [0, 1]"),
        )
        for ok, msg in checks:
            if not ok:
                raise InvalidSpec(msg)


@dataclass(frozen=True)
class FrameMatrix:
    utterance_id: str
    frames: np.ndarray
    speaker: str

    @property
    def n_frames(self) -> int:
        return self.frames.shape[0]

    @property
    def duration_s(self) -> float:
        return self.n_frames / FRAMES_PER_SECOND


def speaker_id(i: int) -> str:
    return "spk%04d" % i


def utterance_id(i: int, j: int) -> str:
    return "spk%04d-u%03d" % (i, j)


def corpus_metadata(spec: SynthSpec) -> list:
    """``(utterance_id, speaker_id, duration_s)`` for every utterance, without frames."""
    spec.validate()
    rng = np.random.default_rng([spec.seed, _DURATION_STREAM])
    lo, hi = spec.frames_range
    lengths = rng.integers(lo, hi + 1, size=(spec.n_speakers, spec.utts_per_speaker))
    return [
        (utterance_id(i, j), speaker_id(i), int(lengths[i, j]) / FRAMES_PER_SECOND)
        for i in range(spec.n_speakers)
        for j in range(spec.utts_per_speaker)
    ]


def _speaker_offsets(spec: SynthSpec) -> np.ndarray:
    mix_rng = np.random.default_rng([spec.seed, _MIXING_STREAM])
    basis, _ = np.linalg.qr(mix_rng.standard_normal((spec.dim, spec.latent_dim)))
    rng = np.random.default_rng([spec.seed, _SPEAKER_STREAM])
    latent = spec.speaker_scale * rng.standard_normal((spec.n_speakers, spec.latent_dim))
    return latent @ basis.T


def _noise_types(spec: SynthSpec) -> np.ndarray:
    rng = np.random.default_rng([spec.seed, _NOISE_TYPE_STREAM])
    return rng.standard_normal((spec.n_noise_types, spec.dim))


def _utterance_frames(spec, offsets, noise_types, i, j, n_frames) -> np.ndarray:
    rng = np.random.default_rng([spec.seed, _UTTERANCE_STREAM, i, j])
    q = float(np.exp(spec.quality_spread * rng.standard_normal()))
    session = rng.standard_normal(spec.dim)
    eps = rng.standard_normal((n_frames, spec.dim))
    half = spec.drift_frames // 2
    lengths = rng.integers(half, spec.drift_frames + half + 1, size=n_frames // half + 1)
    chunk = np.repeat(np.arange(lengths.size), lengths)[:n_frames]
    events = rng.standard_normal((lengths.size, spec.dim))
    amp = rng.exponential(1.0, size=lengths.size)[chunk, None]
    kind = rng.integers(spec.n_noise_types)
    if rng.random() < spec.home_noise_prob:
        kind = i % spec.n_noise_types
    burst = events + spec.noise_type_scale * noise_types[kind]
    scale = q * spec.noise_scale
    return offsets[i] + scale * (session + amp * (spec.drift * burst[chunk] + spec.frame_noise * eps))


def iter_corpus(spec: SynthSpec) -> Iterator[FrameMatrix]:
    """Yield utterances one at a time, speaker-major."""
    meta = corpus_metadata(spec)
    offsets = _speaker_offsets(spec)
    noise_types = _noise_types(spec)
    k = 0
    for i in range(spec.n_speakers):
        for j in range(spec.utts_per_speaker):
            utt, spk, dur = meta[k]
            k += 1
            n_frames = int(round(dur * FRAMES_PER_SECOND))
            yield FrameMatrix(utt, _utterance_frames(spec, offsets, noise_types, i, j, n_frames), spk)


def generate_corpus(spec: SynthSpec) -> list:
    """All utterances as a list. Use :func:`iter_corpus` for large corpora."""
    return list(iter_corpus(spec))


@lru_cache(maxsize=8)
def _projection(seed: int, n_in: int, n_out: int) -> np.ndarray:
    rng = np.random.default_rng([seed, n_in, n_out])
    proj = rng.standard_normal((n_in, n_out)) / np.sqrt(n_in)
    # the std block ignores the overall noise level: a constant std vector maps to 0
    half = n_in // 2
    proj[half:] -= proj[half:].mean(axis=0)
    proj.setflags(write=False)
    return proj


def pooled_stats(frames: np.ndarray) -> np.ndarray:
    """Concatenated per-dimension mean and standard deviation over frames."""
    return np.concatenate([frames.mean(axis=0), frames.std(axis=0)])


def toy_embed(
    frames: FrameMatrix,
    start: int = 0,
    end: int | None = None,
    projection_seed: int = 0,
    dim_out: int = 64,
) -> Embedding:
    """Statistics pooling over ``[start, end)`` followed by a fixed random projection.

    The std half is projected with zero-mean columns, so a uniform change of
    frame spread leaves the embedding unchanged (as a trained extractor
    would). The output is deliberately not length-normalized.

    Raises:
      RangeOutOfBounds: the range is empty or falls outside the matrix.
    """
    n = frames.n_frames
    end = n if end is None else end
    if not 0 <= start < end <= n:
        raise RangeOutOfBounds("range [%d, %d) outside %d frames of %r" % (start, end, n, frames.utterance_id))
    stats = pooled_stats(frames.frames[start:end])
    vec = stats @ _projection(projection_seed, stats.size, dim_out)
    return Embedding(frames.utterance_id, vec, (end - start) / FRAMES_PER_SECOND)


@dataclass(frozen=True)
class EmbedConfig:
    projection_seed: int = 0
    dim_out: int = 64
    window: int = EVAL_WINDOW
    window_min: int = MIN_WINDOW
    min_segments: int = MIN_SEGMENTS


def embed_utterance(frames: FrameMatrix, config: EmbedConfig, n_frames: int | None = None,
                    utt_id: str | None = None) -> tuple:
    """Whole-utterance embedding and segment set, optionally of the first ``n_frames``.

    Returns ``(Embedding, SegmentSet)``; both carry ``utt_id`` (default: the
    utterance id).
    """
    n = frames.n_frames if n_frames is None else n_frames
    utt_id = utt_id or frames.utterance_id
    whole = toy_embed(frames, 0, n, config.projection_seed, config.dim_out)
    whole = Embedding(utt_id, whole.vector, whole.duration_s)
    plan = plan_segments(n, config.window, config.min_segments, config.window_min)
    segs = [toy_embed(frames, a, b, config.projection_seed, config.dim_out) for a, b in plan.ranges]
    return whole, SegmentSet.from_segments(utt_id, segs)
