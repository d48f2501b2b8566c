"""Quality-measure-function calibration.

A logistic regression maps a trial score plus quality measures of both
sides (duration, imposter mean from AS-Norm, embedding magnitude) to a
calibrated log-odds score. Training trials are drawn in three duration
conditions (short-short, long-long, long-short) with a fixed target ratio.
"""

from __future__ import annotations

import logging
import math
from collections import defaultdict
from collections.abc import Mapping, Sequence
from dataclasses import dataclass, field

import numpy as np

from .embedding import EmbeddingStore, magnitude
from .errors import (
    EmptyBucket,
    FormatError,
    InsufficientSpeakers,
    MissingStats,
    NonFiniteLoss,
    NonpositiveDuration,
    SingleClass,
)
from .scoring import NONTARGET, TARGET, ScoreTable, Trial

logger = logging.getLogger(__name__)

FRAMES_PER_SECOND = 100
FEATURE_NAMES = (
    "score",
    "log_dur_enroll",
    "log_dur_test",
    "imposter_mean_enroll",
    "imposter_mean_test",
    "log_mag_enroll",
    "log_mag_test",
)
LINEAR_FEATURE_NAMES = (
    "score",
    "dur_enroll",
    "dur_test",
    "imposter_mean_enroll",
    "imposter_mean_test",
    "mag_enroll",
    "mag_test",
)
CONDITIONS = ("short-short", "long-long", "long-short")
MIN_STD = 1e-9


# ---------------------------------------------------------------------------
# training-trial sampler


@dataclass(frozen=True)
class SamplerSpec:
    long_threshold_s: float = 5.0
    short_clip_range_s: tuple = (2.0, 5.0)
    pairs_per_condition: int = 10000
    target_ratio: float = 0.5

    def __post_init__(self):
        lo, hi = self.short_clip_range_s
        if not 0 < lo < hi <= self.long_threshold_s:
            raise ValueError("need 0 < short clip low < high <= long threshold")
        if not 0 < self.target_ratio < 1:
            raise ValueError("target_ratio must be in (0, 1)")
        if self.pairs_per_condition < 1:
            raise ValueError("pairs_per_condition must be positive")


@dataclass(frozen=True)
class SampledTrial(Trial):
    """A QMF training trial; short sides point at truncated clips.

    ``enroll_id``/``test_id`` name the side as scored (a clip id such as
    ``utt#clip250`` for clipped sides); ``*_source`` names the full utterance
    and ``*_clip_frames`` is the clip length in frames or None.
    """

    condition: str = ""
    enroll_source: str = ""
    test_source: str = ""
    enroll_clip_frames: int | None = None
    test_clip_frames: int | None = None

    @property
    def enroll_clip_s(self) -> float | None:
        f = self.enroll_clip_frames
        return None if f is None else f / FRAMES_PER_SECOND

    @property
    def test_clip_s(self) -> float | None:
        f = self.test_clip_frames
        return None if f is None else f / FRAMES_PER_SECOND


CLIP_SEP = "#clip"


def clip_id(utterance_id: str, frames: int) -> str:
    return "%s%s%d" % (utterance_id, CLIP_SEP, frames)


def parse_clip_id(utt: str) -> tuple | None:
    """``(source_id, frames)`` for a clip id, None for a plain utterance id."""
    source, sep, frames = utt.rpartition(CLIP_SEP)
    if not sep or not source or not frames.isdigit() or int(frames) < 1:
        return None
    return source, int(frames)


def clip_requests(trials: Sequence[SampledTrial]) -> dict:
    """Map each clip id used by ``trials`` to ``(source_id, clip_frames)``."""
    out = {}
    for t in trials:
        if t.enroll_clip_frames is not None:
            out[t.enroll_id] = (t.enroll_source, t.enroll_clip_frames)
        if t.test_clip_frames is not None:
            out[t.test_id] = (t.test_source, t.test_clip_frames)
    return out


def _pair_capacity(enroll_pool, test_pool):
    """Number of distinct (enroll, test) target and nontarget source pairs."""
    e_by, t_by = defaultdict(list), defaultdict(list)
    for u, s in enroll_pool:
        e_by[s].append(u)
    for u, s in test_pool:
        t_by[s].append(u)
    tar = 0
    for s, es in e_by.items():
        ts = set(t_by.get(s, ()))
        tar += sum(len(ts) - (u in ts) for u in es)
    same = sum(len(es) * len(t_by.get(s, ())) for s, es in e_by.items())
    return tar, len(enroll_pool) * len(test_pool) - same, e_by, t_by


def _draw_pairs(rng, n, candidates_fn, sample_fn, capacity):
    """``n`` distinct pairs: enumerate when the pool is small, else reject duplicates."""
    if n == 0:
        return []
    if capacity <= 4 * n:
        cands = candidates_fn()
        idx = rng.choice(len(cands), size=n, replace=False)
        return [cands[i] for i in sorted(idx)]
    seen, out = set(), []
    while len(out) < n:
        pair = sample_fn()
        if pair not in seen:
            seen.add(pair)
            out.append(pair)
    return out


def sample_trials(corpus: Sequence[tuple], spec: SamplerSpec | None = None, seed: int = 0) -> list:
    """Draw duration-bucketed QMF training trials.

    Args:
      corpus: ``(utterance_id, speaker_id, duration_s)`` triples.
      spec: bucket definitions and counts.
      seed: RNG seed; equal seeds give identical lists.

    Long sides are utterances longer than ``spec.long_threshold_s``. Short
    sides are clips of any utterance at least as long as the clip range's
    lower bound, with a clip length drawn uniformly from the range (and
    never longer than the utterance). Every condition receives
    ``pairs_per_condition`` trials unless the corpus cannot supply that many
    distinct pairs, in which case counts shrink proportionally.

    Raises:
      InsufficientSpeakers: fewer than two speakers.
      EmptyBucket: no long utterances or no clippable utterances.
    """
    spec = spec or SamplerSpec()
    rng = np.random.default_rng(seed)
    corpus = sorted((str(u), str(s), float(d)) for u, s, d in corpus)
    if len({s for _, s, _ in corpus}) < 2:
        raise InsufficientSpeakers("QMF training needs at least two speakers")
    lo, hi = spec.short_clip_range_s
    durations = {u: d for u, _, d in corpus}
    long_pool = [(u, s) for u, s, d in corpus if d > spec.long_threshold_s]
    short_pool = [(u, s) for u, s, d in corpus if d >= lo]
    if not long_pool:
        raise EmptyBucket("no utterance is longer than %gs" % spec.long_threshold_s)
    if not short_pool:
        raise EmptyBucket("no utterance reaches the %gs clip length" % lo)

    def clip_frames(utt):
        top = min(hi, durations[utt])
        return int(round(rng.uniform(lo, top) * FRAMES_PER_SECOND))

    pools = {
        "short-short": (short_pool, short_pool),
        "long-long": (long_pool, long_pool),
        "long-short": (long_pool, short_pool),
    }
    trials = []
    for cond in CONDITIONS:
        e_pool, t_pool = pools[cond]
        cap_tar, cap_non, e_by, t_by = _pair_capacity(e_pool, t_pool)
        n_tar = int(round(spec.pairs_per_condition * spec.target_ratio))
        n_non = spec.pairs_per_condition - n_tar
        scale = min(1.0, cap_tar / n_tar if n_tar else 1.0, cap_non / n_non if n_non else 1.0)
        if scale < 1.0:
            logger.warning("%s: corpus supports only %.1f%% of the requested pairs", cond, 100 * scale)
            n_tar, n_non = int(n_tar * scale), int(n_non * scale)

        tar_speakers = sorted(s for s in e_by if any(
            u != v for u in e_by[s] for v in t_by.get(s, ())))

        def tar_cands():
            return [(u, v) for s in tar_speakers for u in e_by[s] for v in t_by[s] if u != v]

        def tar_sample():
            s = tar_speakers[rng.integers(len(tar_speakers))]
            while True:
                u = e_by[s][rng.integers(len(e_by[s]))]
                v = t_by[s][rng.integers(len(t_by[s]))]
                if u != v:
                    return u, v

        e_spk = {u: s for u, s in e_pool}
        t_spk = {u: s for u, s in t_pool}

        def non_cands():
            return [(u, v) for u, su in e_pool for v, sv in t_pool if su != sv]

        def non_sample():
            while True:
                u = e_pool[rng.integers(len(e_pool))][0]
                v = t_pool[rng.integers(len(t_pool))][0]
                if e_spk[u] != t_spk[v]:
                    return u, v

        pairs = [(p, TARGET) for p in _draw_pairs(rng, n_tar, tar_cands, tar_sample, cap_tar)]
        pairs += [(p, NONTARGET) for p in _draw_pairs(rng, n_non, non_cands, non_sample, cap_non)]
        order = rng.permutation(len(pairs))
        for k in order:
            (u, v), label = pairs[k]
            ef = clip_frames(u) if cond == "short-short" else None
            tf = clip_frames(v) if cond != "long-long" else None
            trials.append(SampledTrial(
                enroll_id=u if ef is None else clip_id(u, ef),
                test_id=v if tf is None else clip_id(v, tf),
                label=label,
                condition=cond,
                enroll_source=u,
                test_source=v,
                enroll_clip_frames=ef,
                test_clip_frames=tf,
            ))
    return trials


# ---------------------------------------------------------------------------
# features


@dataclass(frozen=True)
class QmfFeatures:
    score: float
    log_dur_enroll: float
    log_dur_test: float
    imposter_mean_enroll: float
    imposter_mean_test: float
    log_mag_enroll: float
    log_mag_test: float

    def as_array(self) -> np.ndarray:
        return np.array([self.score, self.log_dur_enroll, self.log_dur_test,
                         self.imposter_mean_enroll, self.imposter_mean_test,
                         self.log_mag_enroll, self.log_mag_test])


def _quality(utt, embeddings, stats, durations, log_transform):
    d = float(durations[utt]) if utt in durations else math.nan
    if not d > 0:
        raise NonpositiveDuration("duration of %r is %r" % (utt, d))
    mag = magnitude(embeddings[utt])
    if log_transform and mag <= 0:
        raise NonpositiveDuration("embedding %r has zero magnitude" % utt)
    if utt not in stats:
        raise MissingStats(utt)
    imp = stats[utt].imposter_mean if hasattr(stats[utt], "imposter_mean") else stats[utt][0]
    if log_transform:
        return math.log(d), imp, math.log(mag)
    return d, imp, mag


def build_features(
    trial: Trial,
    score: float,
    embeddings: EmbeddingStore,
    stats: Mapping,
    durations: Mapping[str, float],
    log_transform: bool = True,
) -> QmfFeatures:
    """Quality feature vector of one trial in :data:`FEATURE_NAMES` order.

    With ``log_transform=False`` durations and magnitudes enter linearly.
    """
    de, ie, me = _quality(trial.enroll_id, embeddings, stats, durations, log_transform)
    dt, it, mt = _quality(trial.test_id, embeddings, stats, durations, log_transform)
    return QmfFeatures(float(score), de, dt, ie, it, me, mt)


def feature_matrix(
    table: ScoreTable,
    column: str,
    embeddings: EmbeddingStore,
    stats: Mapping,
    durations: Mapping[str, float],
    log_transform: bool = True,
) -> np.ndarray:
    """Stack :func:`build_features` over every trial of ``table``."""
    cache = {}

    def q(utt):
        if utt not in cache:
            cache[utt] = _quality(utt, embeddings, stats, durations, log_transform)
        return cache[utt]

    scores = table[column]
    out = np.empty((len(table), len(FEATURE_NAMES)))
    for k, t in enumerate(table.trials):
        de, ie, me = q(t.enroll_id)
        dt, it, mt = q(t.test_id)
        out[k] = (scores[k], de, dt, ie, it, me, mt)
    return out


# ---------------------------------------------------------------------------
# logistic regression


@dataclass(frozen=True)
class LrConfig:
    learning_rate: float = 0.5
    epochs: int = 2000
    l2_lambda: float = 1e-4
    seed: int = 0
    init_scale: float = 0.0
    prior: float | None = None  # effective target prior; None weights every trial equally

    def __post_init__(self):
        if self.prior is not None and not 0.0 < self.prior < 1.0:
            raise ValueError("prior must be in (0, 1)")


@dataclass(frozen=True)
class QmfModel:
    weights: np.ndarray
    bias: float
    feature_means: np.ndarray
    feature_stds: np.ndarray
    feature_names: tuple = FEATURE_NAMES
    loss_history: tuple = field(default=(), compare=False, repr=False)

    def __post_init__(self):
        for name in ("weights", "feature_means", "feature_stds"):
            arr = np.array(getattr(self, name), dtype=np.float64)
            arr.setflags(write=False)
            object.__setattr__(self, name, arr)
        n = len(self.feature_names)
        if not (self.weights.shape == self.feature_means.shape == self.feature_stds.shape == (n,)):
            raise ValueError("model arrays must all have %d entries" % n)
        if not np.all(np.isfinite(self.weights)) or not math.isfinite(self.bias):
            raise ValueError("model parameters must be finite")
        if np.any(self.feature_stds < MIN_STD):
            raise ValueError("feature stds must be at least %g" % MIN_STD)

    @property
    def log_transform(self) -> bool:
        return tuple(self.feature_names) != LINEAR_FEATURE_NAMES

    def __eq__(self, other):
        if not isinstance(other, QmfModel):
            return NotImplemented
        return (
            tuple(self.feature_names) == tuple(other.feature_names)
            and self.bias == other.bias
            and np.array_equal(self.weights, other.weights)
            and np.array_equal(self.feature_means, other.feature_means)
            and np.array_equal(self.feature_stds, other.feature_stds)
        )

    __hash__ = None


def sigmoid(z):
    return np.exp(-np.logaddexp(0.0, -np.asarray(z, dtype=np.float64)))


def logistic_loss_and_grad(w: np.ndarray, b: float, x: np.ndarray, y: np.ndarray, l2: float,
                           sample_weight: np.ndarray | None = None):
    """Mean logistic loss plus ``l2/2 * ||w||^2`` and its gradient.

    With ``sample_weight`` the mean is taken over weighted examples.
    Returns ``(loss, grad_w, grad_b)``; the bias is not regularized.
    """
    z = x @ w + b
    # log(1 + e^{-z}) for positives, log(1 + e^{z}) for negatives
    per = np.logaddexp(0.0, np.where(y > 0, -z, z))
    r = sigmoid(z) - y
    if sample_weight is not None:
        per = per * sample_weight
        r = r * sample_weight
    loss = np.mean(per) + 0.5 * l2 * float(w @ w)
    return float(loss), x.T @ r / len(y) + l2 * w, float(np.mean(r))


def prior_weights(labels: np.ndarray, prior: float) -> np.ndarray:
    """Per-example weights giving targets total mass ``prior``; they average to 1."""
    y = np.asarray(labels) > 0
    n_tar = int(y.sum())
    return np.where(y, prior * y.size / n_tar, (1.0 - prior) * y.size / (y.size - n_tar))


def train_lr(features, labels, config: LrConfig | None = None, feature_names=FEATURE_NAMES) -> QmfModel:
    """Fit an L2-regularized logistic regression by full-batch gradient descent.

    Features are standardized with the training mean and std (an std below
    1e-9 is replaced by 1) and the standardization is stored in the model.
    With ``config.prior`` set, the loss is reweighted so targets carry that
    share of the total mass, which tunes the fit to that operating point.

    Raises:
      SingleClass: labels contain only one class or fewer than two examples.
      NonFiniteLoss: the loss became non-finite or ended above its start.
    """
    config = config or LrConfig()
    x = np.array([f.as_array() if isinstance(f, QmfFeatures) else f for f in features], dtype=np.float64)
    if x.ndim == 1:
        x = x[:, None]
    y = np.asarray(labels, dtype=np.float64)
    if x.shape[0] != y.shape[0]:
        raise ValueError("%d feature rows but %d labels" % (x.shape[0], y.shape[0]))
    if y.size < 2 or y.min() == y.max():
        raise SingleClass("logistic regression needs both classes")
    if not np.all((y == 0) | (y == 1)):
        raise ValueError("labels must be 0 or 1")
    if len(feature_names) != x.shape[1]:
        feature_names = tuple("f%d" % i for i in range(x.shape[1]))

    means = x.mean(axis=0)
    stds = x.std(axis=0)
    stds = np.where(stds < MIN_STD, 1.0, stds)
    xs = (x - means) / stds

    sw = None if config.prior is None else prior_weights(y, config.prior)
    rng = np.random.default_rng(config.seed)
    w = config.init_scale * rng.standard_normal(x.shape[1])
    b = 0.0
    history = []
    for _ in range(config.epochs):
        loss, gw, gb = logistic_loss_and_grad(w, b, xs, y, config.l2_lambda, sw)
        if not math.isfinite(loss):
            raise NonFiniteLoss("training loss became %r; lower the learning rate" % loss)
        history.append(loss)
        w = w - config.learning_rate * gw
        b = b - config.learning_rate * gb
    final, _, _ = logistic_loss_and_grad(w, b, xs, y, config.l2_lambda, sw)
    if not math.isfinite(final) or not np.all(np.isfinite(w)) or (history and final > history[0]):
        raise NonFiniteLoss("training diverged (loss %r -> %r); lower the learning rate"
                            % (history[0] if history else None, final))
    history.append(final)
    return QmfModel(w, float(b), means, stds, tuple(feature_names), tuple(history))


def apply_qmf(model: QmfModel, features) -> np.ndarray | float:
    """Calibrated log-odds score(s): ``w . (f - mean) / std + bias``.

    Accepts one :class:`QmfFeatures`, a 1-D vector, or a 2-D matrix of rows.
    """
    if isinstance(features, QmfFeatures):
        features = features.as_array()
    x = np.asarray(features, dtype=np.float64)
    out = ((x - model.feature_means) / model.feature_stds) @ model.weights + model.bias
    return float(out) if x.ndim == 1 else out


# ---------------------------------------------------------------------------
# model file


def write_model(path, model: QmfModel) -> None:
    with open(path, "w", encoding="utf-8") as f:
        f.write("QMF1\n%d\n" % len(model.feature_names))
        for name, w, m, s in zip(model.feature_names, model.weights, model.feature_means, model.feature_stds):
            f.write("%s %r %r %r\n" % (name, float(w), float(m), float(s)))
        f.write("bias %r\n" % float(model.bias))


def read_model(path) -> QmfModel:
    with open(path, encoding="utf-8") as f:
        lines = [ln.strip() for ln in f if ln.strip()]
    if not lines or lines[0] != "QMF1":
        raise FormatError("%s is not a QMF1 model file" % path)
    try:
        n = int(lines[1])
        rows = [ln.split() for ln in lines[2:2 + n]]
        tail = lines[2 + n].split()
    except (IndexError, ValueError):
        raise FormatError("truncated or malformed QMF model file %s" % path) from None
    if len(rows) != n or any(len(r) != 4 for r in rows) or len(tail) != 2 or tail[0] != "bias":
        raise FormatError("malformed QMF model file %s" % path)
    try:
        names = tuple(r[0] for r in rows)
        vals = np.array([[float(v) for v in r[1:]] for r in rows]).reshape(n, 3)
        return QmfModel(vals[:, 0], float(tail[1]), vals[:, 1], vals[:, 2], names)
    except ValueError as exc:
        raise FormatError("bad number in QMF model file %s: %s" % (path, exc)) from None
