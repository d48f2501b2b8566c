"""Score fusion, EER and minDCF.

Threshold convention used throughout: a trial is accepted when its score is
``>= threshold``. Hence ``P_miss(t)`` counts targets with score ``< t`` and
``P_fa(t)`` counts nontargets with score ``>= t``.
"""

from __future__ import annotations

from collections.abc import Sequence
from dataclasses import dataclass

import numpy as np

from .errors import AllZeroWeights, SingleClass, TrialMismatch
from .scoring import TARGET, ScoreTable

DEFAULT_P_TARGETS = (0.01, 0.05)


@dataclass(frozen=True)
class DcfParams:
    p_target: float = 0.05
    c_miss: float = 1.0
    c_fa: float = 1.0

    def __post_init__(self):
        if not 0.0 < self.p_target < 1.0:
            raise ValueError("p_target must be in (0, 1)")
        if not (self.c_miss > 0 and self.c_fa > 0):
            raise ValueError("detection costs must be positive")


@dataclass(frozen=True)
class FusionSpec:
    system_names: tuple
    weights: tuple

    def __post_init__(self):
        if len(self.system_names) != len(self.weights):
            raise ValueError("%d systems but %d weights" % (len(self.system_names), len(self.weights)))
        w = np.asarray(self.weights, dtype=np.float64)
        if not np.all(np.isfinite(w)):
            raise ValueError("fusion weights must be finite")
        if not np.any(w != 0):
            raise AllZeroWeights("at least one fusion weight must be nonzero")

    @classmethod
    def equal(cls, names: Sequence[str]) -> "FusionSpec":
        return cls(tuple(names), (1.0,) * len(names))


def fuse(tables: Sequence[ScoreTable], spec: FusionSpec, column: str = "asnorm") -> ScoreTable:
    """Weighted mean of ``column`` across systems, weights normalized to sum 1.

    Returns the first table's trials with a single ``fused`` column.
    """
    if len(tables) != len(spec.weights):
        raise ValueError("%d tables but %d fusion weights" % (len(tables), len(spec.weights)))
    if not tables:
        raise ValueError("nothing to fuse")
    for t in tables[1:]:
        if not t.same_trials(tables[0]):
            raise TrialMismatch("score tables cover different trial lists")
    w = np.asarray(spec.weights, dtype=np.float64)
    total = w.sum()
    if total == 0:
        raise AllZeroWeights("fusion weights sum to zero")
    w = w / total
    fused = np.zeros(len(tables[0]))
    for wi, t in zip(w, tables):
        if wi != 0:
            fused += wi * t[column]
    return ScoreTable(tables[0].trials, {"fused": fused})


def _split(scores, labels) -> tuple:
    scores = np.asarray(scores, dtype=np.float64)
    labels = np.asarray([l == TARGET if isinstance(l, str) else bool(l) for l in labels], dtype=bool)
    if scores.shape != labels.shape:
        raise ValueError("%d scores but %d labels" % (scores.size, labels.size))
    tar = np.sort(scores[labels])
    non = np.sort(scores[~labels])
    if tar.size == 0 or non.size == 0:
        raise SingleClass("need at least one target and one nontarget trial")
    return tar, non


def error_rates(scores, labels) -> tuple:
    """Miss and false-alarm rates at every distinct score plus ``+inf``.

    Returns ``(thresholds, p_miss, p_fa)`` with thresholds ascending.
    """
    tar, non = _split(scores, labels)
    thresholds = np.append(np.unique(np.concatenate([tar, non])), np.inf)
    p_miss = np.searchsorted(tar, thresholds, side="left") / tar.size
    p_fa = (non.size - np.searchsorted(non, thresholds, side="left")) / non.size
    return thresholds, p_miss, p_fa


def eer(scores, labels) -> float:
    """Equal error rate, interpolated linearly where miss and false-alarm cross.

    ``labels`` are booleans/0-1 (1 = target) or ``"target"``/``"nontarget"``.
    """
    _, p_miss, p_fa = error_rates(scores, labels)
    diff = p_miss - p_fa  # -1 at the lowest threshold, +1 at +inf
    i = int(np.searchsorted(diff, 0.0, side="left"))
    if diff[i] == 0.0:
        return float(p_miss[i])
    d0, d1 = diff[i - 1], diff[i]
    t = -d0 / (d1 - d0)
    return float(p_miss[i - 1] + t * (p_miss[i] - p_miss[i - 1]))


def min_dcf(scores, labels, params: DcfParams | None = None) -> float:
    """Normalized minimum detection cost over all thresholds."""
    params = params or DcfParams()
    _, p_miss, p_fa = error_rates(scores, labels)
    # -inf accepts everything, same rates as the lowest distinct score
    cost = params.c_miss * params.p_target * p_miss + params.c_fa * (1 - params.p_target) * p_fa
    norm = min(params.c_miss * params.p_target, params.c_fa * (1 - params.p_target))
    return float(np.min(cost) / norm)


def format_report(scores, labels, p_targets: Sequence[float] = (0.05,)) -> str:
    lines = ["EER(%%) %.4f" % (100.0 * eer(scores, labels))]
    for p in p_targets:
        lines.append("minDCF(p=%g) %.4f" % (p, min_dcf(scores, labels, DcfParams(p_target=p))))
    return "\n".join(lines) + "\n"
