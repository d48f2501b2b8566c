"""End-to-end backend runs on a synthetic corpus.

Speakers are split three ways: cohort speakers (AS-Norm), QMF training
speakers, and evaluation speakers. Every stage of the chain is scored on
the same evaluation trials so stage-wise ablations can be compared:

    raw -> asnorm -> asnorm+qmf
    cmf -> cmf+asnorm -> cmf+asnorm+qmf
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .asnorm import asnorm_table, build_cohort, compute_stats_map, scale_stats
from .embedding import EmbeddingStore
from .metrics import DcfParams, eer, min_dcf
from .qmf import LrConfig, SamplerSpec, apply_qmf, clip_requests, feature_matrix, sample_trials, train_lr
from .scoring import NONTARGET, TARGET, Trial, score_trials
from .synth import EmbedConfig, SynthSpec, corpus_metadata, embed_utterance, iter_corpus

STAGES = ("raw", "asnorm", "asnorm+qmf", "cmf", "cmf+asnorm", "cmf+asnorm+qmf")


def sample_eval_trials(corpus, n_trials: int, target_ratio: float = 0.5, seed: int = 0) -> list:
    """Random labeled whole-utterance trials, no duplicate pairs, no self-trials."""
    rng = np.random.default_rng(seed)
    utts = sorted((u, s) for u, s, _ in corpus)
    by_spk = {}
    for u, s in utts:
        by_spk.setdefault(s, []).append(u)
    speakers = sorted(s for s, us in by_spk.items() if len(us) >= 2)
    n_tar = int(round(n_trials * target_ratio))
    n_pairs = sum(len(by_spk[s]) * (len(by_spk[s]) - 1) for s in speakers)
    if n_tar > n_pairs or n_trials - n_tar > len(utts) * (len(utts) - 1) - n_pairs:
        raise ValueError("corpus too small for the requested trial counts")
    seen, trials = set(), []
    while len(trials) < n_tar:
        s = speakers[rng.integers(len(speakers))]
        a, b = rng.choice(len(by_spk[s]), size=2, replace=False)
        pair = (by_spk[s][a], by_spk[s][b])
        if pair not in seen:
            seen.add(pair)
            trials.append(Trial(*pair, TARGET))
    while len(trials) < n_trials:
        (u, su), (v, sv) = utts[rng.integers(len(utts))], utts[rng.integers(len(utts))]
        if su != sv and (u, v) not in seen:
            seen.add((u, v))
            trials.append(Trial(u, v, NONTARGET))
    return [trials[k] for k in rng.permutation(len(trials))]


def embed_corpus(spec: SynthSpec, config: EmbedConfig, clips: dict | None = None) -> tuple:
    """Embed every utterance (and requested clips) of a synthetic corpus.

    Args:
      clips: ``clip_id -> (source_id, n_frames)``; clips are the first
        ``n_frames`` frames of the source.

    Returns:
      ``(EmbeddingStore, cmf map, duration map)``.
    """
    by_source = {}
    for cid, (src, n) in sorted((clips or {}).items()):
        by_source.setdefault(src, []).append((cid, n))
    store, cmfs, durations = EmbeddingStore(), {}, {}
    for fm in iter_corpus(spec):
        jobs = [(fm.utterance_id, None)] + by_source.get(fm.utterance_id, [])
        for utt, n in jobs:
            emb, segs = embed_utterance(fm, config, n, utt)
            store.add(emb)
            cmfs[utt] = segs.cmf
            durations[utt] = emb.duration_s
    return store, cmfs, durations


def ablation_corpus(seed: int = 0) -> SynthSpec:
    """The 200 x 20 corpus used for the stage ablation (baseline EER around 10%)."""
    return SynthSpec(
        n_speakers=200,
        utts_per_speaker=20,
        noise_scale=0.18,
        drift=1.0,
        frame_noise=1.0,
        quality_spread=0.3,
        noise_type_scale=1.5,
        home_noise_prob=0.4,
        seed=seed,
    )


@dataclass(frozen=True)
class ExperimentConfig:
    synth: SynthSpec = field(default_factory=ablation_corpus)
    embed: EmbedConfig = field(default_factory=EmbedConfig)
    cohort_speakers: int = 80
    qmf_speakers: int = 60
    top_k: int = 40
    sampler: SamplerSpec = field(default_factory=lambda: SamplerSpec(pairs_per_condition=2000))
    lr: LrConfig = field(default_factory=lambda: LrConfig(prior=0.05))
    n_eval_trials: int = 10000
    eval_target_ratio: float = 0.5
    p_target: float = 0.05
    cmf_cohort: bool = False  # scale cohort stats by CMF in the CMF chain
    seed: int = 0
    threads: int | None = None


def run_experiment(cfg: ExperimentConfig) -> dict:
    """Run every ablation stage; returns ``{stage: {"eer": .., "min_dcf": ..}}``."""
    meta = corpus_metadata(cfg.synth)
    speakers = sorted({s for _, s, _ in meta})
    n_c, n_q = cfg.cohort_speakers, cfg.qmf_speakers
    if n_c + n_q >= len(speakers):
        raise ValueError("no speakers left for evaluation")
    cohort_spk = set(speakers[:n_c])
    qmf_spk = set(speakers[n_c:n_c + n_q])
    qmf_meta = [m for m in meta if m[1] in qmf_spk]
    eval_meta = [m for m in meta if m[1] not in cohort_spk and m[1] not in qmf_spk]

    train_trials = sample_trials(qmf_meta, cfg.sampler, seed=cfg.seed)
    eval_trials = sample_eval_trials(eval_meta, cfg.n_eval_trials, cfg.eval_target_ratio, seed=cfg.seed + 1)
    store, cmfs, durations = embed_corpus(cfg.synth, cfg.embed, clip_requests(train_trials))

    spk_of = {u: s for u, s, _ in meta}
    cohort = build_cohort(((spk_of[u], store[u]) for u, _, _ in meta if spk_of[u] in cohort_spk), cfg.top_k)
    stats = compute_stats_map(store, cohort, threads=cfg.threads)

    params = DcfParams(p_target=cfg.p_target)
    train = score_trials(train_trials, store, cmfs, cfg.threads)
    test = score_trials(eval_trials, store, cmfs, cfg.threads)
    y_train = train.labels().astype(float)
    y_test = test.labels()

    results = {}

    def record(stage, scores):
        results[stage] = {"eer": eer(scores, y_test), "min_dcf": min_dcf(scores, y_test, params)}

    for prefix, source in (("", "raw"), ("cmf+", "cmf")):
        if prefix:
            record("cmf", test["cmf"])
        else:
            record("raw", test["raw"])
        norm_stats = stats
        if prefix and cfg.cmf_cohort:
            norm_stats = scale_stats(stats, cmfs)
        tr = asnorm_table(train, norm_stats, source)
        te = asnorm_table(test, norm_stats, source)
        record(prefix + "asnorm", te["asnorm"])
        x_tr = feature_matrix(tr, "asnorm", store, stats, durations)
        x_te = feature_matrix(te, "asnorm", store, stats, durations)
        model = train_lr(x_tr, y_train, cfg.lr)
        record(prefix + "asnorm+qmf", apply_qmf(model, x_te))
    return results
