import numpy as np
import pytest

from svcal.errors import InvalidSpec, RangeOutOfBounds
from svcal.metrics import eer
from svcal.pipeline import embed_corpus, sample_eval_trials
from svcal.scoring import score_trials
from svcal.synth import (
    EmbedConfig,
    FrameMatrix,
    SynthSpec,
    corpus_metadata,
    embed_utterance,
    generate_corpus,
    pooled_stats,
    toy_embed,
)

SMALL = SynthSpec(n_speakers=2, utts_per_speaker=1, dim=12, latent_dim=4, frames_range=(100, 300), seed=5)


def test_generation_is_deterministic():
    a, b = generate_corpus(SMALL), generate_corpus(SMALL)
    assert [f.utterance_id for f in a] == [f.utterance_id for f in b]
    for x, y in zip(a, b):
        assert x.frames.tobytes() == y.frames.tobytes()
    other = generate_corpus(SynthSpec(**{**SMALL.__dict__, "seed": 6}))
    assert other[0].frames.tobytes() != a[0].frames.tobytes()


def test_corpus_size_and_shapes():
    spec = SynthSpec(n_speakers=50, utts_per_speaker=10, frames_range=(100, 120))
    corpus = generate_corpus(spec)
    assert len(corpus) == 500
    meta = corpus_metadata(spec)
    for fm, (utt, spk, dur) in zip(corpus, meta):
        assert (fm.utterance_id, fm.speaker, fm.duration_s) == (utt, spk, dur)
        assert fm.frames.shape == (int(round(dur * 100)), 80)
        assert np.all(np.isfinite(fm.frames))


def test_noise_free_corpus_has_unit_cmf():
    spec = SynthSpec(n_speakers=3, utts_per_speaker=2, noise_scale=0.0, frames_range=(300, 900), seed=1)
    for fm in generate_corpus(spec):
        _, segs = embed_utterance(fm, EmbedConfig())
        assert len(segs) >= 2
        assert segs.cmf == 1.0


def test_invalid_spec():
    for bad in (dict(n_speakers=1), dict(dim=1), dict(noise_scale=-0.1), dict(frames_range=(10, 5))):
        with pytest.raises(InvalidSpec):
            corpus_metadata(SynthSpec(**bad))


def test_constant_frames_have_zero_std():
    frames = np.tile(np.arange(80, dtype=float), (50, 1))
    stats = pooled_stats(frames)
    np.testing.assert_array_equal(stats[80:], 0.0)
    np.testing.assert_array_equal(stats[:80], np.arange(80))


def test_toy_embed():
    fm = generate_corpus(SMALL)[0]
    a = toy_embed(fm, 10, 90, projection_seed=3, dim_out=16)
    b = toy_embed(fm, 10, 90, projection_seed=3, dim_out=16)
    assert a == b and a.dim == 16
    assert a.duration_s == pytest.approx(0.8)
    assert np.linalg.norm(a.vector) != pytest.approx(1.0)
    for start, end in ((5, 5), (-1, 10), (0, fm.n_frames + 1)):
        with pytest.raises(RangeOutOfBounds):
            toy_embed(fm, start, end)


def test_toy_embed_ignores_uniform_spread():
    rng = np.random.default_rng(0)
    base = rng.standard_normal(80)
    frames = FrameMatrix("u", base + np.ones((200, 80)) * np.where(np.arange(200) % 2, 1.0, -1.0)[:, None], "s")
    flat = FrameMatrix("u", np.tile(base, (200, 1)), "s")
    np.testing.assert_allclose(toy_embed(frames).vector, toy_embed(flat).vector, atol=1e-12)


def test_clip_embedding_uses_prefix():
    fm = max(generate_corpus(SMALL), key=lambda f: f.n_frames)
    emb, segs = embed_utterance(fm, EmbedConfig(), n_frames=140, utt_id="clip")
    assert emb.utterance_id == "clip" and emb.duration_s == 1.4
    assert emb == type(emb)("clip", toy_embed(fm, 0, 140).vector, 1.4)
    assert len(segs) == 2


def _separation_eer(noise_scale):
    spec = SynthSpec(n_speakers=100, utts_per_speaker=10, speaker_scale=1.0, noise_scale=noise_scale,
                     frames_range=(200, 600), seed=3)
    store, _, _ = embed_corpus(spec, EmbedConfig())
    trials = sample_eval_trials(corpus_metadata(spec), 10000, seed=1)
    table = score_trials(trials, store)
    return eer(table["raw"], table.labels())


def test_separation_when_noise_is_small():
    assert _separation_eer(0.1) < 0.05


def test_near_chance_when_noise_matches_speakers():
    assert _separation_eer(1.0) > 0.25
