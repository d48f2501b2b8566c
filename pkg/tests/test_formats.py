import hashlib
import struct
from pathlib import Path

import numpy as np
import pytest

from svcal import formats
from svcal.asnorm import CohortStats
from svcal.embedding import Embedding, EmbeddingStore
from svcal.errors import BadMagic, DuplicateId, FormatError, TruncatedFile
from svcal.scoring import NONTARGET, TARGET, Trial
from svcal.synth import SynthSpec, corpus_metadata

GOLDEN = Path(__file__).parent / "data" / "golden.emb1"
GOLDEN_SHA256 = "e16ddc7693944bab9dd549b81fab3d5df634bcc1d558b559bb0ca93a56f5bc5b"
GOLDEN_RECORDS = [
    ("spk0001-u000", [1.0, -2.5, 0.125, 0.1]),
    ("spk0002-ü1", [0.0, 3.0e-8, -1.0e6, 0.333333343267]),
    ("x", [-0.0, 65504.0, 1.5, -7.75]),
]


def _golden_store():
    return EmbeddingStore(Embedding(u, np.float32(v)) for u, v in GOLDEN_RECORDS)


def test_golden_fixture_unchanged():
    assert hashlib.sha256(GOLDEN.read_bytes()).hexdigest() == GOLDEN_SHA256


def test_golden_read():
    store = formats.read_store(GOLDEN)
    assert list(store) == [u for u, _ in GOLDEN_RECORDS]
    for u, v in GOLDEN_RECORDS:
        assert store[u].vector.tobytes() == np.float32(v).astype(np.float64).tobytes()
    assert np.signbit(store["x"].vector[0])


def test_golden_write(tmp_path):
    out = tmp_path / "g.emb1"
    formats.write_store(out, _golden_store())
    assert out.read_bytes() == GOLDEN.read_bytes()


def test_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    vecs = rng.standard_normal((3, 16)).astype(np.float32)
    store = EmbeddingStore(Embedding("u%d" % i, v) for i, v in enumerate(vecs))
    path = tmp_path / "s.emb1"
    formats.write_store(path, store)
    back = formats.read_store(path)
    assert back == store
    formats.write_store(tmp_path / "again.emb1", back)
    assert (tmp_path / "again.emb1").read_bytes() == path.read_bytes()


def test_empty_store(tmp_path):
    path = tmp_path / "e.emb1"
    formats.write_store(path, EmbeddingStore())
    assert len(formats.read_store(path)) == 0


def test_store_errors(tmp_path):
    good = GOLDEN.read_bytes()
    cases = {
        "magic": (b"EMB2" + good[4:], BadMagic),
        "truncated": (good[:-3], TruncatedFile),
        "header": (good[:9], TruncatedFile),
        "trailing": (good + b"\0", FormatError),
    }
    dup = struct.pack("<4sII", b"EMB1", 1, 2) + (struct.pack("<H", 1) + b"a" + struct.pack("<f", 1.0)) * 2
    cases["duplicate"] = (dup, DuplicateId)
    for name, (data, err) in cases.items():
        path = tmp_path / (name + ".emb1")
        path.write_bytes(data)
        with pytest.raises(err):
            formats.read_store(path)


def test_tsv_store_round_trip(tmp_path):
    rng = np.random.default_rng(1)
    store = EmbeddingStore(Embedding("u%d" % i, v) for i, v in enumerate(rng.standard_normal((4, 5))))
    path = tmp_path / "s.tsv"
    formats.write_store_tsv(path, store)
    assert formats.load_store(path) == store
    assert path.read_text().split("\n")[0].count("\t") == 5


def test_load_store_by_suffix(tmp_path):
    path = tmp_path / "s.bin"
    path.write_text("u0\t1.0\t2.0\n")
    with pytest.raises(BadMagic):
        formats.load_store(path)


def test_trial_lines(tmp_path):
    path = tmp_path / "trials.txt"
    path.write_text("1 a.wav b.wav\n0 a.wav c.wav\n\n")
    assert formats.read_trials(path) == [Trial("a.wav", "b.wav", TARGET), Trial("a.wav", "c.wav", NONTARGET)]
    path.write_text("a.wav b.wav\n")
    assert formats.read_trials(path) == [Trial("a.wav", "b.wav")]
    for bad in ("2 a b\n", "1 a b\na c\n", "a\n"):
        path.write_text(bad)
        with pytest.raises(FormatError):
            formats.read_trials(path)


def test_trials_and_scores_round_trip(tmp_path):
    trials = [Trial("a", "b", TARGET), Trial("c", "d", NONTARGET)]
    formats.write_trials(tmp_path / "t", trials)
    assert formats.read_trials(tmp_path / "t") == trials
    formats.write_scores(tmp_path / "s", trials, [0.5, -1.0 / 3])
    assert (tmp_path / "s").read_text() == "a b 0.500000\nc d -0.333333\n"
    got_trials, scores = formats.read_scores(tmp_path / "s")
    assert [(t.enroll_id, t.test_id) for t in got_trials] == [("a", "b"), ("c", "d")]
    np.testing.assert_array_equal(scores, [0.5, -0.333333])


def test_corpus_round_trip(tmp_path):
    spec = SynthSpec(n_speakers=3, utts_per_speaker=2, frames_range=(150, 420), noise_scale=0.25,
                     noise_type_scale=1.5, home_noise_prob=0.4, seed=9)
    corpus = corpus_metadata(spec)
    path = tmp_path / "corpus.tsv"
    formats.write_corpus(path, corpus, spec)
    assert formats.read_corpus(path) == corpus
    assert formats.read_corpus_spec(path) == spec
    formats.write_corpus(path, corpus)
    with pytest.raises(FormatError):
        formats.read_corpus_spec(path)


def test_side_tables(tmp_path):
    values = {"a": 0.1, "b": 1.0 / 3}
    formats.write_value_map(tmp_path / "v", values)
    assert formats.read_value_map(tmp_path / "v") == values
    stats = {"a": CohortStats(0.1, 0.2), "b": CohortStats(-1.0 / 7, 0.05)}
    formats.write_stats(tmp_path / "st", stats)
    assert formats.read_stats(tmp_path / "st") == stats
    (tmp_path / "ids").write_text("# cohort\nspk1\nspk2\n")
    assert formats.read_id_list(tmp_path / "ids") == ["spk1", "spk2"]
