import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from svcal.embedding import Embedding, EmbeddingStore
from svcal.errors import MissingCmf, MissingEmbedding, OutOfRange, TrialMismatch
from svcal.scoring import NONTARGET, TARGET, ScoreTable, Trial, cmf_calibrated_score, raw_score, score_trials


def _store(rows, prefix="u"):
    return EmbeddingStore(Embedding("%s%d" % (prefix, i), r) for i, r in enumerate(rows))


def test_raw_score_examples():
    a = Embedding("a", [0.3, 0.4])
    assert raw_score(a, a) == pytest.approx(1.0, abs=1e-15)
    assert raw_score(Embedding("a", [1, 0]), Embedding("b", [0, 2])) == 0.0
    assert raw_score(Embedding("a", [1, 1]), Embedding("b", [1, 0])) == pytest.approx(math.sqrt(2) / 2, abs=1e-15)


@pytest.mark.parametrize("a, b, raw, expected", [(1.0, 1.0, 0.62, 0.62), (0.9, 0.8, 0.5, 0.36), (0.0, 0.7, 0.9, 0.0)])
def test_cmf_calibrated_examples(a, b, raw, expected):
    assert cmf_calibrated_score(a, b, raw) == pytest.approx(expected, abs=1e-15)


@pytest.mark.parametrize("args", [(1.1, 0.5, 0.2), (0.5, -0.1, 0.2), (0.5, 0.5, 1.5)])
def test_cmf_calibrated_out_of_range(args):
    with pytest.raises(OutOfRange):
        cmf_calibrated_score(*args)


unit = st.floats(0.0, 1.0)
cos = st.floats(-1.0, 1.0)


@given(unit, unit, cos, cos)
def test_cmf_calibrated_monotone_and_shrinking(a, b, r1, r2):
    lo, hi = min(r1, r2), max(r1, r2)
    assert cmf_calibrated_score(a, b, lo) <= cmf_calibrated_score(a, b, hi)
    assert abs(cmf_calibrated_score(a, b, r1)) <= abs(r1)
    assert cmf_calibrated_score(a, b, r1) == cmf_calibrated_score(b, a, r1)


def test_score_trials_single():
    store = EmbeddingStore([Embedding("a", [1, 2]), Embedding("b", [2, 4])])
    t = score_trials([Trial("a", "b")], store)
    np.testing.assert_allclose(t["raw"], [1.0], atol=1e-15)
    t = score_trials([Trial("a", "b")], store, {"a": 1.0, "b": 1.0})
    np.testing.assert_array_equal(t["cmf"], t["raw"])


def test_score_trials_matches_scalar_ops():
    rng = np.random.default_rng(3)
    store = _store(rng.standard_normal((4, 8)))
    cmfs = {u: float(c) for u, c in zip(store, rng.uniform(0.2, 1.0, 4))}
    trials = [Trial("u0", "u1", TARGET), Trial("u2", "u0", NONTARGET), Trial("u3", "u3", TARGET)]
    table = score_trials(trials, store, cmfs)
    for k, t in enumerate(trials):
        raw = raw_score(store[t.enroll_id], store[t.test_id])
        assert table["raw"][k] == pytest.approx(raw, abs=1e-12)
        assert table["cmf"][k] == pytest.approx(cmf_calibrated_score(cmfs[t.enroll_id], cmfs[t.test_id], raw), abs=1e-12)
    np.testing.assert_array_equal(table.labels(), [True, False, True])


def test_score_trials_errors():
    store = EmbeddingStore([Embedding("a", [1, 0]), Embedding("b", [0, 1])])
    with pytest.raises(MissingEmbedding):
        score_trials([Trial("a", "zz")], store)
    with pytest.raises(MissingCmf):
        score_trials([Trial("a", "b")], store, {"a": 0.5})
    with pytest.raises(OutOfRange):
        score_trials([Trial("a", "b")], store, {"a": 0.5, "b": 1.5})


def test_score_table_checks():
    trials = [Trial("a", "b")]
    with pytest.raises(TrialMismatch):
        ScoreTable(trials, {"raw": [0.1, 0.2]})
    with pytest.raises(ValueError):
        ScoreTable(trials, {"raw": [math.nan]})
    with pytest.raises(ValueError):
        ScoreTable(trials, {"raw": [0.1]}).labels()
    with pytest.raises(ValueError):
        Trial("a", "b", "maybe")


def test_score_trials_permutation_and_threads():
    rng = np.random.default_rng(11)
    store = _store(rng.standard_normal((60, 16)))
    ids = list(store)
    trials = [Trial(ids[i], ids[j]) for i, j in rng.integers(0, 60, size=(5000, 2))]
    cmfs = {u: 0.5 for u in ids}
    base = score_trials(trials, store, cmfs, threads=1)
    perm = rng.permutation(len(trials))
    shuffled = score_trials([trials[k] for k in perm], store, cmfs, threads=1)
    np.testing.assert_array_equal(shuffled["raw"], base["raw"][perm])
    for threads in (2, 3, 8):
        again = score_trials(trials, store, cmfs, threads=threads)
        assert again["raw"].tobytes() == base["raw"].tobytes()
        assert again["cmf"].tobytes() == base["cmf"].tobytes()


def test_raw_score_symmetric():
    rng = np.random.default_rng(5)
    a, b = (Embedding(n, rng.standard_normal(9)) for n in "ab")
    assert raw_score(a, b) == raw_score(b, a)
