import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from svcal.asnorm import (
    Cohort,
    CohortStats,
    asnorm_score,
    asnorm_table,
    build_cohort,
    cohort_stats,
    compute_stats_map,
    scale_stats,
)
from svcal.embedding import Embedding, EmbeddingStore
from svcal.errors import DegenerateStd, EmptyInput, MissingStats, TopKTooLarge
from svcal.scoring import ScoreTable, Trial


def _cohort_with_scores(scores, top_k):
    """Unit cohort rows whose cosine with e = [1, 0] are exactly ``scores``."""
    rows = np.array([[s, math.sqrt(1 - s * s)] for s in scores])
    return Cohort(tuple("s%d" % i for i in range(len(scores))), rows, top_k)


def test_build_cohort_examples():
    c = build_cohort([("A", Embedding("a1", [1, 0])), ("A", Embedding("a2", [0, 1]))], top_k=1)
    assert c.speakers == ("A",)
    np.testing.assert_allclose(c.embeddings, [[0.5, 0.5]])
    three = [(s, np.array(v, dtype=float)) for s, v in (("x", [1, 0]), ("y", [0, 1]), ("z", [1, 1]))]
    assert len(build_cohort(three, top_k=3)) == 3
    with pytest.raises(TopKTooLarge):
        build_cohort(three, top_k=5)
    with pytest.raises(EmptyInput):
        build_cohort([], top_k=1)


def test_cohort_stats_top_two():
    stats = cohort_stats([1.0, 0.0], _cohort_with_scores([0.9, 0.5, 0.1], 2))
    assert stats.mean == pytest.approx(0.7, abs=1e-12)
    assert stats.std == pytest.approx(0.2, abs=1e-12)
    assert stats.imposter_mean == stats.mean


def test_cohort_stats_no_truncation():
    scores = [0.9, 0.5, 0.1]
    stats = cohort_stats([1.0, 0.0], _cohort_with_scores(scores, 3))
    assert stats.mean == pytest.approx(np.mean(scores), abs=1e-12)
    assert stats.std == pytest.approx(np.std(scores), abs=1e-12)


def test_cohort_stats_degenerate():
    cohort = Cohort(("a", "b", "c"), np.tile([0.3, 0.7], (3, 1)), 3)
    with pytest.raises(DegenerateStd):
        cohort_stats([1.0, 2.0], cohort)


def test_cohort_stats_order_invariant():
    rng = np.random.default_rng(2)
    rows = rng.standard_normal((30, 6))
    e = rng.standard_normal(6)
    base = cohort_stats(e, Cohort(tuple(map(str, range(30))), rows, 7))
    perm = rng.permutation(30)
    shuffled = cohort_stats(e, Cohort(tuple(map(str, perm)), rows[perm], 7))
    assert shuffled.mean == pytest.approx(base.mean, abs=1e-15)
    assert shuffled.std == pytest.approx(base.std, abs=1e-15)


def test_asnorm_score_examples():
    assert asnorm_score(0.5, (0.2, 0.1), (0.3, 0.1)) == pytest.approx(2.5, abs=1e-12)
    assert asnorm_score(0.4, (0.4, 0.3), (0.4, 0.2)) == 0.0
    assert asnorm_score(0.9, CohortStats(0.1, 0.4), CohortStats(0.1, 0.4)) == pytest.approx(2.0, abs=1e-12)
    with pytest.raises(DegenerateStd):
        asnorm_score(0.5, (0.2, 0.0), (0.3, 0.1))


@given(st.floats(-1, 1), st.floats(1e-6, 1), st.floats(-1, 1), st.floats(0.01, 1),
       st.floats(-1, 1), st.floats(0.01, 1))
def test_asnorm_increasing(raw, step, me, se, mt, st_):
    assert asnorm_score(raw, (me, se), (mt, st_)) < asnorm_score(raw + step, (me, se), (mt, st_))


def test_stats_map_matches_single_and_threads():
    rng = np.random.default_rng(4)
    store = EmbeddingStore(Embedding("u%d" % i, v) for i, v in enumerate(rng.standard_normal((700, 10))))
    cohort = build_cohort((("s%d" % (i // 3), v) for i, v in enumerate(rng.standard_normal((60, 10)))), 5)
    stats = compute_stats_map(store, cohort, threads=1)
    for utt in ("u0", "u399", "u699"):
        single = cohort_stats(store[utt], cohort)
        assert stats[utt].mean == pytest.approx(single.mean, abs=1e-12)
        assert stats[utt].std == pytest.approx(single.std, abs=1e-12)
    assert compute_stats_map(store, cohort, threads=4) == stats


def test_asnorm_table_and_scaling():
    trials = [Trial("a", "b"), Trial("b", "a")]
    table = ScoreTable(trials, {"raw": [0.5, 0.5], "cmf": [0.25, 0.25]})
    stats = {"a": CohortStats(0.2, 0.1), "b": CohortStats(0.3, 0.1)}
    out = asnorm_table(table, stats)
    np.testing.assert_allclose(out["asnorm"], [0.5 * ((0.25 - 0.2) / 0.1 + (0.25 - 0.3) / 0.1)] * 2)
    out = asnorm_table(table, stats, "raw")
    np.testing.assert_allclose(out["asnorm"], [2.5, 2.5])
    with pytest.raises(MissingStats):
        asnorm_table(table, {"a": stats["a"]}, "raw")

    scaled = scale_stats(stats, {"a": 0.5, "b": 1.0})
    assert scaled["a"] == CohortStats(0.1, 0.05)
    assert scaled["b"] == stats["b"]
    with pytest.raises(DegenerateStd):
        scale_stats(stats, {"a": 0.0, "b": 1.0})


def test_rank_preserved_for_shared_test_stats():
    rng = np.random.default_rng(9)
    raw = rng.uniform(-1, 1, 50)
    trials = [Trial("e", "t%d" % k) for k in range(50)]
    stats = {"e": CohortStats(0.1, 0.2), **{"t%d" % k: CohortStats(0.3, 0.15) for k in range(50)}}
    out = asnorm_table(ScoreTable(trials, {"raw": raw}), stats, "raw")
    np.testing.assert_array_equal(np.argsort(out["asnorm"]), np.argsort(raw))
