from collections import Counter

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from sklearn.base import clone

from genealogy.core import CountTable, TimeWindowing
from genealogy.rankings import (Profile, ProfileClusterer, RankedList, build_profiles,
                                cluster_profiles, drift_series, extended_jaccard, extended_multiset,
                                jaccard_distance, ks_distance, ks_matrix, ranking_drift, top_k_rankings)
from genealogy.synth import GeneratorConfig, generate


def _table(rows, labels=None):
    counts = np.array(rows, dtype=np.int64)
    labels = labels or [f"l{i}" for i in range(len(rows))]
    return CountTable("country", labels, None, counts, counts.sum(axis=0), 0)


def _profile(values, label="p"):
    v = np.asarray(values, dtype=float)
    return Profile(label, v, v / v.sum())


def test_uniform_profile():
    p = build_profiles(_table([[2, 2], [2, 2]]))[0]
    np.testing.assert_allclose(p.values, [0.5, 0.5])
    np.testing.assert_allclose(p.normalized, [0.5, 0.5])


def test_hand_computed_profile():
    p = build_profiles(_table([[1, 0, 3], [9, 10, 7]]))[0]
    np.testing.assert_allclose(p.values, [0.1, 0.0, 0.3])
    np.testing.assert_allclose(p.normalized, [0.25, 0.0, 0.75])


def test_all_zero_label_dropped(caplog):
    profs = build_profiles(_table([[0, 0], [1, 2]], ["ghost", "real"]))
    assert [p.label for p in profs] == ["real"]
    assert "ghost" in caplog.text


@pytest.mark.parametrize("a, b, d", [
    ([0.3, 0.7], [0.3, 0.7], 0.0),
    ([1, 0], [0, 1], 1.0),
    ([0.5, 0.5], [0, 1], 0.5),
])
def test_ks_examples(a, b, d):
    assert ks_distance(a, b) == pytest.approx(d)


def _random_profile(rng, n):
    v = rng.random(n) * (rng.random(n) < 0.8)
    v[rng.integers(n)] += 0.1
    return v / v.sum()


def test_ks_matrix_matches_pairwise():
    rng = np.random.default_rng(0)
    profs = [_profile(_random_profile(rng, 7), str(i)) for i in range(6)]
    m = ks_matrix(profs)
    for i, j in np.ndindex(6, 6):
        assert m[i, j] == pytest.approx(ks_distance(profs[i], profs[j]))


@settings(max_examples=200, deadline=None)
@given(st.lists(st.lists(st.floats(0, 1), min_size=5, max_size=5).filter(lambda v: sum(v) > 1e-3),
                min_size=3, max_size=3))
def test_ks_is_a_pseudometric(vs):
    a, b, c = (np.array(v) / sum(v) for v in vs)
    assert ks_distance(a, a) == 0
    assert ks_distance(a, b) == pytest.approx(ks_distance(b, a))
    assert 0 <= ks_distance(a, b) <= 1 + 1e-12
    assert ks_distance(a, c) <= ks_distance(a, b) + ks_distance(b, c) + 1e-12


def test_identical_pair_merges_first():
    profs = [_profile([1, 1, 0], "a"), _profile([1, 1, 0], "b"), _profile([0, 0, 1], "c")]
    d = cluster_profiles(profs)
    first = d.merges()[0]
    assert {first["left"], first["right"]} == {"a", "b"}
    assert first["height"] == 0


@pytest.mark.parametrize("method", ["average", "complete", "single"])
def test_two_pairs_recovered(method):
    profs = [_profile([5, 1, 0, 0], "early1"), _profile([4, 2, 0, 0], "early2"),
             _profile([0, 0, 1, 5], "late1"), _profile([0, 0, 2, 4], "late2")]
    cut = cluster_profiles(profs, method).cut(2)
    assert cut["early1"] == cut["early2"] != cut["late1"] == cut["late2"]


def test_newick_export():
    profs = [_profile([1, 0], "a b"), _profile([1, 0], "c"), _profile([0, 1], "d")]
    nwk = cluster_profiles(profs).to_newick()
    assert nwk.endswith(";")
    assert "'a b'" in nwk and nwk.count("(") == 2


def test_clusterer_estimator():
    profs = [_profile([5, 1, 0], "x"), _profile([4, 1, 0], "y"), _profile([0, 1, 5], "z")]
    est = ProfileClusterer(linkage="complete", n_clusters=2)
    assert clone(est).get_params() == {"linkage": "complete", "n_clusters": 2}
    est.fit(profs)
    assert est.labels_.tolist() == [0, 0, 1]
    env = est.envelopes_[0]
    assert env.members == ["x", "y"]
    assert np.all(env.lower <= env.mean) and np.all(env.mean <= env.upper)
    assert est.fit_predict(profs).tolist() == [0, 0, 1]


def test_bad_linkage():
    with pytest.raises(ValueError):
        cluster_profiles([_profile([1]), _profile([1])], "ward")


# -- extended Jaccard -------------------------------------------------------------

def test_worked_example_multiset():
    r = RankedList.from_ranks({1: "a", 2: "c", 3: "d", 4: "b"})
    assert extended_multiset(r) == Counter({"a": 4, "c": 3, "d": 2, "b": 1})
    assert extended_multiset(RankedList(["x"])) == Counter({"x": 1})
    assert sum(extended_multiset(RankedList("pqr")).values()) == 6


def test_jaccard_examples():
    r = RankedList(["a", "b", "c"])
    assert extended_jaccard(r, r) == 1.0
    assert jaccard_distance(r, r) == 0.0
    assert extended_jaccard(r, RankedList(["x", "y"])) == 0.0
    assert extended_jaccard(RankedList(["a", "b"]), RankedList(["b", "a"])) == 0.5


def _oracle_jaccard(r1, r2):
    """Jaccard over explicitly materialized multisets (lists of tagged copies)."""
    def expand(r):
        return {(lab, copy) for rank, lab in enumerate(r, start=1) for copy in range(len(r) - rank + 1)}
    a, b = expand(r1), expand(r2)
    return len(a & b) / len(a | b) if a | b else 1.0


@settings(max_examples=200, deadline=None)
@given(st.lists(st.sampled_from("abcdefgh"), unique=True, max_size=8),
       st.lists(st.sampled_from("abcdefgh"), unique=True, max_size=8))
def test_jaccard_matches_materialized_oracle(x, y):
    j = extended_jaccard(RankedList(x), RankedList(y))
    assert j == pytest.approx(_oracle_jaccard(x, y))
    assert j == pytest.approx(extended_jaccard(RankedList(y), RankedList(x)))
    assert 0 <= j <= 1


def test_ranked_list_validation():
    with pytest.raises(ValueError):
        RankedList(["a", "a"])
    with pytest.raises(ValueError):
        RankedList.from_ranks({1: "a", 3: "b"})


def test_drift_examples():
    stable = [RankedList("abc", w) for w in range(5)]
    assert drift_series(stable, k=3).tolist() == [0.0] * 4
    jump = stable[:3] + [RankedList("xyz", 3), RankedList("xyz", 4)]
    d = drift_series(jump, k=3)
    assert d.tolist() == [0.0, 0.0, 1.0, 0.0]
    base = drift_series(jump, k=3, baseline=0)
    assert base.tolist() == [0.0, 0.0, 0.0, 1.0, 1.0]


def test_top_k_ties_broken_by_label():
    t = _table([[3, 1], [3, 0], [1, 5]], ["b", "a", "c"])
    r = top_k_rankings(t, k=2)
    assert r[0].labels == ("a", "b")
    assert r[1].labels == ("c", "b")


def test_planted_ranking_change():
    cfg = GeneratorConfig(seed=0, n_scholars=15000, start_year=1900, end_year=2009, growth_rate=0.0,
                          gap_max=30, country_inheritance=0.3, country_regime_years=[1960])
    g = generate(cfg).graph
    _, d = ranking_drift(g, "country", TimeWindowing(1900, 2009, 10), k=10)
    assert int(np.argmax(d)) == 5
