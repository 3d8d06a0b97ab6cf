from collections import Counter

import networkx as nx
import pytest

from genealogy.chains import chain_census
from genealogy.synth import GeneratorConfig, generate

from conftest import make_graph


def test_four_scholar_chain():
    g = make_graph([(1, 2), (2, 3), (3, 4)], discipline=["geometry"] * 4)
    c = chain_census(g)
    assert c.counts["*"][1:] == [3, 2, 1]
    assert c.extension["*"][1] == pytest.approx(2 / 3)
    assert c.extension["*"][0] == 1.0


def test_mixed_link_only_in_denominator():
    g = make_graph([(1, 2), (2, 3)], discipline=["algebra", "algebra", "topology"])
    c = chain_census(g, mode="pathcount")
    assert c.extension["*"][0] == pytest.approx(0.5)
    assert c.counts["*"][1:] == [1]


def _oracle(graph):
    """Enumerate iso paths with networkx and derive both estimators."""
    disc = {i: s.discipline for i, s in graph.scholars.items()}
    iso = nx.DiGraph()
    iso.add_nodes_from(i for i, d in disc.items() if d is not None)
    iso.add_edges_from((m, s) for m, s in graph.edges if disc[m] is not None and disc[m] == disc[s])
    counts = Counter()
    ends = Counter()
    for u in iso:
        counts[0] += 1
        ends[0] += iso.out_degree(u) > 0
        stack = [(u, 0)]
        while stack:
            v, n = stack.pop()
            for w in iso.successors(v):
                counts[n + 1] += 1
                ends[n + 1] += iso.out_degree(w) > 0
                stack.append((w, n + 1))
    return counts, ends


@pytest.mark.parametrize("seed", range(3))
def test_counts_match_path_enumeration(seed):
    g = generate(GeneratorConfig(seed=seed, n_scholars=400, n_disciplines=3, inheritance=0.6,
                                 second_advisor_prob=0.2, missing_discipline_rate=0.05)).graph
    counts, ends = _oracle(g)
    prefix = chain_census(g, mode="prefix")
    path = chain_census(g, mode="pathcount")
    top = max(counts)
    assert prefix.counts["*"] == [counts[n] for n in range(top + 1)]
    for n in range(1, top + 1):
        assert prefix.extension["*"][n] == pytest.approx(ends[n] / counts[n])
        assert path.extension["*"][n] == pytest.approx(counts.get(n + 1, 0) / counts[n])


def test_per_discipline_scope():
    g = make_graph([(1, 2), (2, 3), (4, 5)], discipline=["a", "a", "a", "b", "b"])
    c = chain_census(g, scope="per-discipline")
    assert c.counts["a"][1:] == [2, 1]
    assert c.counts["b"][1:] == [1]
    assert c.counts["*"][1:] == [3, 1]
    rows = c.rows()
    assert {r["discipline"] for r in rows} == {"*", "a", "b"}


def test_no_disciplines():
    with pytest.raises(ValueError):
        chain_census(make_graph([(1, 2)]))


def test_slope_flat_without_memory():
    g = generate(GeneratorConfig(seed=0, n_scholars=30000, inheritance=0.5, block_affinity=0.0)).graph
    assert abs(chain_census(g).slope().slope) < 0.02


def test_slope_positive_with_school_effect():
    g = generate(GeneratorConfig(seed=0, n_scholars=30000, inheritance=0.3, school_effect=0.05,
                                 block_affinity=0.0)).graph
    fit = chain_census(g).slope()
    assert fit.slope > 3 * fit.stderr
