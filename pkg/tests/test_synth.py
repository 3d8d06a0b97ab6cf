import json

import numpy as np
import pytest

from genealogy.core import ingest_corpus
from genealogy.repair import detect_date_violations
from genealogy.synth import GeneratorConfig, generate


def test_generated_corpus_ingests(tmp_path):
    corpus = generate(GeneratorConfig(seed=3, n_scholars=500, second_advisor_prob=0.2))
    corpus.write(tmp_path / "c.jsonl", tmp_path / "m.json")
    assert ingest_corpus(tmp_path / "c.jsonl") == corpus.graph
    manifest = json.loads((tmp_path / "m.json").read_text())
    assert manifest["config"]["seed"] == 3


def test_seed_determinism():
    a = generate(GeneratorConfig(seed=11, n_scholars=400))
    b = generate(GeneratorConfig(seed=11, n_scholars=400))
    assert a.graph == b.graph and a.manifest == b.manifest
    assert generate(GeneratorConfig(seed=12, n_scholars=400)).graph != a.graph


def test_advisors_strictly_earlier():
    g = generate(GeneratorConfig(seed=1, n_scholars=3000, second_advisor_prob=0.3)).graph
    assert all(g[m].year < g[s].year for m, s in g.edges)


def test_no_second_advisor_gives_forest():
    g = generate(GeneratorConfig(seed=2, n_scholars=2000, second_advisor_prob=0.0)).graph
    assert max(len(g.parents(i)) for i in g.scholars) == 1


def test_injected_violations_recovered_exactly():
    corpus = generate(GeneratorConfig(seed=5, n_scholars=20000, violation_rate=0.0032))
    found = detect_date_violations(corpus.graph)
    assert sorted(found.edges) == sorted(map(tuple, corpus.manifest["injected_violations"]))
    assert found.rate == pytest.approx(0.0032, rel=0.35)


def test_missing_rates():
    corpus = generate(GeneratorConfig(seed=1, n_scholars=10000, missing_year_rate=0.06,
                                      missing_discipline_rate=0.12))
    g = corpus.graph
    assert sum(s.year is None for s in g.scholars.values()) == len(corpus.manifest["missing_year"])
    assert len(corpus.manifest["missing_year"]) / len(g) == pytest.approx(0.06, abs=0.01)
    assert len(corpus.manifest["missing_discipline"]) / len(g) == pytest.approx(0.12, abs=0.01)


def test_growth_makes_later_decades_larger():
    g = generate(GeneratorConfig(seed=0, n_scholars=20000, growth_rate=0.02, start_year=1800,
                                 end_year=2000)).graph
    years = np.array([s.year for s in g.scholars.values()])
    assert (years >= 1950).sum() > 5 * (years < 1850).sum()


def test_lineages_fix_family_count():
    g = generate(GeneratorConfig(seed=0, n_scholars=3000, n_lineages=3, founder_rate=0.0,
                                 second_advisor_prob=0.0)).graph
    roots = [i for i in g.scholars if not g.parents(i)]
    first_year = min(s.year for s in g.scholars.values())
    assert all(g[r].year == first_year for r in roots)


def test_country_regimes_planted():
    corpus = generate(GeneratorConfig(seed=0, n_scholars=20000, country_inheritance=0.0,
                                      country_regime_years=[1900]))
    rankings = corpus.manifest["country_regimes"]["rankings"]
    assert len(rankings) == 2 and rankings[0] != rankings[1]
    late = [s.country for s in corpus.graph.scholars.values() if s.year >= 1900]
    assert max(set(late), key=late.count) == rankings[1][0]


def test_config_validation(tmp_path):
    with pytest.raises(ValueError):
        GeneratorConfig(gap_min=5, gap_max=2)
    with pytest.raises(ValueError):
        GeneratorConfig(endogamy=1.5)
    with pytest.raises(ValueError):
        GeneratorConfig(seed=-1)
    with pytest.raises(ValueError):
        GeneratorConfig.from_dict({"n_scholar": 3})
    p = tmp_path / "g.json"
    p.write_text(json.dumps({"n_scholars": 5, "seed": 2}))
    assert GeneratorConfig.from_json(p).n_scholars == 5


def test_titles_carry_discipline_keywords():
    corpus = generate(GeneratorConfig(seed=0, n_scholars=300, title_noise=0.0, title_rate=1.0))
    kw = corpus.manifest["discipline_keywords"]
    for s in corpus.graph.scholars.values():
        words = set(s.thesis_title.split())
        assert words & set(kw[s.discipline])
