"""Synthetic genealogies with planted structure and a ground-truth manifest.

Scholars are created in year order. Each one either starts a new lineage or
picks its advisor among scholars who defended between ``gap_max`` and
``gap_min`` years earlier, with probability proportional to a per-scholar
fecundity weight. Gamma(1) fecundity makes offspring counts geometric.
Advisors always come from strictly earlier years, so corpora are acyclic by
construction.

Attributes follow simple planted rules:

* country: inherited from the advisor or drawn from a Zipf popularity law
  whose ranking is re-permuted at every ``country_regime_years`` entry;
* discipline: inherited with probability ``inheritance`` (raised by
  ``school_effect`` per link of the advisor's current iso-discipline run),
  else drawn inside the advisor's discipline block with probability
  ``block_affinity``, else from the base law. Block maps are re-drawn at
  every ``block_reshuffle_years`` entry.
"""
from __future__ import annotations

import bisect
import json
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import numpy as np

from .core import GenealogyGraph, Scholar, emit_corpus
from .validation import check_positive_int, check_probability, check_seed

GENERIC_WORDS = ("theory", "analysis", "equations", "methods", "problems", "structures",
                 "functions", "properties", "applications", "systems")
_SYLLABLES = ("ka", "lo", "mi", "ne", "ru", "ta", "vo", "zi", "pe", "su", "gra", "dor",
              "fen", "hul", "bix", "qua", "tem", "wex", "yor", "cil")


@dataclass
class GeneratorConfig:
    seed: int = 0
    n_scholars: int = 1000
    start_year: int = 1700
    end_year: int = 2015
    growth_rate: float = 0.01
    gap_min: int = 3
    gap_max: int = 40
    founder_rate: float = 0.01
    fecundity_shape: float = 1.0
    second_advisor_prob: float = 0.05
    endogamy: float = 0.5
    n_lineages: int = 0
    n_countries: int = 30
    country_zipf: float = 1.0
    country_inheritance: float = 0.5
    country_regime_years: list[int] = field(default_factory=list)
    n_disciplines: int = 20
    n_blocks: int = 4
    discipline_zipf: float = 0.0
    inheritance: float = 0.5
    block_affinity: float = 0.8
    school_effect: float = 0.0
    max_inheritance: float = 0.95
    block_reshuffle_years: list[int] = field(default_factory=list)
    title_rate: float = 0.9
    title_noise: float = 0.2
    keywords_per_discipline: int = 12
    missing_year_rate: float = 0.0
    missing_discipline_rate: float = 0.0
    missing_country_rate: float = 0.0
    violation_rate: float = 0.0

    def __post_init__(self):
        check_seed(self.seed)
        check_positive_int(self.n_scholars, "n_scholars")
        check_positive_int(self.n_countries, "n_countries")
        check_positive_int(self.n_disciplines, "n_disciplines")
        check_positive_int(self.n_blocks, "n_blocks")
        if not 1 <= self.gap_min <= self.gap_max:
            raise ValueError("need 1 <= gap_min <= gap_max")
        if self.end_year < self.start_year:
            raise ValueError("end_year must be >= start_year")
        if self.n_lineages < 0:
            raise ValueError("n_lineages must be non-negative")
        if self.fecundity_shape <= 0:
            raise ValueError("fecundity_shape must be positive")
        for name in ("founder_rate", "second_advisor_prob", "endogamy", "country_inheritance",
                     "inheritance", "block_affinity", "max_inheritance", "title_rate",
                     "title_noise", "missing_year_rate", "missing_discipline_rate",
                     "missing_country_rate", "violation_rate"):
            check_probability(getattr(self, name), name)
        if self.school_effect < 0:
            raise ValueError("school_effect must be non-negative")

    @classmethod
    def from_dict(cls, data: dict) -> "GeneratorConfig":
        known = {f.name for f in fields(cls)}
        unknown = set(data) - known
        if unknown:
            raise ValueError(f"unknown generator options: {sorted(unknown)}")
        return cls(**data)

    @classmethod
    def from_json(cls, path) -> "GeneratorConfig":
        return cls.from_dict(json.loads(Path(path).read_text()))


@dataclass
class SyntheticCorpus:
    graph: GenealogyGraph
    manifest: dict

    def write(self, corpus_path, manifest_path=None):
        emit_corpus(self.graph, corpus_path)
        if manifest_path is not None:
            Path(manifest_path).write_text(json.dumps(self.manifest, indent=1, sort_keys=True) + "\n")


def _zipf(n: int, s: float) -> np.ndarray:
    w = 1.0 / np.arange(1, n + 1) ** s
    return w / w.sum()


def _sample_years(rng, cfg: GeneratorConfig) -> np.ndarray:
    span = cfg.end_year - cfg.start_year + 1
    u = rng.random(cfg.n_scholars)
    g = cfg.growth_rate
    if abs(g) < 1e-12:
        t = u * span
    else:
        t = np.log1p(u * np.expm1(g * span)) / g
    years = cfg.start_year + np.floor(t).astype(np.int64)
    return np.sort(np.minimum(years, cfg.end_year))


def _keywords(rng, n_disc: int, per: int) -> list[list[str]]:
    seen = set(GENERIC_WORDS)
    out = []
    for _ in range(n_disc):
        words = []
        while len(words) < per:
            w = "".join(rng.choice(_SYLLABLES, size=3))
            if w not in seen:
                seen.add(w)
                words.append(w)
        out.append(words)
    return out


def _stratified_advisors(rng, cfg, years, fecundity, founder_u):
    """First advisors drawn inside a fixed lineage label, so lineage shares stay constant.

    When no lineage member defended inside the gap window, the most recent
    earlier member is used; only the first member of each lineage is a founder.
    """
    n = len(years)
    lineage = rng.integers(cfg.n_lineages, size=n)
    advisor = np.full(n, -1, dtype=np.int64)
    u = rng.random(n)
    for ell in range(cfg.n_lineages):
        idx = np.flatnonzero(lineage == ell)
        if not len(idx):
            continue
        y = years[idx]
        cum = np.concatenate([[0.0], np.cumsum(fecundity[idx])])
        lo = np.searchsorted(y, y - cfg.gap_max, side="left")
        hi = np.searchsorted(y, y - cfg.gap_min, side="right")
        x = cum[lo] + u[idx] * (cum[hi] - cum[lo])
        pick = np.clip(np.searchsorted(cum, x, side="right") - 1, lo, np.maximum(hi - 1, lo))
        latest = np.searchsorted(y, y - 1, side="right") - 1
        pick = np.where(hi > lo, pick, latest)
        ok = (pick >= 0) & (founder_u[idx] >= cfg.founder_rate)
        advisor[idx[ok]] = idx[pick[ok]]
    return advisor


def generate(config: GeneratorConfig) -> SyntheticCorpus:
    """Draw one corpus and its ground-truth manifest (deterministic in ``config.seed``)."""
    cfg = config
    rng = np.random.default_rng(cfg.seed)
    n = cfg.n_scholars
    years = _sample_years(rng, cfg)

    # advisors: fecundity-weighted draw among scholars dated in [y - gap_max, y - gap_min]
    fecundity = rng.gamma(cfg.fecundity_shape, 1.0, size=n)
    cum = np.concatenate([[0.0], np.cumsum(fecundity)])
    lo = np.searchsorted(years, years - cfg.gap_max, side="left")
    hi = np.searchsorted(years, years - cfg.gap_min, side="right")

    def draw(u):
        x = cum[lo] + u * (cum[hi] - cum[lo])
        return np.clip(np.searchsorted(cum, x, side="right") - 1, lo, np.maximum(hi - 1, lo))

    has_pool = hi > lo
    founder = ~has_pool | (rng.random(n) < cfg.founder_rate)
    advisor = np.where(founder, -1, draw(rng.random(n)))
    alt = draw(rng.random(n))
    if cfg.n_lineages:
        advisor = _stratified_advisors(rng, cfg, years, fecundity, founder_u=rng.random(n))
    second_u = rng.random(n)
    endo_u = rng.random(n)

    # planted laws
    country_names = [f"country-{k:02d}" for k in range(cfg.n_countries)]
    regime_years = sorted(cfg.country_regime_years)
    country_perms = [rng.permutation(cfg.n_countries) for _ in range(len(regime_years) + 1)]
    country_p = _zipf(cfg.n_countries, cfg.country_zipf)
    disc_names = [f"discipline-{k:02d}" for k in range(cfg.n_disciplines)]
    disc_perm = rng.permutation(cfg.n_disciplines)
    disc_p = np.empty(cfg.n_disciplines)
    disc_p[disc_perm] = _zipf(cfg.n_disciplines, cfg.discipline_zipf)
    reshuffle_years = sorted(cfg.block_reshuffle_years)
    block_maps = []
    for _ in range(len(reshuffle_years) + 1):
        perm = rng.permutation(cfg.n_disciplines)
        bm = np.empty(cfg.n_disciplines, dtype=np.int64)
        bm[perm] = np.arange(cfg.n_disciplines) % cfg.n_blocks
        block_maps.append(bm)

    country_regime = np.array([bisect.bisect_right(regime_years, y) for y in years])
    block_regime = np.array([bisect.bisect_right(reshuffle_years, y) for y in years])
    country_draw = np.empty(n, dtype=np.int64)
    base_country = rng.choice(cfg.n_countries, size=n, p=country_p)
    for r, perm in enumerate(country_perms):
        mask = country_regime == r
        country_draw[mask] = perm[base_country[mask]]
    disc_draw = rng.choice(cfg.n_disciplines, size=n, p=disc_p)
    u_country = rng.random(n)
    u_inherit = rng.random(n)
    u_block = rng.random(n)
    block_pick = rng.random(n)

    country = np.empty(n, dtype=np.int64)
    disc = np.empty(n, dtype=np.int64)
    run = np.zeros(n, dtype=np.int64)
    family = np.empty(n, dtype=np.int64)
    second = np.full(n, -1, dtype=np.int64)
    block_members = [[np.flatnonzero(bm == b) for b in range(cfg.n_blocks)] for bm in block_maps]
    for i in range(n):
        a = advisor[i]
        if a < 0:
            family[i] = i
            country[i] = country_draw[i]
            disc[i] = disc_draw[i]
            continue
        family[i] = family[a]
        country[i] = country[a] if u_country[i] < cfg.country_inheritance else country_draw[i]
        q = min(cfg.max_inheritance, cfg.inheritance + cfg.school_effect * run[a])
        if u_inherit[i] < q:
            d = disc[a]
        elif u_block[i] < cfg.block_affinity:
            members = block_members[block_regime[i]][block_maps[block_regime[i]][disc[a]]]
            d = members[int(block_pick[i] * len(members))]
        else:
            d = disc_draw[i]
        disc[i] = d
        run[i] = run[a] + 1 if d == disc[a] else 0
        if second_u[i] < cfg.second_advisor_prob:
            if endo_u[i] < cfg.endogamy:
                cand = advisor[a]
            else:
                cand = alt[i]
            if cand >= 0 and cand != a and years[cand] < years[i]:
                second[i] = cand

    # titles from discipline keywords mixed with generic words
    keywords = _keywords(rng, cfg.n_disciplines, cfg.keywords_per_discipline)
    has_title = rng.random(n) < cfg.title_rate
    titles = []
    for i in range(n):
        if not has_title[i]:
            titles.append(None)
            continue
        words = []
        for _ in range(3):
            if rng.random() < cfg.title_noise:
                words.append(GENERIC_WORDS[int(rng.integers(len(GENERIC_WORDS)))])
            else:
                kw = keywords[disc[i]]
                words.append(kw[int(rng.integers(len(kw)))])
        titles.append(f"On the {words[0]} of {words[1]} and {words[2]}")

    # corruption
    year_list: list[int | None] = years.tolist()
    disc_list: list[str | None] = [disc_names[d] for d in disc]
    country_list: list[str | None] = [country_names[c] for c in country]
    missing_year = np.flatnonzero(rng.random(n) < cfg.missing_year_rate)
    missing_disc = np.flatnonzero(rng.random(n) < cfg.missing_discipline_rate)
    missing_country = np.flatnonzero(rng.random(n) < cfg.missing_country_rate)
    for i in missing_year:
        year_list[i] = None
    for i in missing_disc:
        disc_list[i] = None
    for i in missing_country:
        country_list[i] = None

    edges = [(int(advisor[i]), i) for i in range(n) if advisor[i] >= 0]
    edges += [(int(second[i]), i) for i in range(n) if second[i] >= 0]
    parents_of: dict[int, list[int]] = {}
    children_of: dict[int, list[int]] = {}
    for m, s in edges:
        parents_of.setdefault(s, []).append(m)
        children_of.setdefault(m, []).append(s)
    dated = [(m, s) for m, s in edges if year_list[m] is not None and year_list[s] is not None]
    n_inject = int(round(cfg.violation_rate * len(dated)))
    injected_students = set()
    if n_inject:
        order = rng.permutation(len(dated))
        for k in order:
            m, s = dated[k]
            if len(injected_students) >= n_inject:
                break
            if s in injected_students or m in injected_students:
                continue
            year_list[s] = max(year_list[m] - int(rng.integers(1, 15)), 1300)
            injected_students.add(s)
    violations = sorted(
        {(m, s) for x in injected_students for m, s in
         [(p, x) for p in parents_of.get(x, [])] + [(x, c) for c in children_of.get(x, [])]
         if year_list[m] is not None and year_list[s] is not None and year_list[m] > year_list[s]})

    ids = np.arange(1, n + 1)
    scholars = [
        Scholar(id=int(ids[i]), name=f"Scholar {ids[i]}", year=year_list[i], country=country_list[i],
                university=None if country_list[i] is None else f"{country_list[i]} university {i % 3}",
                discipline=disc_list[i], thesis_title=titles[i])
        for i in range(n)
    ]
    graph = GenealogyGraph(scholars, [(int(ids[m]), int(ids[s])) for m, s in edges])

    manifest = {
        "config": asdict(cfg),
        "family_root": {int(ids[i]): int(ids[family[i]]) for i in range(n)},
        "second_advisor_edges": sorted((int(ids[second[i]]), int(ids[i])) for i in range(n) if second[i] >= 0),
        "country_regimes": {"years": regime_years,
                            "rankings": [[country_names[c] for c in perm] for perm in country_perms]},
        "discipline_blocks": {"years": reshuffle_years,
                              "maps": [{disc_names[d]: int(bm[d]) for d in range(cfg.n_disciplines)}
                                       for bm in block_maps]},
        "inheritance": cfg.inheritance,
        "school_effect": cfg.school_effect,
        "discipline_keywords": {disc_names[d]: keywords[d] for d in range(cfg.n_disciplines)},
        "true_discipline": {int(ids[i]): disc_names[disc[i]] for i in range(n)},
        "injected_violations": [(int(ids[m]), int(ids[s])) for m, s in violations],
        "missing_year": [int(ids[i]) for i in missing_year],
        "missing_discipline": [int(ids[i]) for i in missing_disc],
        "missing_country": [int(ids[i]) for i in missing_country],
    }
    return SyntheticCorpus(graph, manifest)
