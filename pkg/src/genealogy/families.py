"""Decomposition of the genealogy DAG into single-progenitor families.

Students with several advisors make the genealogy a DAG rather than a
forest. Every such student keeps exactly one advisor link; the choice is
driven by Monte-Carlo estimates of how often cutting a link still leaves
mentor and student in the same connected lineage. Links that are rarely
structural are cut, the link whose removal would most likely split the
pair is kept.

Work is done on a condensed graph: removing all in-links of multi-advisor
students leaves a forest whose trees (super-nodes) never need to be
re-examined, so each random realization only has to resolve super-node
roots.
"""
from __future__ import annotations

import logging
import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import numpy as np
from scipy.sparse import coo_matrix
from scipy.sparse.csgraph import connected_components
from sklearn.base import BaseEstimator, ClusterMixin

from .core import GenealogyGraph
from .validation import check_choice, check_graph, check_positive_int, check_seed, child_rng

logger = logging.getLogger(__name__)

EXHAUSTIVE_LIMIT = 2 ** 16
MC_BLOCK_ENTRIES = 4_000_000


@dataclass
class SuperNodeGraph:
    """Forest condensation of a genealogy.

    Attributes
    ----------
    scholar_ids : ndarray
        Non-isolated scholars, sorted.
    supernode_of : ndarray
        Super-node index of each entry of ``scholar_ids``.
    roots : ndarray
        Root scholar id of each super-node.
    ambiguous_edges : list of (mentor, student)
        In-links of multi-advisor students, removed by the condensation.
    links : dict
        ``(mentor super-node, student super-node) -> count`` of ambiguous edges.
    """

    graph: GenealogyGraph
    scholar_ids: np.ndarray
    supernode_of: np.ndarray
    roots: np.ndarray
    ambiguous_edges: list[tuple[int, int]]
    links: dict[tuple[int, int], int]
    _pos: dict[int, int] = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._pos = {int(s): k for k, s in enumerate(self.scholar_ids)}

    @property
    def n_supernodes(self) -> int:
        return len(self.roots)

    def contains(self, scholar_id: int) -> bool:
        return scholar_id in self._pos

    def supernode(self, scholar_id: int) -> int:
        return int(self.supernode_of[self._pos[scholar_id]])

    def members(self, sn: int) -> list[int]:
        return self.scholar_ids[self.supernode_of == sn].tolist()

    def ambiguous_nodes(self) -> list[int]:
        return sorted({s for _, s in self.ambiguous_edges})

    def forest_edges(self) -> list[tuple[int, int]]:
        amb = set(self.ambiguous_edges)
        return [e for e in self.graph.edges if e not in amb]


def condense(graph: GenealogyGraph) -> SuperNodeGraph:
    """Strip the in-links of every multi-advisor student and group the remaining trees."""
    check_graph(graph)
    ids = np.array(graph.non_isolated(), dtype=np.int64)
    pos = {int(s): k for k, s in enumerate(ids)}
    indeg = Counter(s for _, s in graph.edges)
    forest, ambiguous = [], []
    for m, s in graph.edges:
        (ambiguous if indeg[s] >= 2 else forest).append((m, s))
    n = len(ids)
    if forest:
        rows = np.array([pos[m] for m, _ in forest])
        cols = np.array([pos[s] for _, s in forest])
        adj = coo_matrix((np.ones(len(forest)), (rows, cols)), shape=(n, n))
        _, comp = connected_components(adj, directed=True, connection="weak")
    else:
        comp = np.arange(n)
    has_parent = np.zeros(n, dtype=bool)
    for _, s in forest:
        has_parent[pos[s]] = True
    # renumber super-nodes by their root scholar id
    root_of_comp = {}
    for k in np.flatnonzero(~has_parent):
        root_of_comp[int(comp[k])] = int(ids[k])
    order = sorted(root_of_comp, key=root_of_comp.get)
    remap = np.empty(len(order), dtype=np.int64)
    for new, old in enumerate(order):
        remap[old] = new
    supernode_of = remap[comp]
    roots = np.array([root_of_comp[c] for c in order], dtype=np.int64)
    links = Counter((int(supernode_of[pos[m]]), int(supernode_of[pos[s]])) for m, s in ambiguous)
    return SuperNodeGraph(graph, ids, supernode_of, roots, ambiguous, dict(sorted(links.items())))


@dataclass
class CutDecision:
    """Parent links of one multi-advisor student with their ``p_keep`` estimates.

    ``p_keep`` of a link is the probability that, once the link is cut in a
    random single-parent realization, mentor and student remain connected.
    """

    student_id: int
    parents: tuple[tuple[int, float], ...]
    kept_parent: int | None = None

    @property
    def removed_parents(self) -> list[tuple[int, float]]:
        return [(m, p) for m, p in self.parents if m != self.kept_parent]

    def p_keep(self, mentor_id: int) -> float:
        return dict(self.parents)[mentor_id]


# -- Monte-Carlo / exhaustive estimation -------------------------------------------

@dataclass
class _Problem:
    """Index-space view of the ambiguous part of a super-node graph."""

    n_sn: int
    amb_sn: np.ndarray          # super-node of each ambiguous student
    degree: np.ndarray          # number of parents per ambiguous student
    parent_sn: np.ndarray       # (n_amb, max_degree) super-node of each parent, padded
    link_amb: np.ndarray        # ambiguous-student index of each link
    link_pos: np.ndarray        # parent slot of each link
    link_par_sn: np.ndarray     # super-node of the mentor of each link

    def subset(self, amb_idx: np.ndarray) -> tuple["_Problem", np.ndarray]:
        """Restrict to some ambiguous students, relabeling super-nodes compactly."""
        amb_idx = np.sort(amb_idx)
        link_mask = np.isin(self.link_amb, amb_idx)
        link_ids = np.flatnonzero(link_mask)
        sns = np.unique(np.concatenate([self.amb_sn[amb_idx], self.link_par_sn[link_ids]]))
        pad = self.parent_sn[amb_idx]
        pad = np.where(pad >= 0, np.searchsorted(sns, pad), -1)
        sub = _Problem(
            n_sn=len(sns),
            amb_sn=np.searchsorted(sns, self.amb_sn[amb_idx]),
            degree=self.degree[amb_idx],
            parent_sn=pad,
            link_amb=np.searchsorted(amb_idx, self.link_amb[link_ids]),
            link_pos=self.link_pos[link_ids],
            link_par_sn=np.searchsorted(sns, self.link_par_sn[link_ids]),
        )
        return sub, link_ids

    def tally(self, choices: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Per link: realizations where it is cut, and where it is cut yet still connected."""
        r = choices.shape[0]
        ptr = np.broadcast_to(np.arange(self.n_sn), (r, self.n_sn)).copy()
        ptr[:, self.amb_sn] = self.parent_sn[np.arange(len(self.amb_sn)), choices]
        # pointer jumping: each super-node ends up pointing at its realized root
        while True:
            nxt = np.take_along_axis(ptr, ptr, axis=1)
            if np.array_equal(nxt, ptr):
                break
            ptr = nxt
        removed = choices[:, self.link_amb] != self.link_pos
        connected = ptr[:, self.link_par_sn] == ptr[:, self.amb_sn[self.link_amb]]
        return removed.sum(axis=0), (removed & connected).sum(axis=0)


def _build_problem(sng: SuperNodeGraph) -> tuple[_Problem, list[int], list[tuple[int, int]]]:
    parents = defaultdict(list)
    for m, s in sng.ambiguous_edges:
        parents[s].append(m)
    students = sorted(parents)
    degree = np.array([len(parents[s]) for s in students], dtype=np.int64)
    width = int(degree.max()) if len(degree) else 1
    parent_sn = np.full((len(students), width), -1, dtype=np.int64)
    link_amb, link_pos, link_par, links = [], [], [], []
    for a, s in enumerate(students):
        for j, m in enumerate(sorted(parents[s])):
            parent_sn[a, j] = sng.supernode(m)
            link_amb.append(a)
            link_pos.append(j)
            link_par.append(parent_sn[a, j])
            links.append((m, s))
    prob = _Problem(
        n_sn=sng.n_supernodes,
        amb_sn=np.array([sng.supernode(s) for s in students], dtype=np.int64),
        degree=degree,
        parent_sn=parent_sn,
        link_amb=np.array(link_amb, dtype=np.int64),
        link_pos=np.array(link_pos, dtype=np.int64),
        link_par_sn=np.array(link_par, dtype=np.int64),
    )
    return prob, students, links


def _components(prob: _Problem) -> list[np.ndarray]:
    """Groups of ambiguous students whose realizations interact."""
    n_amb = len(prob.amb_sn)
    if n_amb == 0:
        return []
    rows = prob.link_par_sn
    cols = prob.amb_sn[prob.link_amb]
    adj = coo_matrix((np.ones(len(rows)), (rows, cols)), shape=(prob.n_sn, prob.n_sn))
    _, comp = connected_components(adj, directed=True, connection="weak")
    labels = comp[prob.amb_sn]
    order = np.argsort(labels, kind="stable")
    splits = np.flatnonzero(np.diff(labels[order])) + 1
    return np.split(order, splits)


def _enumerate(prob: _Problem) -> tuple[np.ndarray, np.ndarray]:
    choices = np.indices(tuple(prob.degree)).reshape(len(prob.degree), -1).T
    return prob.tally(choices)


def _monte_carlo(prob: _Problem, samples: int, seed: int) -> tuple[np.ndarray, np.ndarray]:
    block = int(max(64, min(8192, MC_BLOCK_ENTRIES // max(prob.n_sn, len(prob.link_amb), 1))))
    removed = np.zeros(len(prob.link_amb), dtype=np.int64)
    connected = np.zeros(len(prob.link_amb), dtype=np.int64)
    for b, start in enumerate(range(0, samples, block)):
        size = min(block, samples - start)
        rng = child_rng(seed, b)
        choices = rng.integers(0, prob.degree, size=(size, len(prob.degree)))
        r, c = prob.tally(choices)
        removed += r
        connected += c
    return removed, connected


def sample_cut_probabilities(sng: SuperNodeGraph, samples: int = 10_000, seed: int = 0,
                             method: str = "auto") -> list[CutDecision]:
    """Estimate ``p_keep`` for every ambiguous advisor link.

    In each realization every multi-advisor student keeps one uniformly
    random advisor link. ``p_keep`` of a link is the fraction of the
    realizations that cut it in which mentor and student still share a tree.

    Parameters
    ----------
    sng : SuperNodeGraph
    samples : int
        Monte-Carlo realizations (drawn in blocks seeded by ``(seed, block)``).
    seed : int
    method : {'auto', 'montecarlo', 'exhaustive'}
        ``auto`` enumerates every independent group of students whose
        realization count is at most 2**16 and samples the rest.

    Returns
    -------
    list of CutDecision, one per multi-advisor student, ``kept_parent`` unset.
    """
    samples = check_positive_int(samples, "samples")
    seed = check_seed(seed)
    check_choice(method, "method", ("auto", "montecarlo", "exhaustive"))
    prob, students, links = _build_problem(sng)
    n_links = len(links)
    removed = np.zeros(n_links, dtype=np.int64)
    connected = np.zeros(n_links, dtype=np.int64)

    sampled = []
    for group in _components(prob):
        size = math.prod(int(d) for d in prob.degree[group])
        if method == "exhaustive" or (method == "auto" and size <= EXHAUSTIVE_LIMIT):
            if size > EXHAUSTIVE_LIMIT * 64:
                raise ValueError(f"exhaustive enumeration over {size} realizations is too large")
            sub, link_ids = prob.subset(group)
            r, c = _enumerate(sub)
            removed[link_ids] += r
            connected[link_ids] += c
        else:
            sampled.append(group)
    if sampled:
        sub, link_ids = prob.subset(np.concatenate(sampled))
        r, c = _monte_carlo(sub, samples, seed)
        removed[link_ids] += r
        connected[link_ids] += c

    with np.errstate(invalid="ignore", divide="ignore"):
        p = np.where(removed > 0, connected / np.maximum(removed, 1), np.nan)
    if np.isnan(p).any():
        logger.warning("%d links were never cut in %d samples", int(np.isnan(p).sum()), samples)
    per_student = defaultdict(list)
    for (m, s), pk in zip(links, p.tolist()):
        per_student[s].append((m, pk))
    return [CutDecision(s, tuple(per_student[s])) for s in students]


# -- resolution ----------------------------------------------------------------

@dataclass
class FamilyPartition:
    """Scholar -> family assignment; a family is named by its root scholar id."""

    family_of: dict[int, int]
    roots: list[int]
    decisions: list[CutDecision]
    kept_parent: dict[int, int]

    @property
    def n_families(self) -> int:
        return len(self.roots)

    def members(self) -> dict[int, list[int]]:
        out = defaultdict(list)
        for s, f in self.family_of.items():
            out[f].append(s)
        return dict(out)

    def kept_edges(self) -> list[tuple[int, int]]:
        return sorted((m, s) for s, m in self.kept_parent.items())


def _tie_key(decision_parent, outdeg):
    m, p = decision_parent
    return (math.inf if p != p else p, -outdeg[m], m)


def resolve_families(sng: SuperNodeGraph, decisions: list[CutDecision]) -> FamilyPartition:
    """Keep, for each multi-advisor student, the link with the lowest ``p_keep``.

    Ties go to the mentor with more students, then to the lower mentor id.
    """
    graph = sng.graph
    outdeg = Counter(m for m, _ in graph.edges)
    kept_parent = {s: m for m, s in sng.forest_edges()}
    resolved = []
    for d in decisions:
        best = min(d.parents, key=lambda mp: _tie_key(mp, outdeg))[0]
        kept_parent[d.student_id] = best
        resolved.append(CutDecision(d.student_id, d.parents, best))
    family_of = {}
    roots = []
    for x in graph.topological_order():
        if not sng.contains(x):
            continue
        m = kept_parent.get(x)
        if m is None:
            family_of[x] = x
            roots.append(x)
        else:
            family_of[x] = family_of[m]
    return FamilyPartition(family_of, sorted(roots), resolved, kept_parent)


class FamilyResolver(BaseEstimator, ClusterMixin):
    """Estimator front-end: ``fit(graph)`` resolves the family partition.

    Parameters
    ----------
    samples : int, default=10000
    seed : int, default=0
    method : {'auto', 'montecarlo', 'exhaustive'}, default='auto'

    Attributes
    ----------
    supernodes_ : SuperNodeGraph
    decisions_ : list of CutDecision
    partition_ : FamilyPartition
    scholar_ids_ : ndarray
    labels_ : ndarray
        Family root id of each entry in ``scholar_ids_``.
    """

    def __init__(self, samples: int = 10_000, seed: int = 0, method: str = "auto"):
        self.samples = samples
        self.seed = seed
        self.method = method

    def fit(self, graph, y=None):
        check_graph(graph)
        self.supernodes_ = condense(graph)
        probs = sample_cut_probabilities(self.supernodes_, self.samples, self.seed, self.method)
        self.partition_ = resolve_families(self.supernodes_, probs)
        self.decisions_ = self.partition_.decisions
        self.scholar_ids_ = self.supernodes_.scholar_ids
        self.labels_ = np.array([self.partition_.family_of[int(s)] for s in self.scholar_ids_],
                                dtype=np.int64)
        self.n_families_ = self.partition_.n_families
        return self


# -- family statistics ----------------------------------------------------------

def family_sizes(partition: FamilyPartition, graph: GenealogyGraph | None = None) -> list[dict]:
    """Families by decreasing size with relative size and cumulative coverage."""
    members = partition.members()
    total = sum(len(v) for v in members.values())
    students = Counter(partition.kept_parent.values())
    rows = []
    for root, mem in sorted(members.items(), key=lambda kv: (-len(kv[1]), kv[0])):
        rows.append({
            "family_id": root,
            "root_name": graph[root].name if graph is not None else "",
            "size": len(mem),
            "relative_size": len(mem) / total,
            "mean_offspring": sum(students[m] for m in mem) / len(mem),
        })
    cum = 0.0
    for rank, row in enumerate(rows, start=1):
        cum += row["relative_size"]
        row["rank"] = rank
        row["coverage"] = cum
    return rows


def top_k_coverage(partition: FamilyPartition, k: int) -> float:
    sizes = sorted((len(v) for v in partition.members().values()), reverse=True)
    return sum(sizes[:k]) / sum(sizes) if sizes else 0.0


@dataclass
class KinshipIndicators:
    endogamy: float
    concentration: float
    symmetry: float
    n_families: int
    n_links: int

    def as_dict(self) -> dict:
        return {"endogamy": self.endogamy, "concentration": self.concentration,
                "symmetry": self.symmetry, "n_families": self.n_families, "n_links": self.n_links}


def _family_edge_codes(graph: GenealogyGraph, partition: FamilyPartition):
    fams = sorted(partition.roots)
    fidx = {f: k for k, f in enumerate(fams)}
    src = np.array([fidx[partition.family_of[m]] for m, _ in graph.edges], dtype=np.int64)
    tgt = np.array([fidx[partition.family_of[s]] for _, s in graph.edges], dtype=np.int64)
    return src, tgt, len(fams)


def indicators_from_pairs(src: np.ndarray, tgt: np.ndarray, n_families: int,
                          include_diagonal: bool = False) -> KinshipIndicators:
    """Kinship indicators of the family network given one (source, target) per link.

    * endogamy: share of links inside a family;
    * concentration: sum of squared shares over ordered family pairs,
      off-diagonal pairs only unless ``include_diagonal``;
    * symmetry: ``sum_{F != G} min(W_FG, W_GF) / sum_{F != G} W_FG``.
    """
    total = len(src)
    if total == 0:
        return KinshipIndicators(float("nan"), float("nan"), float("nan"), n_families, 0)
    codes, w = np.unique(src * n_families + tgt, return_counts=True)
    f, g = np.divmod(codes, n_families)
    diag = f == g
    endogamy = w[diag].sum() / total
    pool = w if include_diagonal else w[~diag]
    concentration = float(((pool / pool.sum()) ** 2).sum()) if pool.sum() else float("nan")
    off = ~diag
    inter = w[off].sum()
    if inter:
        rev_codes = g[off] * n_families + f[off]
        at = np.searchsorted(codes, rev_codes)
        at = np.minimum(at, len(codes) - 1)
        rev = np.where(codes[at] == rev_codes, w[at], 0)
        symmetry = float(np.minimum(w[off], rev).sum() / inter)
    else:
        symmetry = float("nan")
    return KinshipIndicators(float(endogamy), concentration, symmetry, n_families, total)


def kinship_indicators(graph: GenealogyGraph, partition: FamilyPartition,
                       include_diagonal: bool = False) -> KinshipIndicators:
    """Indicators of the family network over every original advisor link."""
    src, tgt, n = _family_edge_codes(graph, partition)
    return indicators_from_pairs(src, tgt, n, include_diagonal)


@dataclass
class NullModelResult:
    observed: KinshipIndicators
    null_mean: dict[str, float]
    null_std: dict[str, float]
    reps: int

    def as_dict(self) -> dict:
        return {"observed": self.observed.as_dict(), "null_mean": self.null_mean,
                "null_std": self.null_std, "reps": self.reps}

    def z_score(self, name: str) -> float:
        sd = self.null_std[name]
        diff = getattr(self.observed, name) - self.null_mean[name]
        return diff / sd if sd > 0 else math.copysign(math.inf, diff) if diff else 0.0


def null_model(graph: GenealogyGraph, partition: FamilyPartition, reps: int = 200, seed: int = 0,
               include_diagonal: bool = False) -> NullModelResult:
    """Multinomial reshuffling of the family network preserving both marginals.

    Each replicate redistributes the ``T`` links over ordered family pairs
    with probability ``out(F) * in(G) / T**2``; drawing the source and the
    target of every link independently from the two marginals is the same
    multinomial.
    """
    reps = check_positive_int(reps, "reps")
    seed = check_seed(seed)
    src, tgt, n = _family_edge_codes(graph, partition)
    observed = indicators_from_pairs(src, tgt, n, include_diagonal)
    total = len(src)
    p_out = np.bincount(src, minlength=n) / max(total, 1)
    p_in = np.bincount(tgt, minlength=n) / max(total, 1)
    names = ("endogamy", "concentration", "symmetry")
    samples = {k: [] for k in names}
    for r in range(reps):
        rng = child_rng(seed, r)
        s = rng.choice(n, size=total, p=p_out)
        t = rng.choice(n, size=total, p=p_in)
        ind = indicators_from_pairs(s, t, n, include_diagonal)
        for k in names:
            samples[k].append(getattr(ind, k))
    mean = {k: float(np.nanmean(v)) if not np.all(np.isnan(v)) else float("nan") for k, v in samples.items()}
    std = {k: float(np.nanstd(v)) if not np.all(np.isnan(v)) else float("nan") for k, v in samples.items()}
    return NullModelResult(observed, mean, std, reps)


@dataclass
class Incidence:
    attribute: str
    families: list[int]
    values: list[str]
    matrix: np.ndarray

    @property
    def row_marginal(self) -> np.ndarray:
        return self.matrix.sum(axis=1)

    @property
    def column_marginal(self) -> np.ndarray:
        return self.matrix.sum(axis=0)

    def to_rows(self) -> list[dict]:
        rows = []
        for i, f in enumerate(self.families):
            row = {"family_id": f}
            row.update({v: int(self.matrix[i, j]) for j, v in enumerate(self.values)})
            row["n_values"] = int(self.row_marginal[i])
            rows.append(row)
        return rows


def incidence_matrices(graph: GenealogyGraph, partition: FamilyPartition, attribute: str) -> Incidence:
    """Presence matrix of attribute values in families.

    Rows are families by decreasing size, columns are values by decreasing
    abundance among family members.
    """
    members = partition.members()
    fams = sorted(members, key=lambda f: (-len(members[f]), f))
    abundance = Counter()
    present = defaultdict(set)
    for f, mem in members.items():
        for s in mem:
            v = graph[s].attribute(attribute)
            if v is not None:
                abundance[v] += 1
                present[f].add(v)
    values = sorted(abundance, key=lambda v: (-abundance[v], v))
    col = {v: j for j, v in enumerate(values)}
    mat = np.zeros((len(fams), len(values)), dtype=np.int64)
    for i, f in enumerate(fams):
        for v in present[f]:
            mat[i, col[v]] = 1
    return Incidence(attribute, fams, values, mat)
