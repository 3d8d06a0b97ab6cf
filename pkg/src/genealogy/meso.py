"""Attribute-level transition networks built from advisor links.

Nodes are attribute values (countries, disciplines, ...); the weight of
``A -> B`` counts advisor links from a mentor carrying ``A`` to a student
carrying ``B``. Self-loops are part of the network.
"""
from __future__ import annotations

import math
from collections import Counter, defaultdict
from dataclasses import dataclass, field

import networkx as nx
import numpy as np

from .core import GenealogyGraph, TimeWindowing
from .validation import check_choice, check_graph, check_probability, check_seed


@dataclass
class MesoNetwork:
    attribute: str
    weights: dict[tuple[str, str], int]
    window: tuple[int, int] | None = None
    dropped: int = 0
    labels: list[str] = field(default_factory=list)

    def __post_init__(self):
        if not self.labels:
            self.labels = sorted({x for pair in self.weights for x in pair})

    @property
    def total_weight(self) -> int:
        return sum(self.weights.values())

    @property
    def n_edges(self) -> int:
        return len(self.weights)

    def out_strength(self, include_self: bool = True) -> dict[str, int]:
        out = Counter({lab: 0 for lab in self.labels})
        for (a, b), w in self.weights.items():
            if include_self or a != b:
                out[a] += w
        return dict(out)

    def in_strength(self, include_self: bool = True) -> dict[str, int]:
        inn = Counter({lab: 0 for lab in self.labels})
        for (a, b), w in self.weights.items():
            if include_self or a != b:
                inn[b] += w
        return dict(inn)

    def to_networkx(self) -> nx.DiGraph:
        g = nx.DiGraph()
        g.add_nodes_from(self.labels)
        for (a, b), w in sorted(self.weights.items()):
            g.add_edge(a, b, weight=w)
        return g

    def edge_rows(self) -> list[dict]:
        return [{"from": a, "to": b, "weight": w} for (a, b), w in sorted(self.weights.items())]

    def to_dot(self) -> str:
        lines = ["digraph meso {"]
        for lab in self.labels:
            lines.append(f'  "{_dot_escape(lab)}";')
        for (a, b), w in sorted(self.weights.items()):
            lines.append(f'  "{_dot_escape(a)}" -> "{_dot_escape(b)}" [weight={w}];')
        lines.append("}")
        return "\n".join(lines) + "\n"


def _dot_escape(s: str) -> str:
    return s.replace("\\", "\\\\").replace('"', '\\"')


def build_meso(graph: GenealogyGraph, attribute: str, window: tuple[int, int] | None = None) -> MesoNetwork:
    """Project the genealogy onto one attribute.

    With ``window=(start, stop)`` only links whose student year lies in the
    half-open range are kept. Links with a missing endpoint attribute (or a
    missing student year when windowed) are counted in ``dropped``.
    """
    check_graph(graph)
    sch = graph.scholars
    weights: Counter = Counter()
    dropped = 0
    for m, s in graph.edges:
        if window is not None:
            y = sch[s].year
            if y is None:
                dropped += 1
                continue
            if not (window[0] <= y < window[1]):
                continue
        a, b = sch[m].attribute(attribute), sch[s].attribute(attribute)
        if a is None or b is None:
            dropped += 1
            continue
        weights[a, b] += 1
    return MesoNetwork(attribute, dict(weights), window, dropped)


def windowed_networks(graph: GenealogyGraph, attribute: str, windows: TimeWindowing) -> list[MesoNetwork]:
    """One network per window, links assigned to the student's window."""
    nets = [Counter() for _ in range(windows.n_windows)]
    dropped = [0] * windows.n_windows
    sch = graph.scholars
    for m, s in graph.edges:
        k = windows.window_of(sch[s].year)
        if k is None:
            continue
        a, b = sch[m].attribute(attribute), sch[s].attribute(attribute)
        if a is None or b is None:
            dropped[k] += 1
            continue
        nets[k][a, b] += 1
    return [MesoNetwork(attribute, dict(c), windows.bounds(k), dropped[k]) for k, c in enumerate(nets)]


# -- flows ---------------------------------------------------------------------

@dataclass(frozen=True)
class FlowTriple:
    label: str
    stay: float
    export: float
    import_: float
    total: int


def flow_triples(net: MesoNetwork) -> list[FlowTriple]:
    """Self-loop, outgoing and incoming shares of each label's transitions."""
    stay = Counter()
    out = Counter()
    inn = Counter()
    for (a, b), w in net.weights.items():
        if a == b:
            stay[a] += w
        else:
            out[a] += w
            inn[b] += w
    triples = []
    for lab in net.labels:
        d = stay[lab] + out[lab] + inn[lab]
        if d == 0:
            continue
        triples.append(FlowTriple(lab, stay[lab] / d, out[lab] / d, inn[lab] / d, d))
    return triples


@dataclass
class HierarchyCurve:
    direction: str
    threshold: float
    labels: list[str]
    strengths: np.ndarray
    cumulative: np.ndarray

    @property
    def elite(self) -> list[str]:
        if not len(self.cumulative):
            return []
        total = self.strengths.sum()
        cum = np.cumsum(self.strengths)
        # integer strengths: compare with a tolerance to absorb 0.8 * total rounding
        k = int(np.argmax(cum >= self.threshold * total - 1e-9 * max(total, 1)))
        return self.labels[: k + 1]

    @property
    def elite_size(self) -> int:
        return len(self.elite)


def hierarchy_curve(net: MesoNetwork, direction: str = "production", threshold: float = 0.8,
                    include_self_loops: bool = False) -> HierarchyCurve:
    """Cumulative share of flow carried by the top-``r`` labels.

    ``production`` ranks labels by out-strength, ``absorption`` by
    in-strength; self-loops are ignored unless ``include_self_loops``.
    """
    check_choice(direction, "direction", ("production", "absorption"))
    check_probability(threshold, "threshold", open_left=True)
    strength = (net.out_strength if direction == "production" else net.in_strength)(include_self_loops)
    ranked = sorted(strength.items(), key=lambda kv: (-kv[1], kv[0]))
    ranked = [kv for kv in ranked if kv[1] > 0]
    labels = [k for k, _ in ranked]
    s = np.array([v for _, v in ranked], dtype=float)
    cum = np.cumsum(s) / s.sum() if s.size else s
    return HierarchyCurve(direction, threshold, labels, s, cum)


def elite_series(graph: GenealogyGraph, attribute: str, windows: TimeWindowing,
                 direction: str = "production", threshold: float = 0.8,
                 include_self_loops: bool = False) -> list[dict]:
    """Elite size and elite fraction of active labels, per window."""
    rows = []
    for net in windowed_networks(graph, attribute, windows):
        curve = hierarchy_curve(net, direction, threshold, include_self_loops)
        n = len(curve.labels)
        rows.append({"window_start": net.window[0], "active": n, "elite_size": curve.elite_size,
                     "elite_fraction": curve.elite_size / n if n else float("nan")})
    return rows


# -- centralities and communities ------------------------------------------------

def centralities(net: MesoNetwork) -> list[dict]:
    """Weighted strengths and shortest-path betweenness (edge length ``1/weight``)."""
    g = nx.DiGraph()
    g.add_nodes_from(net.labels)
    for (a, b), w in net.weights.items():
        if a != b and w > 0:
            g.add_edge(a, b, length=1.0 / w)
    bc = nx.betweenness_centrality(g, weight="length", normalized=False)
    out_s, in_s = net.out_strength(), net.in_strength()
    self_w = {lab: net.weights.get((lab, lab), 0) for lab in net.labels}
    return [{"label": lab, "in_strength": in_s[lab], "out_strength": out_s[lab],
             "self_loop": self_w[lab], "betweenness": bc[lab]} for lab in net.labels]


@dataclass
class Partition:
    """Community id per network node."""

    assignment: dict[str, int]
    modularity: float = float("nan")

    @property
    def n_communities(self) -> int:
        return len(set(self.assignment.values()))

    def communities(self) -> list[list[str]]:
        groups = defaultdict(list)
        for lab, c in self.assignment.items():
            groups[c].append(lab)
        return [sorted(groups[c]) for c in sorted(groups)]

    @classmethod
    def from_communities(cls, communities, modularity=float("nan")) -> "Partition":
        blocks = sorted((sorted(c) for c in communities), key=lambda c: c[0])
        return cls({lab: k for k, c in enumerate(blocks) for lab in c}, modularity)


def symmetrized(net: MesoNetwork) -> nx.Graph:
    g = nx.Graph()
    g.add_nodes_from(net.labels)
    for (a, b), w in net.weights.items():
        prev = g[a][b]["weight"] if g.has_edge(a, b) else 0.0
        # (w + w^T) / 2, self-loops kept
        g.add_edge(a, b, weight=prev + (w if a == b else w / 2.0))
    return g


def detect_communities(net: MesoNetwork, seed: int = 0, resolution: float = 1.0) -> Partition:
    """Louvain modularity maximization on the symmetrized weighted network."""
    seed = check_seed(seed)
    if not net.weights:
        raise ValueError("cannot detect communities on an empty network")
    g = symmetrized(net)
    comms = nx.community.louvain_communities(g, weight="weight", resolution=resolution, seed=seed)
    q = nx.community.modularity(g, comms, weight="weight", resolution=resolution)
    return Partition.from_communities(comms, q)


def _entropy(counts) -> float:
    counts = np.asarray(counts, dtype=float)
    p = counts[counts > 0] / counts.sum()
    return float(-(p * np.log(p)).sum())


def partition_nmi(p1, p2) -> float:
    """Normalized mutual information ``2 I / (H1 + H2)`` on the shared labels."""
    a = p1.assignment if isinstance(p1, Partition) else dict(p1)
    b = p2.assignment if isinstance(p2, Partition) else dict(p2)
    common = sorted(a.keys() & b.keys())
    if not common:
        return float("nan")
    joint = Counter((a[x], b[x]) for x in common)
    ca = Counter(a[x] for x in common)
    cb = Counter(b[x] for x in common)
    n = len(common)
    h1, h2 = _entropy(list(ca.values())), _entropy(list(cb.values()))
    if h1 + h2 == 0:
        return 1.0
    mi = 0.0
    for (i, j), nij in joint.items():
        mi += nij / n * math.log(nij * n / (ca[i] * cb[j]))
    return float(min(max(2.0 * mi / (h1 + h2), 0.0), 1.0))


@dataclass
class NMISeries:
    window_starts: list[int]
    values: np.ndarray
    low_data: list[bool]
    partitions: list[Partition | None]


def nmi_series(graph: GenealogyGraph, attribute: str, windows: TimeWindowing, seed: int = 0,
               low_data_fraction: float = 0.05) -> NMISeries:
    """NMI between community partitions of consecutive windowed networks.

    A comparison is flagged ``low_data`` when either window holds fewer
    links than ``low_data_fraction`` of the mean per-window link count.
    """
    seed = check_seed(seed)
    nets = windowed_networks(graph, attribute, windows)
    sizes = np.array([n.total_weight for n in nets], dtype=float)
    mean = sizes.mean() if sizes.size else 0.0
    parts = [detect_communities(n, seed) if n.weights else None for n in nets]
    values, flags = [], []
    for k in range(len(nets) - 1):
        p, q = parts[k], parts[k + 1]
        values.append(partition_nmi(p, q) if p is not None and q is not None else float("nan"))
        flags.append(bool(min(sizes[k], sizes[k + 1]) < low_data_fraction * mean))
    return NMISeries(windows.starts, np.array(values), flags, parts)
