"""Prevalence profiles, Kolmogorov-Smirnov clustering and ranking drift."""
from __future__ import annotations

import logging
from collections import Counter
from dataclasses import dataclass

import numpy as np
from scipy.cluster.hierarchy import fcluster, linkage, to_tree
from scipy.spatial.distance import squareform
from sklearn.base import BaseEstimator, ClusterMixin
from sklearn.utils.validation import check_is_fitted

from .core import CountTable, GenealogyGraph, TimeWindowing, window_counts
from .validation import check_choice, check_positive_int

logger = logging.getLogger(__name__)

LINKAGES = ("average", "complete", "single")


@dataclass
class Profile:
    """Relative abundance ``f`` of one label per window and its volume-normalized form."""

    label: str
    values: np.ndarray
    normalized: np.ndarray

    @property
    def cdf(self) -> np.ndarray:
        return np.cumsum(self.normalized)


def build_profiles(table: CountTable) -> list[Profile]:
    """``f_I(t) = N_I(t) / N(t)`` over attributed scholars, then ``f / sum_t f``.

    Labels whose profile is identically zero are dropped with a warning.
    """
    counts = np.asarray(table.counts, dtype=float)
    totals = counts.sum(axis=0)
    with np.errstate(invalid="ignore", divide="ignore"):
        f = np.where(totals > 0, counts / np.where(totals > 0, totals, 1), 0.0)
    out = []
    for label, row in zip(table.labels, f):
        volume = row.sum()
        if volume <= 0:
            logger.warning("label %r has an all-zero profile; excluded", label)
            continue
        out.append(Profile(label, row, row / volume))
    return out


def ks_distance(a, b) -> float:
    """Largest gap between the cumulative prevalence curves of two profiles."""
    pa = a.normalized if isinstance(a, Profile) else np.asarray(a, dtype=float)
    pb = b.normalized if isinstance(b, Profile) else np.asarray(b, dtype=float)
    if pa.shape != pb.shape:
        raise ValueError("profiles must share the same window grid")
    return float(np.max(np.abs(np.cumsum(pa) - np.cumsum(pb)))) if pa.size else 0.0


def ks_matrix(profiles: list[Profile]) -> np.ndarray:
    cdf = np.array([p.cdf for p in profiles])
    return np.abs(cdf[:, None, :] - cdf[None, :, :]).max(axis=2)


@dataclass
class Dendrogram:
    """Agglomerative merge tree over profile labels (scipy linkage layout)."""

    labels: list[str]
    linkage_matrix: np.ndarray

    @property
    def heights(self) -> np.ndarray:
        return self.linkage_matrix[:, 2]

    def merges(self) -> list[dict]:
        n = len(self.labels)
        names = list(self.labels)
        out = []
        for k, (a, b, h, size) in enumerate(self.linkage_matrix):
            out.append({"step": k, "left": names[int(a)], "right": names[int(b)],
                        "height": float(h), "size": int(size)})
            names.append(f"cluster{n + k}")
        return out

    def cut(self, n_clusters: int) -> dict[str, int]:
        ids = fcluster(self.linkage_matrix, t=n_clusters, criterion="maxclust")
        # renumber clusters by first appearance in label order
        remap = {}
        for c in ids:
            remap.setdefault(c, len(remap))
        return {lab: remap[c] for lab, c in zip(self.labels, ids)}

    def to_newick(self) -> str:
        root = to_tree(self.linkage_matrix)

        def walk(node, parent_h):
            h = node.dist
            length = max(parent_h - h, 0.0)
            if node.is_leaf():
                text = _newick_name(self.labels[node.id])
            else:
                text = f"({walk(node.left, h)},{walk(node.right, h)})"
            return f"{text}:{length:.6g}"

        return walk(root, root.dist).rsplit(":", 1)[0] + ";"


def _newick_name(label: str) -> str:
    if any(c in label for c in " ():;,[]'"):
        return "'" + label.replace("'", "''") + "'"
    return label


def cluster_profiles(profiles: list[Profile], linkage_method: str = "average") -> Dendrogram:
    """Hierarchical clustering of profiles over their pairwise KS distances."""
    check_choice(linkage_method, "linkage", LINKAGES)
    if len(profiles) < 2:
        raise ValueError("need at least two profiles to cluster")
    d = ks_matrix(profiles)
    z = linkage(squareform(d, checks=False), method=linkage_method)
    return Dendrogram([p.label for p in profiles], z)


@dataclass
class ClusterEnvelope:
    members: list[str]
    mean: np.ndarray
    lower: np.ndarray
    upper: np.ndarray


def cluster_envelopes(profiles: list[Profile], assignment: dict[str, int]) -> dict[int, ClusterEnvelope]:
    """Mean normalized profile per cluster with its min/max band."""
    by_label = {p.label: p for p in profiles}
    groups: dict[int, list[str]] = {}
    for label, c in assignment.items():
        groups.setdefault(c, []).append(label)
    out = {}
    for c, members in sorted(groups.items()):
        stack = np.array([by_label[m].normalized for m in members])
        out[c] = ClusterEnvelope(members, stack.mean(axis=0), stack.min(axis=0), stack.max(axis=0))
    return out


class ProfileClusterer(BaseEstimator, ClusterMixin):
    """KS-distance agglomerative clustering of prevalence profiles.

    Parameters
    ----------
    linkage : {'average', 'complete', 'single'}, default='average'
    n_clusters : int, default=2
        Where the dendrogram is cut to produce ``labels_``.
    """

    def __init__(self, linkage: str = "average", n_clusters: int = 2):
        self.linkage = linkage
        self.n_clusters = n_clusters

    def fit(self, profiles, y=None):
        profiles = list(profiles)
        check_positive_int(self.n_clusters, "n_clusters")
        self.dendrogram_ = cluster_profiles(profiles, self.linkage)
        self.distances_ = ks_matrix(profiles)
        assignment = self.dendrogram_.cut(self.n_clusters)
        self.labels_ = np.array([assignment[p.label] for p in profiles])
        self.envelopes_ = cluster_envelopes(profiles, assignment)
        return self

    def assignment(self) -> dict[str, int]:
        check_is_fitted(self, "dendrogram_")
        return dict(zip(self.dendrogram_.labels, self.labels_.tolist()))


# -- ranked lists ---------------------------------------------------------------

@dataclass(frozen=True)
class RankedList:
    """Labels in rank order; rank ``r`` is position ``r - 1``."""

    labels: tuple[str, ...]
    window: int | None = None

    def __post_init__(self):
        object.__setattr__(self, "labels", tuple(self.labels))
        if len(set(self.labels)) != len(self.labels):
            raise ValueError("ranked labels must be distinct")

    @classmethod
    def from_ranks(cls, ranks: dict[int, str], window=None) -> "RankedList":
        keys = sorted(ranks)
        if keys != list(range(1, len(keys) + 1)):
            raise ValueError("ranks must be consecutive integers starting at 1")
        return cls(tuple(ranks[k] for k in keys), window)

    def __len__(self):
        return len(self.labels)

    def top(self, k: int) -> "RankedList":
        return RankedList(self.labels[:k], self.window)

    def entries(self) -> list[tuple[int, str]]:
        return [(r, lab) for r, lab in enumerate(self.labels, start=1)]


def extended_multiset(r: RankedList) -> Counter:
    """Each label of rank ``r_i`` repeated ``L - r_i + 1`` times."""
    n = len(r)
    return Counter({lab: n - rank + 1 for rank, lab in r.entries()})


def extended_jaccard(r1: RankedList, r2: RankedList) -> float:
    """Multiset Jaccard index of the two extended multisets (1 = same ranking)."""
    a, b = extended_multiset(r1), extended_multiset(r2)
    keys = a.keys() | b.keys()
    union = sum(max(a[k], b[k]) for k in keys)
    if union == 0:
        return 1.0
    return sum(min(a[k], b[k]) for k in keys) / union


def jaccard_distance(r1: RankedList, r2: RankedList) -> float:
    return 1.0 - extended_jaccard(r1, r2)


def top_k_rankings(table: CountTable, k: int = 10) -> list[RankedList]:
    """Per-window ranking of labels by count (ties broken by label)."""
    out = []
    for w in range(table.counts.shape[1]):
        col = table.counts[:, w]
        order = sorted((i for i in range(len(table.labels)) if col[i] > 0),
                       key=lambda i: (-col[i], table.labels[i]))
        out.append(RankedList(tuple(table.labels[i] for i in order[:k]), w))
    return out


def drift_series(rankings: list[RankedList], k: int = 10, baseline: int | None = None) -> np.ndarray:
    """``d_J`` between consecutive windows, or against window ``baseline``."""
    if len(rankings) < 2:
        raise ValueError("need at least two windows")
    k = check_positive_int(k, "k")
    tops = [r.top(k) for r in rankings]
    if baseline is None:
        return np.array([jaccard_distance(a, b) for a, b in zip(tops, tops[1:])])
    return np.array([jaccard_distance(tops[baseline], b) for b in tops])


def ranking_drift(graph: GenealogyGraph, attribute: str, windows: TimeWindowing, k: int = 10,
                  baseline: int | None = None) -> tuple[list[RankedList], np.ndarray]:
    rankings = top_k_rankings(window_counts(graph, attribute, windows), k)
    return rankings, drift_series(rankings, k, baseline)
