"""Iso-discipline chain census.

An iso-discipline chain of length ``n`` is a directed advisor path with
``n`` links whose ``n + 1`` scholars all share a discipline. The census
counts every such path (maximal or not) over the full advisor DAG and the
probability that a chain of length ``n`` is continued by at least one
student in the same discipline.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy import sparse
from scipy.stats import linregress

from .core import GenealogyGraph
from .validation import check_choice, check_graph


@dataclass
class ChainCensus:
    """Per-scope counts ``C(n)`` and conditional extension probabilities.

    ``counts[d][n]`` is ``C(n)`` for discipline ``d`` (``"*"`` for the
    aggregate); ``extension[d][n]`` is ``P(n+1 | n)``. ``n = 0`` holds the
    share of advisor links whose two ends share a discipline.
    """

    mode: str
    counts: dict[str, list[int]] = field(default_factory=dict)
    extension: dict[str, list[float]] = field(default_factory=dict)

    def rows(self) -> list[dict]:
        out = []
        for d in self.counts:
            for n, (c, p) in enumerate(zip(self.counts[d], self.extension[d])):
                out.append({"discipline": d, "n": n, "count": c, "p_next": p})
        return out

    def slope(self, scope: str = "*", n_min: int = 1, n_max: int = 6):
        """Least-squares slope of ``P(n+1|n)`` over ``n_min..n_max`` (scipy ``linregress``)."""
        ns = [n for n in range(n_min, n_max + 1)
              if n < len(self.extension[scope]) and np.isfinite(self.extension[scope][n])]
        if len(ns) < 3:
            raise ValueError("not enough chain lengths to fit a slope")
        return linregress(ns, [self.extension[scope][n] for n in ns])


def _census(adj: sparse.csr_matrix, has_iso_child: np.ndarray, start: np.ndarray, mode: str):
    """Path counts by length from per-node start vector along ``adj`` (mentor -> student)."""
    counts, ext = [], []
    c = start.astype(np.float64)
    adj_t = adj.T.tocsr()
    while True:
        total = c.sum()
        if total == 0:
            break
        counts.append(int(round(total)))
        nxt = adj_t @ c
        if mode == "prefix":
            ext.append(float(c[has_iso_child].sum() / total))
        else:
            ext.append(float(nxt.sum() / total))
        c = nxt
    return counts, ext


def chain_census(graph: GenealogyGraph, scope: str = "aggregate", mode: str = "prefix") -> ChainCensus:
    """Count iso-discipline chains by length.

    Parameters
    ----------
    graph : GenealogyGraph
    scope : {'aggregate', 'per-discipline'}
        ``per-discipline`` adds one entry per discipline next to ``"*"``.
    mode : {'prefix', 'pathcount'}
        ``prefix``: a chain counts as extended when any student continues it.
        ``pathcount``: raw ratio ``C(n+1) / C(n)``.
    """
    check_graph(graph)
    check_choice(scope, "scope", ("aggregate", "per-discipline"))
    check_choice(mode, "mode", ("prefix", "pathcount"))
    disc = graph.attribute_values("discipline")
    if all(d is None for d in disc):
        raise ValueError("no disciplines assigned")
    labels = sorted({d for d in disc if d is not None})
    code = {d: k for k, d in enumerate(labels)}
    dcode = np.array([code[d] if d is not None else -1 for d in disc], dtype=np.int64)
    n = len(disc)
    e = graph.edge_index
    known = (dcode[e[:, 0]] >= 0) & (dcode[e[:, 1]] >= 0) if len(e) else np.zeros(0, bool)
    iso = known & (dcode[e[:, 0]] == dcode[e[:, 1]]) if len(e) else known
    ie = e[iso]
    adj = sparse.csr_matrix((np.ones(len(ie)), (ie[:, 0], ie[:, 1])), shape=(n, n))
    has_child = np.zeros(n, dtype=bool)
    has_child[ie[:, 0]] = True

    def one(mask_nodes, mask_edges):
        edge_share = float(iso[mask_edges].sum() / mask_edges.sum()) if mask_edges.sum() else float("nan")
        counts, ext = _census(adj, has_child, mask_nodes, mode)
        if not counts:
            return [0], [edge_share]
        # n = 0 is reported as the share of iso links among links with two known disciplines
        return counts, [edge_share] + ext[1:]

    census = ChainCensus(mode)
    census.counts["*"], census.extension["*"] = one(dcode >= 0, known)
    if scope == "per-discipline":
        src_code = dcode[e[:, 0]] if len(e) else np.zeros(0, np.int64)
        for d in labels:
            k = code[d]
            census.counts[d], census.extension[d] = one(dcode == k, known & (src_code == k))
    return census
