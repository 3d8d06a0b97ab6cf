"""Date repair and title-based discipline inference.

Two enrichment steps run before any analysis:

* :class:`DateRepairer` learns the empirical mentor/student and sibling year
  gaps from trustworthy pairs, then re-dates scholars whose year is missing
  or contradicts the advisor relation.
* :class:`KeywordDisciplineClassifier` is a multinomial keyword model over
  thesis titles used to label scholars that carry a title but no discipline.
"""
from __future__ import annotations

import logging
import math
import re
from collections import Counter, defaultdict
from dataclasses import dataclass, field, replace

import numpy as np
from sklearn.base import BaseEstimator, ClassifierMixin, TransformerMixin
from sklearn.utils.validation import check_is_fitted

from .core import DisciplineProvenance, GenealogyGraph, YearProvenance
from .validation import check_graph, check_positive_int, check_seed

logger = logging.getLogger(__name__)

INF = math.inf


# -- date violations -------------------------------------------------------------

@dataclass
class DateViolations:
    edges: list[tuple[int, int]]
    n_dated_edges: int

    @property
    def rate(self) -> float:
        return len(self.edges) / self.n_dated_edges if self.n_dated_edges else 0.0

    def __len__(self):
        return len(self.edges)

    def __iter__(self):
        return iter(self.edges)


def detect_date_violations(graph: GenealogyGraph) -> DateViolations:
    """Advisor edges whose mentor defended strictly after the student."""
    check_graph(graph)
    sch = graph.scholars
    bad, dated = [], 0
    for m, s in graph.edges:
        ym, ys = sch[m].year, sch[s].year
        if ym is None or ys is None:
            continue
        dated += 1
        if ym > ys:
            bad.append((m, s))
    return DateViolations(bad, dated)


# -- gap model -------------------------------------------------------------------

class EmptyGapModelError(ValueError):
    pass


@dataclass
class GapModel:
    """Empirical year-gap histograms (value -> count)."""

    mentor_student_gaps: dict[int, int] = field(default_factory=dict)
    sibling_gaps: dict[int, int] = field(default_factory=dict)

    @classmethod
    def from_graph(cls, graph: GenealogyGraph) -> "GapModel":
        sch = graph.scholars

        def trusted(i):
            s = sch[i]
            return s.year is not None and s.year_provenance is YearProvenance.ORIGINAL

        ms = Counter()
        students = defaultdict(list)
        for m, s in graph.edges:
            if trusted(m) and trusted(s) and sch[s].year > sch[m].year:
                ms[sch[s].year - sch[m].year] += 1
                students[m].append(sch[s].year)
        sib = Counter()
        for years in students.values():
            years.sort()
            for a in range(len(years)):
                for b in range(a + 1, len(years)):
                    sib[years[b] - years[a]] += 1
        return cls(dict(sorted(ms.items())), dict(sorted(sib.items())))

    @property
    def is_empty(self) -> bool:
        return not self.mentor_student_gaps

    def median_gap(self) -> int:
        values = np.repeat(list(self.mentor_student_gaps), list(self.mentor_student_gaps.values()))
        return int(np.median(values))

    def sample(self, rng, kind: str, lo: float, hi: float) -> int | None:
        """Draw a gap from one histogram restricted to ``[lo, hi]``; None if empty."""
        hist = self.mentor_student_gaps if kind == "mentor" else self.sibling_gaps
        if not hist:
            return None
        values = np.fromiter(hist, dtype=np.int64)
        counts = np.fromiter(hist.values(), dtype=float)
        mask = (values >= lo) & (values <= hi)
        if not mask.any():
            return None
        p = counts[mask] / counts[mask].sum()
        return int(rng.choice(values[mask], p=p))


# -- date repair -----------------------------------------------------------------

@dataclass
class DateRepairResult:
    graph: GenealogyGraph
    repaired: list[int]
    imputed: list[int]
    unresolved: list[int]
    iterations: int

    @property
    def converged(self) -> bool:
        return not self.unresolved

    def report(self) -> dict:
        return {
            "repaired": len(self.repaired),
            "imputed": len(self.imputed),
            "unresolved": len(self.unresolved),
            "iterations": self.iterations,
            "converged": self.converged,
        }


def _blame_violations(graph: GenealogyGraph, years: dict[int, int]) -> set[int]:
    """Greedy minimal set of scholars whose year explains every direct violation."""
    viol = [(m, s) for m, s in graph.edges
            if m in years and s in years and years[m] > years[s]]
    blamed: set[int] = set()
    while viol:
        count = Counter()
        for m, s in viol:
            count[m] += 1
            count[s] += 1
        # most violations first; on ties blame the student (the later record)
        students = {s for _, s in viol}
        node = max(count, key=lambda i: (count[i], i in students, i))
        blamed.add(node)
        viol = [(m, s) for m, s in viol if m != node and s != node]
    return blamed


def repair_dates(graph: GenealogyGraph, model: GapModel | None = None, seed: int = 0,
                 max_iter: int = 10) -> DateRepairResult:
    """Re-date scholars so that every advisor precedes their students.

    Scholars with a missing year are imputed; scholars whose original year
    contradicts the advisor relation are re-sampled. Nodes are swept in
    topological order; each gets a year inside the interval allowed by its
    dated advisors and students, drawn from the gap histograms of ``model``.

    Parameters
    ----------
    graph : GenealogyGraph
    model : GapModel, optional
        Built from ``graph`` when omitted.
    seed : int
    max_iter : int
        Maximum number of sweeps; nodes without any dated relative after the
        last sweep are reported as unresolved.

    Returns
    -------
    DateRepairResult
    """
    check_graph(graph)
    seed = check_seed(seed)
    max_iter = check_positive_int(max_iter, "max_iter")
    if model is None:
        model = GapModel.from_graph(graph)
    if model.is_empty:
        raise EmptyGapModelError("gap model has no mentor-student pairs to learn from")
    rng = np.random.default_rng(seed)
    sch = graph.scholars
    topo = graph.topological_order()
    parents, children = graph.parents, graph.children

    years = {i: s.year for i, s in sch.items() if s.year is not None}
    blamed = _blame_violations(graph, years)
    for i in blamed:
        del years[i]

    # indirect contradictions: a dated scholar earlier than a dated ancestor
    # reached only through undated intermediates
    anc = {}
    for x in topo:
        best = -INF
        for p in parents(x):
            best = max(best, years[p] if p in years else anc[p])
        anc[x] = best
        if x in years and years[x] < best:
            del years[x]
            blamed.add(x)

    pending = [i for i in topo if i not in years]
    median = model.median_gap()
    iterations = 0
    for iterations in range(1, max_iter + 1):
        if not pending:
            iterations -= 1
            break
        hi_s, hi_r = {}, {}
        for x in reversed(topo):
            bs = br = INF
            for c in children(x):
                if c in years:
                    bs = min(bs, years[c] - 1)
                    br = min(br, years[c])
                else:
                    bs = min(bs, hi_s[c] - 1)
                    br = min(br, hi_r[c])
            hi_s[x], hi_r[x] = bs, br
        lo_s, lo_r = {}, {}
        pending_set = set(pending)
        progressed = False
        for x in topo:
            bs = br = -INF
            dated_parents = []
            for p in parents(x):
                if p in years:
                    bs = max(bs, years[p] + 1)
                    br = max(br, years[p])
                    dated_parents.append(years[p])
                else:
                    bs = max(bs, lo_s[p] + 1)
                    br = max(br, lo_r[p])
            lo_s[x], lo_r[x] = bs, br
            if x not in pending_set:
                continue
            lo, hi = bs, hi_s[x]
            if lo > hi:
                lo, hi = br, hi_r[x]
            value = _draw_year(rng, model, median, x, lo, hi, dated_parents, graph, years)
            if value is None:
                continue
            years[x] = value
            pending_set.discard(x)
            progressed = True
        pending = [i for i in pending if i in pending_set]
        if not progressed:
            break

    unresolved = sorted(pending)
    updates = {}
    repaired, imputed = [], []
    for i, s in sch.items():
        if i in years and years[i] != s.year or (i in blamed and i in years):
            if s.year is None:
                prov = YearProvenance.IMPUTED
                imputed.append(i)
            else:
                prov = YearProvenance.REPAIRED
                repaired.append(i)
            updates[i] = replace(s, year=years[i], year_provenance=prov)
        elif i in blamed:
            # contradictory original year with no information to replace it
            updates[i] = replace(s, year=None, year_provenance=YearProvenance.REPAIRED)
            repaired.append(i)
    if unresolved:
        logger.warning("date repair left %d scholars unresolved after %d sweeps",
                       len(unresolved), iterations)
    return DateRepairResult(graph.with_scholars(updates), sorted(repaired), sorted(imputed),
                            unresolved, iterations)


def _draw_year(rng, model, median, x, lo, hi, dated_parents, graph, years):
    if dated_parents:
        base = max(dated_parents)
        g = model.sample(rng, "mentor", lo - base, hi - base)
        return base + g if g is not None else _midpoint(lo, hi, base + median)
    dated_children = [years[c] for c in graph.children(x) if c in years]
    if dated_children:
        base = min(dated_children)
        g = model.sample(rng, "mentor", base - hi, base - lo)
        return base - g if g is not None else _midpoint(lo, hi, base - median)
    siblings = sorted({years[c] for p in graph.parents(x) for c in graph.children(p)
                       if c != x and c in years})
    if siblings:
        base = siblings[int(rng.integers(len(siblings)))]
        sign = 1 if rng.random() < 0.5 else -1
        g = model.sample(rng, "sibling", *sorted(((lo - base) * sign, (hi - base) * sign)))
        return base + sign * g if g is not None else _midpoint(lo, hi, base)
    if lo > -INF:
        base = lo - 1
        g = model.sample(rng, "mentor", 1, hi - base)
        return base + g if g is not None else _midpoint(lo, hi, base + median)
    if hi < INF:
        base = hi + 1
        g = model.sample(rng, "mentor", 1, base - lo)
        return base - g if g is not None else _midpoint(lo, hi, base - median)
    return None


def _midpoint(lo, hi, fallback):
    if lo > -INF and hi < INF:
        return int((lo + hi) // 2)
    return int(min(max(fallback, lo), hi))


class DateRepairer(BaseEstimator, TransformerMixin):
    """Estimator wrapper: ``fit`` learns the gap model, ``transform`` re-dates.

    Parameters
    ----------
    seed : int, default=0
    max_iter : int, default=10
    """

    def __init__(self, seed: int = 0, max_iter: int = 10):
        self.seed = seed
        self.max_iter = max_iter

    def fit(self, graph, y=None):
        check_graph(graph)
        self.gap_model_ = GapModel.from_graph(graph)
        if self.gap_model_.is_empty:
            raise EmptyGapModelError("gap model has no mentor-student pairs to learn from")
        return self

    def transform(self, graph):
        check_is_fitted(self, "gap_model_")
        self.result_ = repair_dates(graph, self.gap_model_, self.seed, self.max_iter)
        return self.result_.graph


# -- discipline inference ---------------------------------------------------------

STOPWORDS = frozenset("""
a about above after again against all also among an and any are around as at be
because been before being below between both but by can could did do does doing
down during each few for from further had has have having here how into its
itself more most new not now of off on once one only onto or other our out over
own same several should some such than that the their them then there these they
this those through thus to toward towards two under until upon use using very via
was were what when where which while who whom why will with within without would
study studies contribution contributions note notes remarks certain various
some concerning regarding thesis dissertation part
""".split())

_TOKEN_SPLIT = re.compile(r"[^0-9a-z]+")


def tokenize(title: str | None, min_length: int = 3) -> list[str]:
    """Split on non-alphanumerics, fold case, drop short tokens and stopwords."""
    if not title:
        return []
    return [t for t in _TOKEN_SPLIT.split(title.casefold())
            if len(t) >= min_length and t not in STOPWORDS]


def ascii_letter_fraction(title: str) -> float:
    letters = [c for c in title if c.isalpha()]
    if not letters:
        return 0.0
    return sum(c.isascii() for c in letters) / len(letters)


@dataclass
class KeywordModel:
    """Smoothed per-discipline token log-probabilities and class priors."""

    classes: list[str]
    token_scores: dict[str, dict[str, float]]
    discipline_priors: dict[str, float]
    alpha: float = 1.0

    @property
    def vocabulary(self) -> set[str]:
        return set(self.token_scores)

    def log_scores(self, tokens: list[str]) -> np.ndarray | None:
        """Unnormalized log-posterior per class, or None if no token is known."""
        known = [t for t in tokens if t in self.token_scores]
        if not known:
            return None
        out = np.log([self.discipline_priors[c] for c in self.classes])
        for t in known:
            row = self.token_scores[t]
            out = out + np.array([row[c] for c in self.classes])
        return out

    def main_keyword(self, tokens: list[str], discipline: str) -> str | None:
        """Token most indicative of ``discipline`` against the class average."""
        best, best_score = None, -INF
        for t in tokens:
            row = self.token_scores.get(t)
            if row is None:
                continue
            score = row[discipline] - np.mean(list(row.values()))
            if score > best_score:
                best, best_score = t, score
        return best


def fit_keyword_model(titles, labels, alpha: float = 1.0, min_length: int = 3) -> KeywordModel:
    if alpha <= 0:
        raise ValueError("alpha must be positive")
    per_class = defaultdict(Counter)
    n_docs = Counter()
    for title, label in zip(titles, labels):
        n_docs[label] += 1
        per_class[label].update(tokenize(title, min_length))
    if not n_docs:
        raise ValueError("no labeled titles to learn from")
    classes = sorted(n_docs)
    vocab = sorted(set().union(*(c.keys() for c in per_class.values())))
    total = sum(n_docs.values())
    priors = {c: n_docs[c] / total for c in classes}
    denom = {c: sum(per_class[c].values()) + alpha * len(vocab) for c in classes}
    scores = {t: {c: math.log((per_class[c][t] + alpha) / denom[c]) for c in classes}
              for t in vocab}
    return KeywordModel(classes, scores, priors, alpha)


class KeywordDisciplineClassifier(BaseEstimator, ClassifierMixin):
    """Multinomial keyword classifier from thesis titles to disciplines.

    Titles are tokenized with :func:`tokenize`; class-conditional token
    probabilities use additive smoothing. A title is assigned its best class
    only when the log-score margin over the runner-up exceeds ``min_margin``;
    otherwise (or when no token is known) the prediction is ``None``.
    """

    def __init__(self, alpha: float = 1.0, min_margin: float = 0.0, min_token_length: int = 3,
                 skip_untranslatable: bool = False):
        self.alpha = alpha
        self.min_margin = min_margin
        self.min_token_length = min_token_length
        self.skip_untranslatable = skip_untranslatable

    def fit(self, X, y):
        X, y = list(X), list(y)
        if len(X) != len(y):
            raise ValueError("X and y have different lengths")
        pairs = [(t, c) for t, c in zip(X, y) if t and c is not None and self._usable(t)]
        if not pairs:
            raise ValueError("no labeled titles to learn from")
        self.model_ = fit_keyword_model(*zip(*pairs), alpha=self.alpha,
                                        min_length=self.min_token_length)
        self.classes_ = np.array(self.model_.classes, dtype=object)
        return self

    def _usable(self, title):
        return not self.skip_untranslatable or ascii_letter_fraction(title) >= 0.3

    @classmethod
    def from_model(cls, model: KeywordModel, **params) -> "KeywordDisciplineClassifier":
        clf = cls(alpha=model.alpha, **params)
        clf.model_ = model
        clf.classes_ = np.array(model.classes, dtype=object)
        return clf

    def decision_function(self, X) -> np.ndarray:
        """Log-scores, shape (n_titles, n_classes); rows of NaN for empty evidence."""
        check_is_fitted(self, "model_")
        X = list(X)
        out = np.full((len(X), len(self.classes_)), np.nan)
        for i, title in enumerate(X):
            if not title or not self._usable(title):
                continue
            s = self.model_.log_scores(tokenize(title, self.min_token_length))
            if s is not None:
                out[i] = s
        return out

    def predict_log_proba(self, X) -> np.ndarray:
        s = self.decision_function(X)
        return s - np.logaddexp.reduce(s, axis=1, keepdims=True)

    def predict(self, X) -> np.ndarray:
        scores = self.decision_function(X)
        out = np.empty(len(scores), dtype=object)
        for i, row in enumerate(scores):
            out[i] = None
            if np.isnan(row).any():
                continue
            order = np.argsort(-row, kind="stable")
            margin = INF if len(row) == 1 else row[order[0]] - row[order[1]]
            if margin > self.min_margin:
                out[i] = self.classes_[order[0]]
        return out


def train_keyword_model(graph: GenealogyGraph, alpha: float = 1.0) -> KeywordModel:
    """Fit a keyword model on scholars holding both a title and an original discipline."""
    check_graph(graph)
    titles, labels = [], []
    for s in graph.scholars.values():
        if (s.thesis_title and s.discipline is not None
                and s.discipline_provenance is DisciplineProvenance.ORIGINAL):
            titles.append(s.thesis_title)
            labels.append(s.discipline)
    if not titles:
        raise ValueError("no labeled titles to learn from")
    return fit_keyword_model(titles, labels, alpha=alpha)


def infer_disciplines(graph: GenealogyGraph, model: KeywordModel, min_margin: float = 0.0,
                      skip_untranslatable: bool = False) -> GenealogyGraph:
    """Label untagged scholars from their thesis title; tagged scholars are untouched."""
    check_graph(graph)
    clf = KeywordDisciplineClassifier.from_model(model, min_margin=min_margin,
                                                 skip_untranslatable=skip_untranslatable)
    todo = [s for s in graph.scholars.values() if s.discipline is None and s.thesis_title]
    if not todo:
        return graph
    pred = clf.predict([s.thesis_title for s in todo])
    updates = {s.id: replace(s, discipline=label, discipline_provenance=DisciplineProvenance.INFERRED)
               for s, label in zip(todo, pred) if label is not None}
    return graph.with_scholars(updates)


def provenance_report(graph: GenealogyGraph) -> dict:
    sch = graph.scholars.values()
    n = len(graph)
    with_disc = sum(s.discipline is not None for s in sch)
    return {
        "year": {p.value: sum(s.year is not None and s.year_provenance is p for s in sch)
                 for p in YearProvenance} | {"missing": sum(s.year is None for s in sch)},
        "discipline": {p.value: sum(s.discipline is not None and s.discipline_provenance is p
                                    for s in sch) for p in DisciplineProvenance}
                      | {"missing": n - with_disc},
        "discipline_coverage": with_disc / n if n else 0.0,
    }
