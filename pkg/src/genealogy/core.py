"""Domain model, corpus ingestion and time windowing for advisor genealogies."""
from __future__ import annotations

import csv
import datetime
import json
import logging
from collections import Counter, defaultdict
from dataclasses import dataclass
from enum import Enum
from functools import cached_property
from pathlib import Path
from types import MappingProxyType
from typing import Iterable, Mapping

import numpy as np

logger = logging.getLogger(__name__)

ATTRIBUTES = ("country", "discipline", "university")
CORPUS_FIELDS = ("id", "name", "year", "country", "university", "discipline", "title", "advisors")
DEFAULT_MIN_YEAR = 1300


class CorpusError(ValueError):
    """Raised when a corpus violates the input schema or graph constraints."""

    def __init__(self, message: str, line: int | None = None, field_name: str | None = None):
        self.line = line
        self.field_name = field_name
        where = []
        if line is not None:
            where.append(f"line {line}")
        if field_name is not None:
            where.append(f"field {field_name!r}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


class CycleError(CorpusError):
    def __init__(self, cycle: list[int]):
        self.cycle = cycle
        super().__init__("cycle detected: " + " -> ".join(map(str, cycle)))


class YearProvenance(str, Enum):
    ORIGINAL = "original"
    REPAIRED = "repaired"
    IMPUTED = "imputed"


class DisciplineProvenance(str, Enum):
    ORIGINAL = "original"
    INFERRED = "inferred"


def normalize_label(value) -> str | None:
    """Trim and case-fold an attribute label; empty strings become None."""
    if value is None:
        return None
    value = str(value).strip().casefold()
    return value or None


@dataclass(frozen=True)
class Scholar:
    id: int
    name: str = ""
    year: int | None = None
    country: str | None = None
    university: str | None = None
    discipline: str | None = None
    thesis_title: str | None = None
    year_provenance: YearProvenance = YearProvenance.ORIGINAL
    discipline_provenance: DisciplineProvenance = DisciplineProvenance.ORIGINAL

    def attribute(self, name: str):
        if name not in ATTRIBUTES:
            raise ValueError(f"unknown attribute {name!r}; expected one of {ATTRIBUTES}")
        return getattr(self, name)


@dataclass(frozen=True, order=True)
class AdvisorEdge:
    mentor_id: int
    student_id: int


class GenealogyGraph:
    """Immutable advisor -> student DAG over scholars.

    Students may have several advisors (parallel in-edges); the graph is
    validated to be acyclic at construction.

    Parameters
    ----------
    scholars : iterable of Scholar
    edges : iterable of (mentor_id, student_id) pairs or AdvisorEdge
    """

    def __init__(self, scholars: Iterable[Scholar], edges: Iterable = ()):
        table: dict[int, Scholar] = {}
        for s in scholars:
            if s.id in table:
                raise CorpusError(f"duplicate id {s.id}")
            table[s.id] = s
        self._scholars = dict(sorted(table.items()))

        seen = set()
        for e in edges:
            m, s = (e.mentor_id, e.student_id) if isinstance(e, AdvisorEdge) else (int(e[0]), int(e[1]))
            if m == s:
                raise CorpusError(f"self-loop edge on scholar {m}")
            if m not in self._scholars or s not in self._scholars:
                raise CorpusError(f"edge {m}->{s} references an unknown scholar")
            if (m, s) in seen:
                raise CorpusError(f"duplicate edge {m}->{s}")
            seen.add((m, s))
        self._edges = tuple(sorted(seen))

        children = defaultdict(list)
        parents = defaultdict(list)
        for m, s in self._edges:
            children[m].append(s)
            parents[s].append(m)
        self._children = {k: tuple(v) for k, v in children.items()}
        self._parents = {k: tuple(v) for k, v in parents.items()}
        self._topo = self._toposort()

    def _toposort(self) -> tuple[int, ...]:
        indeg = {k: len(v) for k, v in self._parents.items()}
        stack = [i for i in reversed(self._scholars) if i not in indeg]
        order = []
        while stack:
            u = stack.pop()
            order.append(u)
            for v in reversed(self._children.get(u, ())):
                indeg[v] -= 1
                if indeg[v] == 0:
                    stack.append(v)
        if len(order) != len(self._scholars):
            raise CycleError(self._find_cycle(set(self._scholars) - set(order)))
        return tuple(order)

    def _find_cycle(self, candidates: set[int]) -> list[int]:
        # every node left over by Kahn's algorithm has a parent among the leftovers
        start = min(candidates)
        path, pos = [], {}
        u = start
        while u not in pos:
            pos[u] = len(path)
            path.append(u)
            u = min(p for p in self._parents[u] if p in candidates)
        cycle = path[pos[u]:]
        cycle.reverse()
        return cycle + [cycle[0]]

    # -- accessors -------------------------------------------------------
    @property
    def scholars(self) -> Mapping[int, Scholar]:
        return MappingProxyType(self._scholars)

    @property
    def edges(self) -> tuple[tuple[int, int], ...]:
        return self._edges

    def __len__(self) -> int:
        return len(self._scholars)

    def __contains__(self, scholar_id) -> bool:
        return scholar_id in self._scholars

    def __getitem__(self, scholar_id: int) -> Scholar:
        return self._scholars[scholar_id]

    def __eq__(self, other) -> bool:
        if not isinstance(other, GenealogyGraph):
            return NotImplemented
        return self._scholars == other._scholars and self._edges == other._edges

    def __repr__(self) -> str:
        return f"GenealogyGraph(n_scholars={len(self)}, n_edges={len(self._edges)})"

    def children(self, scholar_id: int) -> tuple[int, ...]:
        return self._children.get(scholar_id, ())

    def parents(self, scholar_id: int) -> tuple[int, ...]:
        return self._parents.get(scholar_id, ())

    def topological_order(self) -> tuple[int, ...]:
        return self._topo

    def isolated(self) -> list[int]:
        """Scholars with neither advisors nor students."""
        return [i for i in self._scholars if i not in self._children and i not in self._parents]

    def non_isolated(self) -> list[int]:
        return [i for i in self._scholars if i in self._children or i in self._parents]

    @cached_property
    def ids(self) -> np.ndarray:
        return np.fromiter(self._scholars, dtype=np.int64, count=len(self._scholars))

    @cached_property
    def index(self) -> dict[int, int]:
        return {sid: k for k, sid in enumerate(self._scholars)}

    @cached_property
    def edge_index(self) -> np.ndarray:
        """(n_edges, 2) array of positional indices into ``ids``."""
        idx = self.index
        out = np.empty((len(self._edges), 2), dtype=np.int64)
        for k, (m, s) in enumerate(self._edges):
            out[k, 0] = idx[m]
            out[k, 1] = idx[s]
        return out

    def attribute_values(self, attribute: str) -> list:
        """Attribute value per scholar in ``ids`` order."""
        if attribute not in ATTRIBUTES:
            raise ValueError(f"unknown attribute {attribute!r}; expected one of {ATTRIBUTES}")
        return [getattr(s, attribute) for s in self._scholars.values()]

    def years(self) -> np.ndarray:
        """Float array of years in ``ids`` order, NaN where missing."""
        return np.array([np.nan if s.year is None else s.year for s in self._scholars.values()], dtype=float)

    def with_scholars(self, updates: Mapping[int, Scholar]) -> "GenealogyGraph":
        """Return a copy with some scholar records replaced; edges are kept."""
        if not updates:
            return self
        new = object.__new__(GenealogyGraph)
        new._scholars = {k: updates.get(k, v) for k, v in self._scholars.items()}
        new._edges = self._edges
        new._children = self._children
        new._parents = self._parents
        new._topo = self._topo
        for key in ("ids", "index", "edge_index"):
            if key in self.__dict__:
                new.__dict__[key] = self.__dict__[key]
        return new

    def missing_report(self) -> dict[str, int]:
        return {
            "scholars": len(self._scholars),
            "edges": len(self._edges),
            "isolated": len(self.isolated()),
            "missing_year": sum(s.year is None for s in self._scholars.values()),
            "missing_discipline": sum(s.discipline is None for s in self._scholars.values()),
            "missing_country": sum(s.country is None for s in self._scholars.values()),
        }


# -- time windows --------------------------------------------------------------

@dataclass(frozen=True)
class TimeWindowing:
    """Half-open bins ``[t, t + bin_width)`` covering ``[start_year, end_year]``."""

    start_year: int
    end_year: int
    bin_width: int = 10

    def __post_init__(self):
        if self.bin_width < 1:
            raise ValueError("bin_width must be >= 1")
        if self.end_year < self.start_year:
            raise ValueError("end_year must be >= start_year")

    @classmethod
    def covering(cls, graph: GenealogyGraph, bin_width: int = 10) -> "TimeWindowing":
        """Windows aligned on multiples of ``bin_width`` spanning every dated scholar."""
        years = [s.year for s in graph.scholars.values() if s.year is not None]
        if not years:
            raise ValueError("graph has no dated scholars")
        lo = min(years) // bin_width * bin_width
        return cls(lo, max(years), bin_width)

    @property
    def n_windows(self) -> int:
        return (self.end_year - self.start_year) // self.bin_width + 1

    @property
    def starts(self) -> list[int]:
        return [self.start_year + k * self.bin_width for k in range(self.n_windows)]

    def window_of(self, year) -> int | None:
        if year is None or year < self.start_year or year > self.end_year:
            return None
        return int((year - self.start_year) // self.bin_width)

    def bounds(self, k: int) -> tuple[int, int]:
        t = self.start_year + k * self.bin_width
        return t, t + self.bin_width


@dataclass
class CountTable:
    """Scholar counts ``N_I(t)`` per attribute value and window.

    ``totals`` counts every scholar dated inside a window whatever its
    attribute; ``attributed`` counts only those carrying a value.
    """

    attribute: str
    labels: list[str]
    windows: TimeWindowing
    counts: np.ndarray
    totals: np.ndarray
    excluded: int = 0

    @property
    def attributed(self) -> np.ndarray:
        return self.counts.sum(axis=0)

    def to_rows(self) -> list[dict]:
        rows = []
        for i, label in enumerate(self.labels):
            for k, start in enumerate(self.windows.starts):
                rows.append({"label": label, "window_start": start, "count": int(self.counts[i, k])})
        return rows


def window_counts(graph: GenealogyGraph, attribute: str, windows: TimeWindowing) -> CountTable:
    """Count scholars per attribute value and time window."""
    counter: Counter = Counter()
    totals = np.zeros(windows.n_windows, dtype=np.int64)
    excluded = 0
    for s in graph.scholars.values():
        k = windows.window_of(s.year)
        value = s.attribute(attribute)
        if k is not None:
            totals[k] += 1
        if k is None or value is None:
            excluded += 1
            continue
        counter[value, k] += 1
    labels = sorted({lab for lab, _ in counter})
    pos = {lab: i for i, lab in enumerate(labels)}
    counts = np.zeros((len(labels), windows.n_windows), dtype=np.int64)
    for (lab, k), c in counter.items():
        counts[pos[lab], k] = c
    return CountTable(attribute, labels, windows, counts, totals, excluded)


# -- corpus I/O ----------------------------------------------------------------

def _parse_int(value, line, name, optional=True):
    if value is None or value == "":
        if optional:
            return None
        raise CorpusError("missing required value", line, name)
    if isinstance(value, bool):
        raise CorpusError(f"expected integer, got {value!r}", line, name)
    if isinstance(value, float):
        if not value.is_integer():
            raise CorpusError(f"expected integer, got {value!r}", line, name)
        return int(value)
    try:
        return int(str(value).strip())
    except ValueError:
        raise CorpusError(f"expected integer, got {value!r}", line, name) from None


def _parse_str(value, line, name):
    if value is None:
        return None
    if not isinstance(value, (str, int, float)) or isinstance(value, bool):
        raise CorpusError(f"expected string, got {value!r}", line, name)
    value = str(value)
    return value if value.strip() else None


def _iter_records(path: Path, fmt: str):
    if fmt == "jsonl":
        with open(path, encoding="utf-8") as fh:
            for lineno, raw in enumerate(fh, start=1):
                if not raw.strip():
                    continue
                try:
                    rec = json.loads(raw)
                except json.JSONDecodeError as exc:
                    raise CorpusError(f"invalid JSON: {exc.msg}", lineno) from None
                if not isinstance(rec, dict):
                    raise CorpusError("expected a JSON object", lineno)
                advisors = rec.get("advisors", [])
                if advisors is None:
                    advisors = []
                if not isinstance(advisors, list):
                    raise CorpusError("expected an array of ids", lineno, "advisors")
                rec["advisors"] = advisors
                yield lineno, rec
    elif fmt == "csv":
        with open(path, encoding="utf-8", newline="") as fh:
            reader = csv.DictReader(fh)
            if reader.fieldnames is None or "id" not in reader.fieldnames:
                raise CorpusError("CSV header must contain an 'id' column", 1)
            for rec in reader:
                lineno = reader.line_num
                rec = {k: (v if v != "" else None) for k, v in rec.items()}
                adv = rec.get("advisors")
                rec["advisors"] = [a for a in adv.split(";") if a.strip()] if adv else []
                yield lineno, rec
    else:
        raise ValueError(f"unknown corpus format {fmt!r}")


def infer_format(path) -> str:
    return "csv" if str(path).lower().endswith(".csv") else "jsonl"


def ingest_corpus(
    path,
    format: str | None = None,
    min_year: int = DEFAULT_MIN_YEAR,
    max_year: int | None = None,
) -> GenealogyGraph:
    """Parse and validate a genealogy corpus.

    Parameters
    ----------
    path : str or Path
        A ``.jsonl`` or ``.csv`` file following the corpus schema.
    format : {'jsonl', 'csv'}, optional
        Inferred from the extension when omitted.
    min_year, max_year : int
        Scholars dated outside this range are rejected with a warning,
        together with every advisor link touching them.

    Returns
    -------
    GenealogyGraph

    Raises
    ------
    CorpusError
        On schema violations, self-loops, duplicate ids or edges, unknown
        advisor ids. ``CycleError`` when the advisor relation is cyclic.
    """
    path = Path(path)
    if not path.exists():
        raise FileNotFoundError(f"corpus file not found: {path}")
    fmt = format or infer_format(path)
    max_year = datetime.date.today().year if max_year is None else max_year

    scholars: dict[int, Scholar] = {}
    advisor_refs: list[tuple[int, int, int]] = []
    rejected: set[int] = set()
    for lineno, rec in _iter_records(path, fmt):
        sid = _parse_int(rec.get("id"), lineno, "id", optional=False)
        if sid in scholars or sid in rejected:
            raise CorpusError(f"duplicate id {sid}", lineno, "id")
        year = _parse_int(rec.get("year"), lineno, "year")
        if year is not None and not (min_year <= year <= max_year):
            logger.warning("line %d: scholar %d rejected, year %d outside [%d, %d]",
                           lineno, sid, year, min_year, max_year)
            rejected.add(sid)
            continue
        year_prov = rec.get("year_provenance") or "original"
        disc_prov = rec.get("discipline_provenance") or "original"
        try:
            year_prov = YearProvenance(year_prov)
            disc_prov = DisciplineProvenance(disc_prov)
        except ValueError as exc:
            raise CorpusError(str(exc), lineno) from None
        scholars[sid] = Scholar(
            id=sid,
            name=_parse_str(rec.get("name"), lineno, "name") or "",
            year=year,
            country=normalize_label(_parse_str(rec.get("country"), lineno, "country")),
            university=normalize_label(_parse_str(rec.get("university"), lineno, "university")),
            discipline=normalize_label(_parse_str(rec.get("discipline"), lineno, "discipline")),
            thesis_title=_parse_str(rec.get("title"), lineno, "title"),
            year_provenance=year_prov,
            discipline_provenance=disc_prov,
        )
        for a in rec["advisors"]:
            advisor_refs.append((lineno, _parse_int(a, lineno, "advisors", optional=False), sid))

    edges = []
    seen = set()
    dropped = 0
    for lineno, m, s in advisor_refs:
        if m == s:
            raise CorpusError(f"self-loop edge on scholar {s}", lineno, "advisors")
        if m in rejected or s in rejected:
            dropped += 1
            continue
        if m not in scholars:
            raise CorpusError(f"unknown advisor id {m}", lineno, "advisors")
        if (m, s) in seen:
            raise CorpusError(f"duplicate advisor {m} for scholar {s}", lineno, "advisors")
        seen.add((m, s))
        edges.append((m, s))
    if dropped:
        logger.warning("dropped %d advisor links touching rejected scholars", dropped)

    graph = GenealogyGraph(scholars.values(), edges)
    report = graph.missing_report()
    logger.info("ingested %s: %s", path, report)
    if report["isolated"]:
        logger.info("%d isolated scholars retained (ignored by family analysis)", report["isolated"])
    return graph


def _record(s: Scholar, advisors) -> dict:
    rec = {
        "id": s.id,
        "name": s.name,
        "year": s.year,
        "country": s.country,
        "university": s.university,
        "discipline": s.discipline,
        "title": s.thesis_title,
        "advisors": list(advisors),
    }
    if s.year_provenance is not YearProvenance.ORIGINAL:
        rec["year_provenance"] = s.year_provenance.value
    if s.discipline_provenance is not DisciplineProvenance.ORIGINAL:
        rec["discipline_provenance"] = s.discipline_provenance.value
    return rec


def emit_corpus(graph: GenealogyGraph, path, format: str | None = None) -> Path:
    """Write ``graph`` in the corpus schema; ``ingest_corpus`` reads it back unchanged."""
    path = Path(path)
    fmt = format or infer_format(path)
    records = [_record(s, graph.parents(s.id)) for s in graph.scholars.values()]
    if fmt == "jsonl":
        with open(path, "w", encoding="utf-8", newline="\n") as fh:
            for rec in records:
                fh.write(json.dumps(rec, ensure_ascii=False) + "\n")
    elif fmt == "csv":
        extra = [f for f in ("year_provenance", "discipline_provenance") if any(f in r for r in records)]
        with open(path, "w", encoding="utf-8", newline="") as fh:
            writer = csv.DictWriter(fh, fieldnames=list(CORPUS_FIELDS) + extra, lineterminator="\n")
            writer.writeheader()
            for rec in records:
                rec["advisors"] = ";".join(map(str, rec["advisors"]))
                writer.writerow({k: ("" if v is None else v) for k, v in rec.items()})
    else:
        raise ValueError(f"unknown corpus format {fmt!r}")
    return path


def write_csv(path, rows: list[dict], fieldnames: list[str] | None = None) -> Path:
    """Write dict rows as UTF-8 CSV with ``\\n`` line endings."""
    path = Path(path)
    if fieldnames is None:
        fieldnames = list(rows[0]) if rows else []
    with open(path, "w", encoding="utf-8", newline="") as fh:
        writer = csv.DictWriter(fh, fieldnames=fieldnames, lineterminator="\n")
        writer.writeheader()
        for row in rows:
            writer.writerow({k: _fmt_cell(row.get(k)) for k in fieldnames})
    return path


def _fmt_cell(v):
    if v is None:
        return ""
    if isinstance(v, float):
        if v != v:
            return "nan"
        return repr(round(v, 12))
    return v


__all__ = [
    "AdvisorEdge", "CorpusError", "CountTable", "CycleError", "DisciplineProvenance",
    "GenealogyGraph", "Scholar", "TimeWindowing", "YearProvenance", "emit_corpus",
    "ingest_corpus", "normalize_label", "window_counts", "write_csv",
]
