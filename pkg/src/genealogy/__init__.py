"""Analysis toolkit for academic advisor genealogies."""
from .core import (AdvisorEdge, CorpusError, CountTable, CycleError, DisciplineProvenance,
                   GenealogyGraph, Scholar, TimeWindowing, YearProvenance, emit_corpus,
                   ingest_corpus, window_counts)

__version__ = "0.1.0"

__all__ = [
    "AdvisorEdge", "CorpusError", "CountTable", "CycleError", "DisciplineProvenance",
    "GenealogyGraph", "Scholar", "TimeWindowing", "YearProvenance", "emit_corpus",
    "ingest_corpus", "window_counts",
]
