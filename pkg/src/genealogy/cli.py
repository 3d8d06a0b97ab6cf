"""Command line front-end.

Every stage reads a corpus, writes its tables into a fresh output directory
and exits with a stage-specific status on failure::

    genealogy pipeline --corpus corpus.jsonl --out runs/a
    genealogy --config run.json families resolve --samples 2000 --out runs/b

Settings come from the JSON file given with ``--config`` and are overridden
by command-line flags. ``GENEALOGY_LOG_LEVEL`` sets the log level.
"""
from __future__ import annotations

import argparse
import hashlib
import json
import logging
import os
import sys
from dataclasses import asdict, dataclass, field, fields
from pathlib import Path

import networkx
import numpy
import scipy
import sklearn

from . import __version__
from .chains import chain_census
from .core import CorpusError, GenealogyGraph, TimeWindowing, emit_corpus, ingest_corpus, window_counts, write_csv
from .families import FamilyResolver, family_sizes, incidence_matrices, null_model
from .meso import (build_meso, centralities, detect_communities, elite_series, flow_triples,
                   hierarchy_curve, nmi_series)
from .rankings import ProfileClusterer, build_profiles, drift_series, top_k_rankings
from .repair import (DateRepairer, EmptyGapModelError, infer_disciplines, provenance_report,
                     train_keyword_model)
from .synth import GeneratorConfig, generate

logger = logging.getLogger("genealogy")

LOG_ENV = "GENEALOGY_LOG_LEVEL"
INCOMPLETE_MARKER = "INCOMPLETE"

EXIT_OK = 0
EXIT_CONFIG = 2
EXIT_CODES = {"ingest": 10, "repair": 11, "rankings": 12, "meso": 13, "families": 14,
              "chains": 15, "synth": 16}


class StageError(RuntimeError):
    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"{stage} failed: {cause}")
        self.stage = stage
        self.cause = cause

    @property
    def exit_code(self) -> int:
        return EXIT_CODES[self.stage]


@dataclass
class PipelineConfig:
    corpus: str | None = None
    format: str | None = None
    output_dir: str | None = None
    min_year: int = 1300
    max_year: int | None = None
    attributes: list[str] = field(default_factory=lambda: ["country", "discipline"])
    bins: int = 10
    top_k: int = 10
    baseline: int | None = None
    linkage: str = "average"
    n_clusters: int = 2
    threshold: float = 0.8
    repair_seed: int = 0
    max_iter: int = 10
    min_margin: float = 0.0
    skip_untranslatable: bool = False
    meso_seed: int = 0
    families_seed: int = 0
    samples: int = 10_000
    method: str = "auto"
    null_reps: int = 200
    null_seed: int = 0
    chain_scope: str = "per-discipline"
    chain_mode: str = "prefix"

    @classmethod
    def from_dict(cls, data: dict) -> "PipelineConfig":
        known = {f.name for f in fields(cls)}
        unknown = sorted(set(data) - known)
        if unknown:
            raise ValueError(f"unknown configuration keys: {unknown}")
        return cls(**data)

    def seeds(self) -> dict[str, int]:
        return {"repair": self.repair_seed, "meso": self.meso_seed,
                "families": self.families_seed, "null_model": self.null_seed}

    def digest(self) -> str:
        # the output location does not change results, so it stays out of the hash
        payload = {k: v for k, v in asdict(self).items() if k != "output_dir"}
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()


# -- output helpers ----------------------------------------------------------------

class Output:
    """A fresh directory plus a tally of rows written per file."""

    def __init__(self, path):
        self.path = Path(path)
        self.rows: dict[str, int] = {}

    def prepare(self):
        if self.path.exists() and any(self.path.iterdir()):
            raise FileExistsError(f"output directory {self.path} is not empty; use a fresh one")
        self.path.mkdir(parents=True, exist_ok=True)
        return self

    def csv(self, name, rows, fieldnames=None):
        write_csv(self.path / name, rows, fieldnames)
        self.rows[name] = len(rows)

    def json(self, name, obj, rows=None):
        (self.path / name).write_text(json.dumps(obj, indent=1, sort_keys=True, default=_jsonable) + "\n",
                                      encoding="utf-8")
        self.rows[name] = rows if rows is not None else 1

    def text(self, name, text, rows=1):
        with open(self.path / name, "w", encoding="utf-8", newline="\n") as fh:
            fh.write(text)
        self.rows[name] = rows

    def corpus(self, name, graph):
        emit_corpus(graph, self.path / name)
        self.rows[name] = len(graph)


def _jsonable(obj):
    if isinstance(obj, (numpy.integer,)):
        return int(obj)
    if isinstance(obj, (numpy.floating,)):
        return float(obj)
    if isinstance(obj, numpy.ndarray):
        return obj.tolist()
    raise TypeError(f"cannot serialize {type(obj).__name__}")


def _clean(x):
    """NaN becomes null so JSON output stays standard."""
    if isinstance(x, dict):
        return {k: _clean(v) for k, v in x.items()}
    if isinstance(x, float) and x != x:
        return None
    return x


def _stage(name):
    def wrap(fn):
        def run(*args, **kwargs):
            try:
                return fn(*args, **kwargs)
            except StageError:
                raise
            except (Exception,) as exc:  # every failure is reported with the stage exit code
                raise StageError(name, exc) from exc
        run.__name__ = fn.__name__
        run.__doc__ = fn.__doc__
        return run
    return wrap


# -- stages ------------------------------------------------------------------------

@_stage("ingest")
def load(cfg: PipelineConfig) -> GenealogyGraph:
    if not cfg.corpus:
        raise CorpusError("no corpus given")
    return ingest_corpus(cfg.corpus, cfg.format, min_year=cfg.min_year, max_year=cfg.max_year)


@_stage("ingest")
def stage_ingest(graph, cfg, out: Output):
    out.corpus("corpus.jsonl", graph)
    report = graph.missing_report()
    out.json("ingest.json", report)
    return graph


@_stage("repair")
def stage_repair(graph, cfg, out: Output, actions=("dates", "disciplines")):
    report = {}
    if "dates" in actions:
        repairer = DateRepairer(seed=cfg.repair_seed, max_iter=cfg.max_iter)
        try:
            graph = repairer.fit_transform(graph)
            report["dates"] = repairer.result_.report()
        except EmptyGapModelError as exc:
            raise CorpusError(f"date repair impossible: {exc}") from exc
    if "disciplines" in actions:
        try:
            model = train_keyword_model(graph)
        except ValueError as exc:
            logger.warning("discipline inference skipped: %s", exc)
        else:
            graph = infer_disciplines(graph, model, cfg.min_margin, cfg.skip_untranslatable)
    report["provenance"] = provenance_report(graph)
    out.corpus("corpus.repaired.jsonl", graph)
    out.json("repair.json", report)
    return graph


def _windows(graph, cfg):
    return TimeWindowing.covering(graph, cfg.bins)


@_stage("rankings")
def stage_rankings(graph, cfg, out: Output, actions=("profiles", "cluster", "drift")):
    windows = _windows(graph, cfg)
    for attr in cfg.attributes:
        table = window_counts(graph, attr, windows)
        profiles = build_profiles(table)
        if "profiles" in actions:
            rows = [{"label": p.label, "window_start": w, "f": float(p.values[k]),
                     "f_normalized": float(p.normalized[k])}
                    for p in profiles for k, w in enumerate(windows.starts)]
            out.csv(f"profiles_{attr}.csv", rows, ["label", "window_start", "f", "f_normalized"])
        if "cluster" in actions and len(profiles) >= 2:
            clf = ProfileClusterer(linkage=cfg.linkage, n_clusters=min(cfg.n_clusters, len(profiles)))
            clf.fit(profiles)
            out.text(f"dendrogram_{attr}.nwk", clf.dendrogram_.to_newick() + "\n")
            merges = clf.dendrogram_.merges()
            out.json(f"dendrogram_{attr}.json", {"labels": clf.dendrogram_.labels, "merges": merges},
                     rows=len(merges))
            out.csv(f"clusters_{attr}.csv",
                    [{"label": k, "cluster": v} for k, v in sorted(clf.assignment().items())],
                    ["label", "cluster"])
        if "drift" in actions and windows.n_windows >= 2:
            rankings = top_k_rankings(table, cfg.top_k)
            d = drift_series(rankings, cfg.top_k, cfg.baseline)
            if cfg.baseline is None:
                rows = [{"window_start": windows.starts[k], "next_window_start": windows.starts[k + 1],
                         "d_j": float(v)} for k, v in enumerate(d)]
            else:
                rows = [{"window_start": windows.starts[cfg.baseline],
                         "next_window_start": windows.starts[k], "d_j": float(v)} for k, v in enumerate(d)]
            out.csv(f"drift_{attr}.csv", rows, ["window_start", "next_window_start", "d_j"])
            out.csv(f"top{cfg.top_k}_{attr}.csv",
                    [{"window_start": windows.starts[r.window], "rank": rank, "label": lab}
                     for r in rankings for rank, lab in r.entries()],
                    ["window_start", "rank", "label"])


@_stage("meso")
def stage_meso(graph, cfg, out: Output, actions=("build", "flows", "hierarchy", "communities", "nmi")):
    windows = _windows(graph, cfg)
    for attr in cfg.attributes:
        net = build_meso(graph, attr)
        if "build" in actions:
            out.text(f"meso_{attr}.dot", net.to_dot(), rows=net.n_edges)
            out.csv(f"meso_{attr}_edges.csv", net.edge_rows(), ["from", "to", "weight"])
            out.csv(f"centralities_{attr}.csv", centralities(net),
                    ["label", "in_strength", "out_strength", "self_loop", "betweenness"])
        if "flows" in actions:
            out.csv(f"flows_{attr}.csv",
                    [{"label": t.label, "stay": t.stay, "export": t.export, "import": t.import_,
                      "total": t.total} for t in flow_triples(net)],
                    ["label", "stay", "export", "import", "total"])
        if "hierarchy" in actions:
            rows = []
            for direction in ("production", "absorption"):
                curve = hierarchy_curve(net, direction, cfg.threshold)
                rows += [{"direction": direction, "rank": r + 1, "label": lab,
                          "strength": float(curve.strengths[r]), "cumulative": float(curve.cumulative[r])}
                         for r, lab in enumerate(curve.labels)]
            out.csv(f"hierarchy_{attr}.csv", rows, ["direction", "rank", "label", "strength", "cumulative"])
            out.csv(f"elite_{attr}.csv", elite_series(graph, attr, windows, threshold=cfg.threshold),
                    ["window_start", "active", "elite_size", "elite_fraction"])
        if "communities" in actions and net.weights:
            part = detect_communities(net, seed=cfg.meso_seed)
            out.csv(f"communities_{attr}.csv",
                    [{"label": k, "community": v} for k, v in sorted(part.assignment.items())],
                    ["label", "community"])
        if "nmi" in actions and windows.n_windows >= 2:
            series = nmi_series(graph, attr, windows, seed=cfg.meso_seed)
            rows = [{"window_start": series.window_starts[k], "next_window_start": series.window_starts[k + 1],
                     "nmi": float(v), "low_data": series.low_data[k]} for k, v in enumerate(series.values)]
            out.csv(f"nmi_{attr}.csv", rows, ["window_start", "next_window_start", "nmi", "low_data"])


@_stage("families")
def stage_families(graph, cfg, out: Output, actions=("resolve", "indicators", "incidence")):
    resolver = FamilyResolver(samples=cfg.samples, seed=cfg.families_seed, method=cfg.method).fit(graph)
    part = resolver.partition_
    if "resolve" in actions:
        out.csv("families.csv",
                [{"scholar_id": s, "family_id": part.family_of[s], "root_name": graph[part.family_of[s]].name}
                 for s in sorted(part.family_of)],
                ["scholar_id", "family_id", "root_name"])
        ledger = [{"student_id": d.student_id, "mentor_id": m, "p_keep": p, "kept": m == d.kept_parent}
                  for d in part.decisions for m, p in d.parents]
        out.csv("cut_ledger.csv", ledger, ["student_id", "mentor_id", "p_keep", "kept"])
        out.csv("family_sizes.csv", family_sizes(part, graph),
                ["rank", "family_id", "root_name", "size", "relative_size", "coverage", "mean_offspring"])
    if "indicators" in actions:
        res = null_model(graph, part, reps=cfg.null_reps, seed=cfg.null_seed)
        out.json("indicators.json", _clean({"observed": res.observed.as_dict(), "null_mean": res.null_mean,
                                            "null_std": res.null_std, "reps": res.reps}))
    if "incidence" in actions:
        for attr in cfg.attributes:
            inc = incidence_matrices(graph, part, attr)
            out.csv(f"incidence_{attr}.csv", inc.to_rows(), ["family_id", *inc.values, "n_values"])
    return part


@_stage("chains")
def stage_chains(graph, cfg, out: Output):
    census = chain_census(graph, scope=cfg.chain_scope, mode=cfg.chain_mode)
    rows = [{"discipline": r["discipline"], "n": r["n"], "C(n)": r["count"], "P(n+1|n)": r["p_next"]}
            for r in census.rows()]
    out.csv("chains.csv", rows, ["discipline", "n", "C(n)", "P(n+1|n)"])
    return census


def run_pipeline(cfg: PipelineConfig, outdir) -> Output:
    """Run every stage in order and write ``run.json``.

    The corpus is ingested before the output directory is created, so an
    unreadable corpus leaves nothing behind. A later failure leaves an
    ``INCOMPLETE`` marker naming the stage.
    """
    graph = load(cfg)
    out = Output(outdir).prepare()
    try:
        stage_ingest(graph, cfg, out)
        graph = stage_repair(graph, cfg, out)
        stage_rankings(graph, cfg, out)
        stage_meso(graph, cfg, out)
        stage_families(graph, cfg, out)
        stage_chains(graph, cfg, out)
    except StageError as exc:
        out.text(INCOMPLETE_MARKER, f"{exc.stage}: {exc.cause}\n")
        raise
    out.json("run.json", provenance(cfg, out))
    return out


def provenance(cfg: PipelineConfig, out: Output) -> dict:
    corpus_hash = hashlib.sha256(Path(cfg.corpus).read_bytes()).hexdigest() if cfg.corpus else None
    return {
        "config": {k: v for k, v in asdict(cfg).items() if k != "output_dir"},
        "config_sha256": cfg.digest(),
        "corpus_sha256": corpus_hash,
        "seeds": cfg.seeds(),
        "versions": {"genealogy": __version__, "python": sys.version.split()[0], "numpy": numpy.__version__,
                     "scipy": scipy.__version__, "networkx": networkx.__version__,
                     "scikit-learn": sklearn.__version__},
        "rows": dict(sorted(out.rows.items())),
    }


# -- argument parsing ----------------------------------------------------------------

# flag name -> (config key, type); shared by the pipeline and the standalone stages
_FLAGS = {
    "--corpus": ("corpus", str), "--format": ("format", str), "--out": ("output_dir", str),
    "--min-year": ("min_year", int), "--max-year": ("max_year", int),
    "--bins": ("bins", int), "--top-k": ("top_k", int), "--baseline": ("baseline", int),
    "--linkage": ("linkage", str), "--n-clusters": ("n_clusters", int),
    "--threshold": ("threshold", float), "--max-iter": ("max_iter", int),
    "--min-margin": ("min_margin", float), "--samples": ("samples", int), "--method": ("method", str),
    "--null-reps": ("null_reps", int), "--scope": ("chain_scope", str), "--mode": ("chain_mode", str),
}

_STAGE_FLAGS = {
    "ingest": ["--corpus", "--format", "--out", "--min-year", "--max-year"],
    "repair": ["--max-iter", "--min-margin"],
    "rankings": ["--bins", "--top-k", "--baseline", "--linkage", "--n-clusters"],
    "meso": ["--bins", "--threshold"],
    "families": ["--samples", "--method", "--null-reps"],
    "chains": ["--scope", "--mode"],
}

_ACTIONS = {
    "repair": ("dates", "disciplines"),
    "rankings": ("profiles", "cluster", "drift"),
    "meso": ("build", "flows", "hierarchy", "communities", "nmi"),
    "families": ("resolve", "indicators", "incidence"),
}

_SEED_KEY = {"repair": "repair_seed", "meso": "meso_seed", "families": "families_seed"}


def _add_flags(p, names):
    for name in names:
        key, typ = _FLAGS[name]
        p.add_argument(name, dest=key, type=typ, default=None)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="genealogy", description="Advisor genealogy analysis pipeline.")
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    parser.add_argument("-c", "--config", dest="config_file", help="JSON pipeline configuration")
    sub = parser.add_subparsers(dest="command", required=True)
    io_flags = _STAGE_FLAGS["ingest"]

    p = sub.add_parser("ingest", help="validate a corpus and write its normalized form")
    _add_flags(p, io_flags)

    for stage in ("repair", "rankings", "meso", "families"):
        p = sub.add_parser(stage)
        p.add_argument("action", choices=_ACTIONS[stage])
        _add_flags(p, io_flags + _STAGE_FLAGS[stage])
        if stage in _SEED_KEY:
            p.add_argument("--seed", dest=_SEED_KEY[stage], type=int, default=None)
        if stage in ("rankings", "meso", "families"):
            p.add_argument("--attribute", dest="attributes", action="append", default=None)
        if stage == "families":
            p.add_argument("--null-seed", dest="null_seed", type=int, default=None)
        if stage == "repair":
            p.add_argument("--skip-untranslatable", dest="skip_untranslatable", action="store_true",
                           default=None)

    p = sub.add_parser("chains")
    _add_flags(p, io_flags + _STAGE_FLAGS["chains"])

    p = sub.add_parser("synth", help="generate a synthetic corpus with a ground-truth manifest")
    p.add_argument("--config", dest="generator_config", help="generator JSON options")
    p.add_argument("--seed", dest="generator_seed", type=int, default=None)
    p.add_argument("--n-scholars", dest="generator_n", type=int, default=None)
    p.add_argument("--out", dest="synth_out", required=True)
    p.add_argument("--manifest", dest="synth_manifest")

    p = sub.add_parser("pipeline", help="run every stage in order")
    all_flags = list(dict.fromkeys(f for names in _STAGE_FLAGS.values() for f in names))
    _add_flags(p, all_flags)
    for key in ("repair_seed", "meso_seed", "families_seed", "null_seed"):
        p.add_argument("--" + key.replace("_", "-"), dest=key, type=int, default=None)
    p.add_argument("--attribute", dest="attributes", action="append", default=None)
    return parser


def resolve_config(args) -> PipelineConfig:
    data = {}
    if args.config_file:
        data = json.loads(Path(args.config_file).read_text(encoding="utf-8"))
    cfg_keys = {f.name for f in fields(PipelineConfig)}
    for key, value in vars(args).items():
        if key in cfg_keys and value is not None:
            data[key] = value
    return PipelineConfig.from_dict(data)


def _default_outdir(cfg: PipelineConfig, command: str) -> Path:
    return Path("runs") / f"{command}-{cfg.digest()[:12]}"


def _run_stage(command, action, cfg):
    graph = load(cfg)
    out = Output(cfg.output_dir or _default_outdir(cfg, command)).prepare()
    try:
        if command == "ingest":
            stage_ingest(graph, cfg, out)
        elif command == "repair":
            stage_repair(graph, cfg, out, (action,))
        elif command == "rankings":
            stage_rankings(graph, cfg, out, (action,))
        elif command == "meso":
            stage_meso(graph, cfg, out, (action,))
        elif command == "families":
            stage_families(graph, cfg, out, (action,))
        elif command == "chains":
            stage_chains(graph, cfg, out)
    except StageError as exc:
        out.text(INCOMPLETE_MARKER, f"{exc.stage}: {exc.cause}\n")
        raise
    return out


@_stage("synth")
def _run_synth(args):
    data = {}
    if args.generator_config:
        data = json.loads(Path(args.generator_config).read_text(encoding="utf-8"))
    if args.generator_seed is not None:
        data["seed"] = args.generator_seed
    if args.generator_n is not None:
        data["n_scholars"] = args.generator_n
    corpus = generate(GeneratorConfig.from_dict(data))
    corpus.write(args.synth_out, args.synth_manifest)
    logger.info("wrote %d scholars to %s", len(corpus.graph), args.synth_out)


def configure_logging():
    level = os.environ.get(LOG_ENV, "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(asctime)s %(levelname)s %(name)s: %(message)s", stream=sys.stderr)


def main(argv=None) -> int:
    configure_logging()
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "synth":
            _run_synth(args)
            return EXIT_OK
        cfg = resolve_config(args)
        if args.command == "pipeline":
            out = run_pipeline(cfg, cfg.output_dir or _default_outdir(cfg, "pipeline"))
        else:
            out = _run_stage(args.command, getattr(args, "action", None), cfg)
    except StageError as exc:
        logger.error("%s", exc)
        print(f"error: {exc}", file=sys.stderr)
        return exc.exit_code
    except (ValueError, TypeError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    print(out.path)
    return EXIT_OK


if __name__ == "__main__":
    sys.exit(main())
