"""Evaluation harness: the three scoring settings, count pooling, and run
artifacts.

Settings:

* ``full_book``        - score whole documents against each other.
* ``split``            - the key corpus is cut into independent windows;
  response documents must carry the matching window ids ("<doc>#w<i>").
* ``gold_plus_window`` - full-book responses are evaluated window by
  window: both sides are restricted to each window (full containment),
  empty clusters dropped, and each window scored as its own unit.

Units pool their metric counts for the corpus-level (micro) report; macro
means over units are reported alongside. Units where both sides are empty
after restriction carry no signal and are skipped.
"""

from __future__ import annotations

import json
import os
import time
from dataclasses import dataclass, field

from .errors import ConfigError
from .formats import CorpusFile, DocumentRecord
from .metrics import (
    CorpusStats,
    ScoreReport,
    conll,
    corpus_stats,
    macro_reports,
    pool_reports,
)
from .model import ClusterSet, restrict
from .windowing import plan_windows, split_corpus

SETTINGS = ("full_book", "split", "gold_plus_window")


@dataclass(frozen=True, slots=True)
class Setting:
    kind: str
    window_len: int = 1500

    def __post_init__(self) -> None:
        if self.kind not in SETTINGS:
            raise ConfigError(f"unknown setting {self.kind!r}; expected one of {SETTINGS}")
        if self.window_len < 1:
            raise ConfigError("window_len must be positive")


@dataclass
class EvalRun:
    """Scores for one evaluation: per-unit reports plus pooled/macro corpus
    aggregates, wall-clock seconds and best-effort peak memory."""

    setting: Setting
    units: list[tuple[str, ScoreReport]] = field(default_factory=list)
    pooled: ScoreReport | None = None
    macro: ScoreReport | None = None
    missing_units: list[str] = field(default_factory=list)
    unmatched_responses: list[str] = field(default_factory=list)
    seconds: float = 0.0
    peak_rss_mb: float | None = None

    def to_dict(self) -> dict:
        return {
            "setting": {"kind": self.setting.kind, "window_len": self.setting.window_len},
            "pooled": self.pooled.to_dict() if self.pooled else None,
            "macro": self.macro.to_dict() if self.macro else None,
            "units": {unit: report.to_dict() for unit, report in self.units},
            "missing_units": self.missing_units,
            "unmatched_responses": self.unmatched_responses,
            "seconds": self.seconds,
            "peak_rss_mb": self.peak_rss_mb,
        }

    def summary_table(self) -> str:
        lines = [f"setting: {self.setting.kind} (window_len={self.setting.window_len})"]
        width = max([len(u) for u, _ in self.units] + [len("corpus (pooled)"), len("corpus (macro)")])
        lines.append(f"{'unit'.ljust(width)}    MUC    B3  C_p4 CoNLL")
        for unit, report in self.units:
            lines.append(f"{unit.ljust(width)}  {report.row()}")
        if self.pooled:
            lines.append(f"{'corpus (pooled)'.ljust(width)}  {self.pooled.row()}")
        if self.macro:
            lines.append(f"{'corpus (macro)'.ljust(width)}  {self.macro.row()}")
        if self.missing_units:
            lines.append(f"missing responses for: {', '.join(self.missing_units)}")
        if self.unmatched_responses:
            lines.append(f"unmatched response docs: {', '.join(self.unmatched_responses)}")
        lines.append(f"scored in {self.seconds:.2f}s")
        return "\n".join(lines)

    def save(self, out_dir: str) -> None:
        """Write run.json, per-unit JSONL and a plain-text summary."""
        os.makedirs(out_dir, exist_ok=True)
        with open(os.path.join(out_dir, "run.json"), "w", encoding="utf-8") as f:
            json.dump(self.to_dict(), f, indent=2)
            f.write("\n")
        with open(os.path.join(out_dir, "units.jsonl"), "w", encoding="utf-8") as f:
            for unit, report in self.units:
                f.write(json.dumps({"unit": unit, **report.to_dict()}, separators=(",", ":")))
                f.write("\n")
        with open(os.path.join(out_dir, "summary.txt"), "w", encoding="utf-8") as f:
            f.write(self.summary_table())
            f.write("\n")


def _peak_rss_mb() -> float | None:
    try:
        import resource

        return resource.getrusage(resource.RUSAGE_SELF).ru_maxrss / 1024.0
    except Exception:
        return None


def _pick(rec: DocumentRecord, name: str) -> ClusterSet | None:
    cs = rec.cluster_sets.get(name)
    if cs is None and len(rec.cluster_sets) == 1:
        cs = next(iter(rec.cluster_sets.values()))
    return cs


def _drop_empty(cs: ClusterSet) -> ClusterSet:
    return ClusterSet(cs.doc_id, cs.stage, {k: ms for k, ms in cs.clusters.items() if ms})


def evaluate(
    setting: Setting,
    key_corpus: CorpusFile,
    response_corpus: CorpusFile,
    key_name: str = "gold",
    response_name: str = "prediction",
    drop_singletons: bool = True,
) -> EvalRun:
    """Score a response corpus against a key corpus under one setting.

    A key unit without a matching response is scored against an empty
    response (a pure recall penalty) and flagged; response documents that
    match no key unit are flagged and not scored.
    """
    started = time.perf_counter()
    run = EvalRun(setting)

    responses = response_corpus.by_id()
    matched: set[str] = set()

    def unit_report(unit_id: str, key_cs: ClusterSet, resp_cs: ClusterSet | None) -> None:
        if resp_cs is None:
            run.missing_units.append(unit_id)
            resp_partition: list = []
        else:
            resp_partition = resp_cs.partition()
        report = conll(key_cs.partition(), resp_partition, drop_singletons)
        run.units.append((unit_id, report))

    if setting.kind == "full_book":
        for rec in key_corpus.records:
            key_cs = _pick(rec, key_name)
            if key_cs is None:
                continue
            resp = responses.get(rec.document.doc_id)
            if resp is not None:
                matched.add(rec.document.doc_id)
            unit_report(rec.document.doc_id, key_cs, _pick(resp, response_name) if resp else None)

    elif setting.kind == "split":
        split = split_corpus(key_corpus, setting.window_len)
        for rec in split.corpus.records:
            key_cs = _pick(rec, key_name)
            if key_cs is None:
                continue
            resp = responses.get(rec.document.doc_id)
            if resp is not None:
                matched.add(rec.document.doc_id)
            resp_cs = _pick(resp, response_name) if resp else None
            if key_cs.n_mentions == 0 and (resp_cs is None or resp_cs.n_mentions == 0):
                continue
            unit_report(rec.document.doc_id, key_cs, resp_cs)

    else:  # gold_plus_window
        for rec in key_corpus.records:
            key_cs = _pick(rec, key_name)
            if key_cs is None:
                continue
            doc_id = rec.document.doc_id
            resp = responses.get(doc_id)
            resp_cs = _pick(resp, response_name) if resp else None
            if resp is not None:
                matched.add(doc_id)
            if resp_cs is None:
                run.missing_units.append(doc_id)
            plan = plan_windows(rec.document, setting.window_len, "strict")
            for i, (lo, hi) in enumerate(plan.windows, 1):
                key_part = _drop_empty(restrict(key_cs, lo, hi))
                resp_part = _drop_empty(restrict(resp_cs, lo, hi)) if resp_cs is not None else None
                if key_part.n_mentions == 0 and (resp_part is None or resp_part.n_mentions == 0):
                    continue
                unit_id = f"{doc_id}#w{i}"
                report = conll(
                    key_part.partition(),
                    resp_part.partition() if resp_part is not None else [],
                    drop_singletons,
                )
                run.units.append((unit_id, report))

    run.unmatched_responses = sorted(set(responses) - matched)
    if run.units:
        run.pooled = pool_reports([r for _, r in run.units])
        run.macro = macro_reports([r for _, r in run.units])
    run.seconds = time.perf_counter() - started
    run.peak_rss_mb = _peak_rss_mb()
    return run


def stats(corpus: CorpusFile, clusters_from: str = "gold") -> CorpusStats:
    """Corpus statistics (delegates to :func:`bookcoref.metrics.corpus_stats`)."""
    return corpus_stats(corpus, clusters_from)
