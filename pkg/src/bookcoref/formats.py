"""Interchange formats: JSONL (canonical) and CoNLL-2012 (export).

JSONL schema, one object per line, UTF-8, LF newlines:

    {"doc_id": str,
     "tokens": [str, ...],
     "characters": [str, ...],
     "clusters": {character: [[start, end], ...]},   # 0-based, end-inclusive
     ...}                                            # unknown keys preserved

JSONL is canonical because it carries character names; CoNLL-2012 drops
them (clusters are re-keyed to integers in first-mention order) and exists
for interop with legacy scorers. Writers emit a canonical form: compact
separators, spans sorted per cluster, known keys first and unknown keys in
their original order. Re-writing a file produced by these writers is
byte-identical.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterator

from .errors import ParseError, SchemaError
from .model import ClusterKey, ClusterSet, Document, Mention, _key_order

_REQUIRED_KEYS = ("doc_id", "tokens", "characters", "clusters")


@dataclass
class DocumentRecord:
    """One document plus its named cluster sets (e.g. "gold", "prediction")."""

    document: Document
    cluster_sets: dict[str, ClusterSet] = field(default_factory=dict)

    def get(self, name: str) -> ClusterSet | None:
        return self.cluster_sets.get(name)

    def only(self) -> ClusterSet:
        """The sole cluster set, when exactly one is attached."""
        if len(self.cluster_sets) != 1:
            raise SchemaError(
                f"document {self.document.doc_id!r} has {len(self.cluster_sets)} cluster sets, expected 1"
            )
        return next(iter(self.cluster_sets.values()))


@dataclass
class CorpusFile:
    """An ordered collection of documents with attached annotations."""

    records: list[DocumentRecord] = field(default_factory=list)

    def __iter__(self) -> Iterator[DocumentRecord]:
        return iter(self.records)

    def __len__(self) -> int:
        return len(self.records)

    def by_id(self) -> dict[str, DocumentRecord]:
        return {r.document.doc_id: r for r in self.records}

    def doc_ids(self) -> list[str]:
        return [r.document.doc_id for r in self.records]


def _parse_clusters(raw: object, doc_id: str, stage: str, lineno: int) -> ClusterSet:
    if not isinstance(raw, dict):
        raise SchemaError(f"line {lineno}: 'clusters' must be an object, got {type(raw).__name__}")
    clusters: dict[ClusterKey, list[Mention]] = {}
    for key, spans in raw.items():
        if not isinstance(spans, list):
            raise SchemaError(f"line {lineno}: cluster {key!r} spans must be an array")
        ckey: ClusterKey = key
        if stage == "prediction" and isinstance(key, str) and key.isdigit():
            ckey = int(key)
        ms = []
        for span in spans:
            if (
                not isinstance(span, list)
                or len(span) != 2
                or not all(isinstance(x, int) and not isinstance(x, bool) for x in span)
            ):
                raise SchemaError(f"line {lineno}: cluster {key!r} has malformed span {span!r}")
            ms.append(Mention(span[0], span[1]))
        clusters[ckey] = ms
    return ClusterSet.build(doc_id, stage, clusters)


def read_jsonl(path: str, clusters_as: str = "gold", stage: str | None = None) -> CorpusFile:
    """Read a JSONL corpus; the "clusters" key becomes a set named ``clusters_as``.

    ``stage`` defaults to ``clusters_as`` when that is a known stage name,
    else to "gold". Unknown record keys land in ``Document.source``.
    """
    from .model import STAGES

    if stage is None:
        stage = clusters_as if clusters_as in STAGES else "gold"
    corpus = CorpusFile()
    seen_ids: set[str] = set()
    with open(path, encoding="utf-8") as f:
        for lineno, line in enumerate(f, 1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as e:
                raise ParseError(f"malformed JSON ({e.msg})", lineno) from e
            if not isinstance(obj, dict):
                raise ParseError("record is not a JSON object", lineno)
            missing = [k for k in _REQUIRED_KEYS if k not in obj]
            if missing:
                raise SchemaError(f"line {lineno}: missing required keys {missing}")
            doc_id = obj["doc_id"]
            tokens = obj["tokens"]
            characters = obj["characters"]
            if not isinstance(tokens, list) or not all(isinstance(t, str) for t in tokens):
                raise SchemaError(f"line {lineno}: 'tokens' must be an array of strings")
            if not isinstance(characters, list) or not all(isinstance(c, str) for c in characters):
                raise SchemaError(f"line {lineno}: 'characters' must be an array of strings")
            if doc_id in seen_ids:
                raise SchemaError(f"line {lineno}: duplicate doc_id {doc_id!r}")
            seen_ids.add(doc_id)
            extra = {k: v for k, v in obj.items() if k not in _REQUIRED_KEYS}
            doc = Document(doc_id, tuple(tokens), tuple(characters), extra or None)
            cs = _parse_clusters(obj["clusters"], doc_id, stage, lineno)
            corpus.records.append(DocumentRecord(doc, {clusters_as: cs}))
    return corpus


def _clusters_to_json(cs: ClusterSet) -> dict[str, list[list[int]]]:
    return {str(key): [[m.start, m.end] for m in ms] for key, ms in sorted(cs.clusters.items(), key=lambda kv: _key_order(kv[0]))}


def _pick_clusters(rec: DocumentRecord, clusters_from: str | None) -> ClusterSet:
    if clusters_from is not None:
        cs = rec.cluster_sets.get(clusters_from)
        if cs is None:
            raise SchemaError(f"document {rec.document.doc_id!r} has no cluster set {clusters_from!r}")
        return cs
    if "gold" in rec.cluster_sets:
        return rec.cluster_sets["gold"]
    return rec.only()


def _record_line(rec: DocumentRecord, clusters_from: str | None) -> str:
    doc = rec.document
    obj: dict = {
        "doc_id": doc.doc_id,
        "tokens": list(doc.tokens),
        "characters": list(doc.characters),
        "clusters": _clusters_to_json(_pick_clusters(rec, clusters_from)),
    }
    for k, v in (doc.source or {}).items():
        obj.setdefault(k, v)
    return json.dumps(obj, ensure_ascii=False, separators=(",", ":"))


def write_jsonl(corpus: CorpusFile, path: str, clusters_from: str | None = None) -> None:
    """Write a corpus in canonical JSONL form.

    ``clusters_from`` picks the named set to serialize; default: "gold" if
    present, else the record's sole set.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for rec in corpus.records:
            f.write(_record_line(rec, clusters_from))
            f.write("\n")


# --- CoNLL-2012 -------------------------------------------------------------

_CONLL_BEGIN = re.compile(r"#begin document \((?P<id>.*)\); part (?P<part>\d+)\s*$")
_COREF_ITEM = re.compile(r"^(\()?(\d+)(\))?$")


def _coref_labels(cs: ClusterSet, n_tokens: int) -> list[str]:
    """Per-token coreference column using (k / k) / (k) bracket notation."""
    # integer ids in first-mention order
    firsts = []
    for key in cs.sorted_keys():
        ms = cs.clusters[key]
        if ms:
            firsts.append((ms[0], key))
    firsts.sort(key=lambda t: (t[0], _key_order(t[1])))
    ids = {key: i for i, (_, key) in enumerate(firsts)}

    opens: dict[int, list[tuple[int, int]]] = {i: [] for i in range(n_tokens)}
    closes: dict[int, list[tuple[int, int]]] = {i: [] for i in range(n_tokens)}
    singles: dict[int, list[int]] = {i: [] for i in range(n_tokens)}
    for key, ms in cs.clusters.items():
        if not ms:
            continue
        k = ids[key]
        for m in set(ms):
            if m.start == m.end:
                singles[m.start].append(k)
            else:
                opens[m.start].append((m.end, k))
                closes[m.end].append((m.start, k))

    labels = []
    for i in range(n_tokens):
        parts: list[str] = []
        # outermost mentions open first; innermost close first
        for end, k in sorted(opens[i], key=lambda t: (-t[0], t[1])):
            parts.append(f"({k}")
        for k in sorted(singles[i]):
            parts.append(f"({k})")
        for start, k in sorted(closes[i], key=lambda t: (-t[0], t[1])):
            parts.append(f"{k})")
        labels.append("|".join(parts) if parts else "-")
    return labels


def write_conll(corpus: CorpusFile, path: str, clusters_from: str | None = None) -> None:
    """Export to CoNLL-2012 layout: doc id, part, index, token, coref column.

    Character names are lost; cluster keys become integer ids assigned in
    first-mention order.
    """
    with open(path, "w", encoding="utf-8", newline="\n") as f:
        for rec in corpus.records:
            doc = rec.document
            if clusters_from is not None:
                cs = rec.cluster_sets.get(clusters_from)
                if cs is None:
                    raise SchemaError(f"document {doc.doc_id!r} has no cluster set {clusters_from!r}")
            elif "gold" in rec.cluster_sets:
                cs = rec.cluster_sets["gold"]
            else:
                cs = rec.only()
            labels = _coref_labels(cs, len(doc.tokens))
            f.write(f"#begin document ({doc.doc_id}); part 000\n")
            for i, (tok, label) in enumerate(zip(doc.tokens, labels)):
                f.write(f"{doc.doc_id}\t0\t{i}\t{tok}\t{label}\n")
            f.write("#end document\n")


def read_conll(path: str, clusters_as: str = "prediction") -> CorpusFile:
    """Read a CoNLL-2012 export back into a corpus.

    Clusters come back integer-keyed (names are not representable), so the
    attached set defaults to stage "prediction".
    """
    corpus = CorpusFile()
    doc_id: str | None = None
    tokens: list[str] = []
    open_stacks: dict[int, list[int]] = {}
    clusters: dict[int, list[Mention]] = {}

    def flush(row: int) -> None:
        nonlocal doc_id, tokens, open_stacks, clusters
        if doc_id is None:
            return
        dangling = [cid for cid, stack in open_stacks.items() if stack]
        if dangling:
            raise ParseError(f"unbalanced coreference brackets for cluster(s) {sorted(dangling)}", row)
        if not tokens:
            raise ParseError(f"document {doc_id!r} has no token rows", row)
        doc = Document(doc_id, tuple(tokens))
        cs = ClusterSet.build(doc_id, "prediction", clusters)
        corpus.records.append(DocumentRecord(doc, {clusters_as: cs}))
        doc_id, tokens, open_stacks, clusters = None, [], {}, {}

    with open(path, encoding="utf-8") as f:
        row = 0
        for row, line in enumerate(f, 1):
            line = line.rstrip("\n")
            if not line.strip():
                continue
            m = _CONLL_BEGIN.match(line)
            if m:
                flush(row)
                doc_id = m.group("id")
                continue
            if line.startswith("#end document"):
                flush(row)
                continue
            if line.startswith("#"):
                continue
            if doc_id is None:
                raise ParseError("token row outside a document block", row)
            cols = line.split("\t")
            if len(cols) < 2:
                cols = line.split()
            if len(cols) < 2:
                raise ParseError("expected at least token and coreference columns", row)
            token, label = cols[-2], cols[-1]
            idx = len(tokens)
            tokens.append(token)
            if label != "-":
                for item in label.split("|"):
                    im = _COREF_ITEM.match(item)
                    if not im:
                        raise ParseError(f"malformed coreference item {item!r}", row)
                    opened, cid_s, closed = im.groups()
                    cid = int(cid_s)
                    if opened:
                        open_stacks.setdefault(cid, []).append(idx)
                    if closed:
                        stack = open_stacks.get(cid) or []
                        if not stack:
                            raise ParseError(f"close bracket without open for cluster {cid}", row)
                        start = stack.pop()
                        clusters.setdefault(cid, []).append(Mention(start, idx))
        flush(row)
    return corpus


def dumps_jsonl(corpus: CorpusFile, clusters_from: str | None = None) -> str:
    """In-memory variant of :func:`write_jsonl` (used by tests and the CLI)."""
    out = [_record_line(rec, clusters_from) for rec in corpus.records]
    return "\n".join(out) + ("\n" if out else "")
