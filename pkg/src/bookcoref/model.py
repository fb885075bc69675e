"""Core domain model: documents, mention spans, character clusters.

Span convention: token indices are 0-based and end-INCLUSIVE, i.e. the
mention ``(3, 5)`` covers tokens 3, 4 and 5. This matches the CoNLL-2012
shared-task convention and the JSONL interchange schema.

All types are immutable after construction; the operations in this module
(:func:`validate`, :func:`restrict`, :func:`union`, :func:`shift`) are pure
functions, so values can be shared freely across threads.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Any, Iterable, Iterator, Mapping, NamedTuple, Sequence, Union

from .errors import CompositionError, SpanRangeError, StageError

ClusterKey = Union[str, int]

#: Stages a cluster set can be in. ``initialized -> refined ->
#: window_expanded -> final`` is the only legal transition chain; ``gold``
#: and ``prediction`` are standalone.
STAGES = ("initialized", "refined", "window_expanded", "final", "gold", "prediction")

_NEXT_STAGE = {
    "initialized": "refined",
    "refined": "window_expanded",
    "window_expanded": "final",
}

#: Closed-class pronouns used to flag spans that a character linker should
#: not have produced (linkers return explicit mentions only).
PRONOUNS = frozenset(
    """
    i me my mine myself you your yours yourself yourselves he him his himself
    she her hers herself it its itself we us our ours ourselves they them
    their theirs themselves thou thee thy thine ye
    """.split()
)


def _key_order(key: ClusterKey) -> tuple[str, str]:
    # stable sort for mixed str/int cluster keys
    return (key.__class__.__name__, str(key))


@dataclass(frozen=True, order=True, slots=True)
class Mention:
    """A token span, 0-based, end-inclusive. Orders by (start, end)."""

    start: int
    end: int

    def __post_init__(self) -> None:
        if self.start < 0 or self.end < self.start:
            raise SpanRangeError(f"invalid mention span ({self.start}, {self.end})")

    def __len__(self) -> int:
        return self.end - self.start + 1

    def shifted(self, delta: int) -> "Mention":
        return Mention(self.start + delta, self.end + delta)

    def within(self, lo: int, hi: int) -> bool:
        """True if the span lies fully inside the token range [lo, hi)."""
        return lo <= self.start and self.end < hi


@dataclass(frozen=True, slots=True)
class Document:
    """A tokenized book plus its character index.

    ``source`` carries opaque metadata (title, author, unknown interchange
    keys); it is preserved verbatim by the format readers/writers.
    """

    doc_id: str
    tokens: tuple[str, ...]
    characters: tuple[str, ...] = ()
    source: Mapping[str, Any] | None = None

    def __post_init__(self) -> None:
        if not self.tokens:
            raise SpanRangeError(f"document {self.doc_id!r} has no tokens")
        if len(set(self.characters)) != len(self.characters):
            raise CompositionError(f"document {self.doc_id!r} has duplicate character names")

    def __len__(self) -> int:
        return len(self.tokens)

    def text(self, mention: Mention) -> str:
        return " ".join(self.tokens[mention.start : mention.end + 1])


@dataclass(frozen=True, slots=True)
class ClusterSet:
    """Stage-tagged mapping character -> mentions for one document.

    Mentions are stored sorted, duplicates preserved as given so that
    :func:`validate` can report them; :func:`union` applies set semantics.
    Character keys are strings; ``stage="prediction"`` may use anonymous
    integer keys instead.
    """

    doc_id: str
    stage: str
    clusters: Mapping[ClusterKey, tuple[Mention, ...]] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if self.stage not in STAGES:
            raise StageError(f"unknown stage {self.stage!r}")

    @classmethod
    def build(
        cls,
        doc_id: str,
        stage: str,
        clusters: Mapping[ClusterKey, Iterable[Mention | Sequence[int]]],
    ) -> "ClusterSet":
        """Normalize arbitrary span input to sorted Mention tuples."""
        norm: dict[ClusterKey, tuple[Mention, ...]] = {}
        for key, spans in clusters.items():
            ms = [s if isinstance(s, Mention) else Mention(int(s[0]), int(s[1])) for s in spans]
            norm[key] = tuple(sorted(ms))
        return cls(doc_id, stage, norm)

    def keys(self) -> Sequence[ClusterKey]:
        return list(self.clusters)

    def sorted_keys(self) -> list[ClusterKey]:
        return sorted(self.clusters, key=_key_order)

    def mentions(self) -> Iterator[tuple[ClusterKey, Mention]]:
        """All (key, mention) pairs in deterministic order."""
        for key in self.sorted_keys():
            for m in self.clusters[key]:
                yield key, m

    @property
    def n_mentions(self) -> int:
        return sum(len(ms) for ms in self.clusters.values())

    def pairs(self) -> set[tuple[Mention, ClusterKey]]:
        """(span, key) pairs, the unit of character-linking evaluation."""
        return {(m, key) for key, ms in self.clusters.items() for m in ms}

    def partition(self, drop_empty: bool = True) -> list[frozenset[Mention]]:
        """Clusters as mention sets, for the coreference scorers."""
        parts = [frozenset(ms) for _, ms in sorted(self.clusters.items(), key=lambda kv: _key_order(kv[0]))]
        if drop_empty:
            parts = [p for p in parts if p]
        return parts

    def with_stage(self, stage: str) -> "ClusterSet":
        return ClusterSet(self.doc_id, stage, self.clusters)

    def advanced(self) -> "ClusterSet":
        """Move to the next stage of the pipeline chain."""
        nxt = _NEXT_STAGE.get(self.stage)
        if nxt is None:
            raise StageError(f"stage {self.stage!r} has no successor")
        return self.with_stage(nxt)


class Finding(NamedTuple):
    code: str
    location: str
    message: str


@dataclass(frozen=True, slots=True)
class ValidationReport:
    errors: tuple[Finding, ...]
    warnings: tuple[Finding, ...]

    @property
    def ok(self) -> bool:
        return not self.errors

    def summary(self) -> str:
        lines = [f"{len(self.errors)} error(s), {len(self.warnings)} warning(s)"]
        lines += [f"E {f.code} at {f.location}: {f.message}" for f in self.errors]
        lines += [f"W {f.code} at {f.location}: {f.message}" for f in self.warnings]
        return "\n".join(lines)


def validate(doc: Document, cs: ClusterSet) -> ValidationReport:
    """Check a cluster set against its document.

    Errors: out-of-bounds spans, exact duplicate mentions within a cluster,
    a mention span shared by two clusters, and cluster keys missing from the
    document's character index (anonymous keys are legal only for
    ``stage="prediction"``). Mention-category problems are warnings only:
    empty clusters, and pronoun spans in a ``stage="initialized"`` set
    (that stage holds explicit mentions). Finding order is deterministic.
    """
    errors: list[Finding] = []
    warnings: list[Finding] = []
    n = len(doc.tokens)
    seen_spans: dict[Mention, ClusterKey] = {}

    for key in cs.sorted_keys():
        ms = cs.clusters[key]
        loc_key = str(key)
        if cs.stage != "prediction" and (not isinstance(key, str) or key not in doc.characters):
            errors.append(
                Finding("unknown-character", loc_key, f"cluster key {key!r} not in document character index")
            )
        if not ms:
            warnings.append(Finding("empty-cluster", loc_key, "cluster has no mentions"))
        prev: Mention | None = None
        for m in ms:
            loc = f"{loc_key}:({m.start},{m.end})"
            if m.end >= n:
                errors.append(Finding("span-out-of-bounds", loc, f"span out of bounds for {n} tokens"))
            elif (
                cs.stage == "initialized"
                and m.start == m.end
                and doc.tokens[m.start].lower() in PRONOUNS
            ):
                warnings.append(Finding("pronoun-span", loc, "explicit-mention stage holds a pronoun span"))
            if prev is not None and m == prev:
                errors.append(Finding("duplicate-mention", loc, "exact duplicate mention within cluster"))
            elif m in seen_spans and seen_spans[m] != key:
                errors.append(
                    Finding(
                        "mention-in-multiple-clusters",
                        loc,
                        f"mention in two clusters ({seen_spans[m]!r} and {key!r})",
                    )
                )
            seen_spans.setdefault(m, key)
            prev = m

    return ValidationReport(tuple(errors), tuple(warnings))


def restrict(cs: ClusterSet, lo: int, hi: int) -> ClusterSet:
    """Keep exactly the mentions fully contained in the token range [lo, hi).

    Offsets stay in global coordinates. Clusters that become empty are kept
    as empty entries so character keys survive a later :func:`union`.
    """
    if lo < 0 or hi < lo:
        raise SpanRangeError(f"invalid restriction range [{lo}, {hi})")
    return ClusterSet(
        cs.doc_id,
        cs.stage,
        {key: tuple(m for m in ms if m.within(lo, hi)) for key, ms in cs.clusters.items()},
    )


def shift(cs: ClusterSet, delta: int) -> ClusterSet:
    """Translate every mention by ``delta`` tokens (re-basing helper)."""
    return ClusterSet(
        cs.doc_id,
        cs.stage,
        {key: tuple(m.shifted(delta) for m in ms) for key, ms in cs.clusters.items()},
    )


def union(parts: Sequence[ClusterSet]) -> ClusterSet:
    """Per-character set union of cluster sets from one document and stage.

    Idempotent and order-independent; the result's key set is the union of
    the parts' key sets.
    """
    if not parts:
        raise CompositionError("union of zero cluster sets")
    doc_id = parts[0].doc_id
    stage = parts[0].stage
    for p in parts[1:]:
        if p.doc_id != doc_id:
            raise CompositionError(f"union across documents {doc_id!r} and {p.doc_id!r}")
        if p.stage != stage:
            raise CompositionError(f"union across stages {stage!r} and {p.stage!r}")
    merged: dict[ClusterKey, set[Mention]] = {}
    order: dict[ClusterKey, None] = {}
    for p in parts:
        for key, ms in p.clusters.items():
            order.setdefault(key, None)
            merged.setdefault(key, set()).update(ms)
    return ClusterSet(doc_id, stage, {key: tuple(sorted(merged[key])) for key in order})
