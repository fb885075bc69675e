"""Three-stage annotation pipeline: seed character clusters from explicit
mentions, filter them with a yes/no judge, then complete them window by
window and again over grouped windows, merging everything by per-character
union.

The neural annotators live behind three pluggable interfaces (:class:`Linker`,
:class:`Judge`, :class:`Expander`); this module ships deterministic reference
implementations (exact name matching, accept/reject judges, identity and
gold-oracle components) and :mod:`bookcoref.remote` provides HTTP-backed ones.

Hard contracts, enforced with errors rather than silent repair:

* linkers may only return spans in bounds and keys from the document's
  character index;
* expanders must preserve every seed mention (clusters only grow), stay
  inside their window, and may introduce mentions only for keys present in
  the seed map (empty-seeded keys included, so characters unseen in a window
  can be recovered at group level).
"""

from __future__ import annotations

import hashlib
import json
import time
from bisect import bisect_right
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Iterable, Mapping, Protocol, runtime_checkable

from .errors import ConfigError, ContractError, PlanningError, StageError, TransportError
from .model import (
    PRONOUNS,
    ClusterKey,
    ClusterSet,
    Document,
    Mention,
    restrict,
    shift,
    union,
)
from .windowing import GroupedWindowPlan, WindowPlan, plan_groups, plan_windows

#: Verbatim refinement prompt; the excerpt highlights the mention with [ ].
PROMPT_TEMPLATE = (
    "I will give you an excerpt from a book with a highlighted mention of a "
    "character with []. You will need to answer if the assigned character is "
    "correct (Yes), or not (No).\n"
    "\n"
    "Book excerpt: {book}\n"
    "\n"
    "Does the mention [{mention}] correspond to the character {character}? (Yes/No)"
)

DEFAULT_CONTEXT_WORDS = 400


@dataclass(frozen=True, slots=True)
class JudgeRequest:
    """One mention-validation question for the judge."""

    prompt: str
    doc_id: str
    mention: Mention
    character: str


@dataclass(frozen=True, slots=True)
class ExpandRequest:
    """One window (or grouped window) of text plus its window-local seeds."""

    doc_id: str
    lo: int
    hi: int
    tokens: tuple[str, ...]
    seeds: Mapping[ClusterKey, tuple[Mention, ...]]


@runtime_checkable
class Linker(Protocol):
    name: str

    def link(self, doc: Document) -> ClusterSet: ...


@runtime_checkable
class Judge(Protocol):
    name: str

    def judge(self, request: JudgeRequest) -> bool: ...


@runtime_checkable
class Expander(Protocol):
    name: str

    def expand(self, request: ExpandRequest) -> Mapping[ClusterKey, Iterable[Mention]]: ...


ALL_STAGES = ("init", "refine", "window", "group")


@dataclass(frozen=True)
class PipelineConfig:
    """Pipeline constants; defaults mirror the published procedure
    (1500-token windows, groups of 10, 400 context words)."""

    window_len: int = 1500
    group_size: int = 10
    judge_context_words: int = DEFAULT_CONTEXT_WORDS
    boundary_rule: str = "mention_safe"
    stages: tuple[str, ...] = ("init", "refine", "window", "group")
    jobs: int = 1
    retries: int = 2
    timeout: float = 30.0
    endpoints: Mapping[str, str] | None = None
    cache_dir: str | None = None

    def __post_init__(self) -> None:
        if self.window_len < 1 or self.group_size < 1 or self.judge_context_words < 1:
            raise ConfigError("window_len, group_size and judge_context_words must be positive")
        if self.jobs < 1:
            raise ConfigError("jobs must be >= 1")
        unknown = set(self.stages) - set(ALL_STAGES)
        if unknown:
            raise ConfigError(f"unknown pipeline stages {sorted(unknown)}")
        if "init" not in self.stages:
            raise ConfigError("the init stage cannot be disabled")
        if "group" in self.stages and "window" not in self.stages:
            raise ConfigError("the group stage requires the window stage")

    def config_hash(self) -> str:
        payload = {
            "window_len": self.window_len,
            "group_size": self.group_size,
            "judge_context_words": self.judge_context_words,
            "boundary_rule": self.boundary_rule,
            "stages": list(self.stages),
            "endpoints": dict(self.endpoints or {}),
        }
        return hashlib.sha256(json.dumps(payload, sort_keys=True).encode()).hexdigest()[:16]


@dataclass
class PipelineTrace:
    """Replayable record of one pipeline run."""

    doc_id: str
    config_hash: str
    components: dict[str, str] = field(default_factory=dict)
    stage_seconds: dict[str, float] = field(default_factory=dict)
    snapshots: dict[str, ClusterSet] = field(default_factory=dict)
    judge_verdicts: list[tuple[ClusterKey, Mention, bool]] = field(default_factory=list)
    window_records: list[dict] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)

    def to_dict(self) -> dict:
        return {
            "doc_id": self.doc_id,
            "config_hash": self.config_hash,
            "components": self.components,
            "stage_seconds": self.stage_seconds,
            "mention_counts": {name: cs.n_mentions for name, cs in self.snapshots.items()},
            "judge_verdicts": [
                [str(k), [m.start, m.end], v] for k, m, v in self.judge_verdicts
            ],
            "window_records": self.window_records,
            "warnings": self.warnings,
        }


def build_prompt(
    doc: Document,
    mention: Mention,
    character: str,
    context_words: int = DEFAULT_CONTEXT_WORDS,
) -> str:
    """Instantiate the refinement prompt for one mention.

    The excerpt carries ``context_words`` surrounding tokens, split evenly
    before and after the mention and clamped at document bounds; the mention
    itself is bracketed in the excerpt.
    """
    if mention.end >= len(doc.tokens):
        raise ContractError(f"mention ({mention.start},{mention.end}) out of bounds")
    half = context_words // 2
    before = doc.tokens[max(0, mention.start - half) : mention.start]
    after = doc.tokens[mention.end + 1 : mention.end + 1 + half]
    text = doc.text(mention)
    excerpt = " ".join(before)
    excerpt += (" [" if excerpt else "[") + text + "]"
    if after:
        excerpt += " " + " ".join(after)
    return PROMPT_TEMPLATE.format(book=excerpt, mention=text, character=character)


def pattern_match(doc: Document) -> ClusterSet:
    """Reference linker: case-sensitive exact token-sequence match of each
    full character name (whitespace-tokenized). Overlapping matches of the
    same character keep the leftmost; overlapping matches of different
    characters are all kept."""
    starts: dict[str, list[int]] = {}
    for i, tok in enumerate(doc.tokens):
        starts.setdefault(tok, []).append(i)
    clusters: dict[ClusterKey, list[Mention]] = {}
    for name in doc.characters:
        name_toks = tuple(name.split())
        length = len(name_toks)
        kept: list[Mention] = []
        last_end = -1
        for i in starts.get(name_toks[0], []):
            if tuple(doc.tokens[i : i + length]) == name_toks and i > last_end:
                kept.append(Mention(i, i + length - 1))
                last_end = i + length - 1
        clusters[name] = kept
    return ClusterSet.build(doc.doc_id, "initialized", clusters)


class PatternMatchLinker:
    name = "pattern"

    def link(self, doc: Document) -> ClusterSet:
        return pattern_match(doc)


class AcceptAllJudge:
    name = "accept-all"

    def judge(self, request: JudgeRequest) -> bool:
        return True


class RejectAllJudge:
    name = "reject-all"

    def judge(self, request: JudgeRequest) -> bool:
        return False


class IdentityExpander:
    name = "identity"

    def expand(self, request: ExpandRequest) -> Mapping[ClusterKey, Iterable[Mention]]:
        return request.seeds


def explicit_mentions(doc: Document, cs: ClusterSet) -> ClusterSet:
    """Drop single-token pronoun spans, keeping explicit mentions only."""
    kept = {
        key: tuple(
            m
            for m in ms
            if not (m.start == m.end and doc.tokens[m.start].lower() in PRONOUNS)
        )
        for key, ms in cs.clusters.items()
    }
    return ClusterSet(cs.doc_id, cs.stage, kept)


class OracleLinker:
    """Gold-derived linker: returns the gold clusters minus pronoun spans."""

    name = "oracle"

    def __init__(self, gold: ClusterSet):
        self._gold = gold

    def link(self, doc: Document) -> ClusterSet:
        return explicit_mentions(doc, self._gold).with_stage("initialized")


class OracleJudge:
    """Gold-derived judge: accepts exactly the (span, character) pairs
    present in gold."""

    name = "oracle"

    def __init__(self, gold: ClusterSet):
        self._pairs = gold.pairs()

    def judge(self, request: JudgeRequest) -> bool:
        return (request.mention, request.character) in self._pairs


class OracleExpander:
    """Gold-derived expander: returns gold restricted to the window,
    regardless of seeds (a perfect window-local annotator)."""

    name = "oracle"

    def __init__(self, gold: ClusterSet):
        self._gold = gold

    def expand(self, request: ExpandRequest) -> Mapping[ClusterKey, Iterable[Mention]]:
        window = shift(restrict(self._gold, request.lo, request.hi), -request.lo)
        return {key: window.clusters.get(key, ()) for key in request.seeds}


def initialize(
    doc: Document,
    linker: Linker,
    trace: PipelineTrace | None = None,
) -> ClusterSet:
    """Run the linker and validate its output into stage "initialized".

    Unknown character keys and out-of-bounds spans are contract errors;
    single-token pronoun spans are kept but recorded as warnings (linkers
    are supposed to return explicit mentions only).
    """
    out = linker.link(doc)
    n = len(doc.tokens)
    known = set(doc.characters)
    for key in out.clusters:
        if key not in known:
            raise ContractError(f"linker returned unknown character {key!r}")
    for key, m in out.mentions():
        if m.end >= n:
            raise ContractError(f"linker span ({m.start},{m.end}) out of bounds for {key!r}")
        if m.start == m.end and doc.tokens[m.start].lower() in PRONOUNS:
            msg = f"linker returned pronoun span ({m.start},{m.end}) {doc.tokens[m.start]!r} for {key!r}"
            if trace is not None:
                trace.warnings.append(msg)
    return ClusterSet(doc.doc_id, "initialized", dict(out.clusters))


def refine(
    doc: Document,
    cs: ClusterSet,
    judge: Judge,
    context_words: int = DEFAULT_CONTEXT_WORDS,
    retries: int = 2,
    trace: PipelineTrace | None = None,
) -> ClusterSet:
    """Keep each mention iff the judge accepts its prompt.

    Characters whose clusters empty out keep their (empty) entries. Judge
    transport failures are retried ``retries`` times, then surface as a
    stage error naming the mention.
    """
    if cs.stage != "initialized":
        raise StageError(f"refine expects stage 'initialized', got {cs.stage!r}")
    kept: dict[ClusterKey, tuple[Mention, ...]] = {}
    for key in cs.sorted_keys():
        accepted = []
        for m in cs.clusters[key]:
            prompt = build_prompt(doc, m, str(key), context_words)
            request = JudgeRequest(prompt, doc.doc_id, m, str(key))
            last_error: TransportError | None = None
            for _ in range(retries + 1):
                try:
                    verdict = judge.judge(request)
                    last_error = None
                    break
                except TransportError as e:
                    last_error = e
            if last_error is not None:
                raise StageError(
                    f"judge failed for mention ({m.start},{m.end}) of {key!r} "
                    f"after {retries} retries: {last_error}"
                ) from last_error
            if trace is not None:
                trace.judge_verdicts.append((key, m, verdict))
            if verdict:
                accepted.append(m)
        kept[key] = tuple(accepted)
    # judge in sorted order, store in the input's key order
    return ClusterSet(cs.doc_id, "refined", {k: kept[k] for k in cs.clusters})


def _expand_window(
    doc: Document,
    cs: ClusterSet,
    lo: int,
    hi: int,
    expander: Expander,
    target_stage: str,
) -> ClusterSet:
    seeds_local = shift(restrict(cs, lo, hi), -lo)
    request = ExpandRequest(doc.doc_id, lo, hi, doc.tokens[lo:hi], seeds_local.clusters)
    raw = expander.expand(request)
    width = hi - lo
    span_owner: dict[Mention, ClusterKey] = {}
    out: dict[ClusterKey, tuple[Mention, ...]] = {}
    for key in seeds_local.clusters:
        out[key] = ()
    for key, mentions in raw.items():
        if key not in seeds_local.clusters:
            raise ContractError(
                f"expander emitted unknown cluster key {key!r} in window [{lo},{hi})"
            )
        ms = set(mentions)
        for m in ms:
            if not (0 <= m.start and m.end < width):
                raise ContractError(
                    f"expander span ({m.start},{m.end}) outside window [{lo},{hi}) for {key!r}"
                )
            owner = span_owner.setdefault(m, key)
            if owner != key:
                raise ContractError(
                    f"expander placed span ({m.start},{m.end}) in clusters "
                    f"{owner!r} and {key!r} in window [{lo},{hi})"
                )
        missing = set(seeds_local.clusters[key]) - ms
        if missing:
            m = sorted(missing)[0]
            raise ContractError(
                f"expander dropped seed mention ({m.start + lo},{m.end + lo}) of {key!r} "
                f"in window [{lo},{hi})"
            )
        out[key] = tuple(sorted(ms))
    for key, seed_ms in seeds_local.clusters.items():
        if seed_ms and key not in raw:
            m = seed_ms[0]
            raise ContractError(
                f"expander dropped seed mention ({m.start + lo},{m.end + lo}) of {key!r} "
                f"in window [{lo},{hi})"
            )
    return shift(ClusterSet(cs.doc_id, target_stage, out), lo)


def expand_pass(
    doc: Document,
    cs: ClusterSet,
    plan: WindowPlan | GroupedWindowPlan,
    expander: Expander,
    jobs: int = 1,
    trace: PipelineTrace | None = None,
) -> ClusterSet:
    """One expansion sweep: restrict to each plan range, re-base, expand,
    verify the contracts, re-base back, and union across ranges.

    A window plan advances refined -> window_expanded; a grouped plan
    advances window_expanded -> final.
    """
    if isinstance(plan, GroupedWindowPlan):
        ranges = plan.groups
        expected, target = "window_expanded", "final"
        label = "group"
    else:
        ranges = plan.windows
        expected, target = "refined", "window_expanded"
        label = "window"
    if cs.stage != expected:
        raise StageError(f"{label} expansion expects stage {expected!r}, got {cs.stage!r}")
    # refuse plans that would silently lose boundary-crossing mentions
    starts = [lo for lo, _ in ranges]
    for key, m in cs.mentions():
        i = bisect_right(starts, m.start) - 1
        if i < 0 or not m.within(*ranges[i]):
            raise PlanningError(
                f"mention ({m.start},{m.end}) of {key!r} crosses a {label} boundary; "
                f"plan with boundary_rule='mention_safe' and this cluster set as guard"
            )

    def work(rng: tuple[int, int]) -> ClusterSet:
        return _expand_window(doc, cs, rng[0], rng[1], expander, target)

    if jobs > 1:
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            parts = list(pool.map(work, ranges))
    else:
        parts = [work(rng) for rng in ranges]

    if trace is not None:
        for rng, part in zip(ranges, parts):
            trace.window_records.append(
                {
                    "kind": label,
                    "range": list(rng),
                    "seeds": restrict(cs, rng[0], rng[1]).n_mentions,
                    "expanded": part.n_mentions,
                }
            )
    return union(parts)


def run(
    doc: Document,
    config: PipelineConfig,
    linker: Linker,
    judge: Judge,
    expander: Expander,
) -> tuple[ClusterSet, PipelineTrace]:
    """Full pipeline: initialize -> refine -> window expansion -> grouped
    expansion, with stages beyond init optional via ``config.stages``.

    Disabled stages advance the stage tag without calling their component,
    so ablation runs stay within the legal stage chain.
    """
    trace = PipelineTrace(doc.doc_id, config.config_hash())
    trace.components = {
        "linker": getattr(linker, "name", type(linker).__name__),
        "judge": getattr(judge, "name", type(judge).__name__),
        "expander": getattr(expander, "name", type(expander).__name__),
    }

    t0 = time.perf_counter()
    cs = initialize(doc, linker, trace)
    trace.stage_seconds["init"] = time.perf_counter() - t0
    trace.snapshots["initialized"] = cs

    if "refine" in config.stages:
        t0 = time.perf_counter()
        cs = refine(doc, cs, judge, config.judge_context_words, config.retries, trace)
        trace.stage_seconds["refine"] = time.perf_counter() - t0
        trace.snapshots["refined"] = cs
    elif "window" in config.stages:
        # stage tag still advances so the window-expansion gate holds
        cs = cs.advanced()

    if "window" in config.stages:
        t0 = time.perf_counter()
        guard = cs if config.boundary_rule == "mention_safe" else None
        plan = plan_windows(doc, config.window_len, config.boundary_rule, guard)
        cs = expand_pass(doc, cs, plan, expander, config.jobs, trace)
        trace.stage_seconds["window"] = time.perf_counter() - t0
        trace.snapshots["window_expanded"] = cs

        if "group" in config.stages:
            t0 = time.perf_counter()
            grouped = plan_groups(plan, config.group_size)
            cs = expand_pass(doc, cs, grouped, expander, config.jobs, trace)
            trace.stage_seconds["group"] = time.perf_counter() - t0
            trace.snapshots["final"] = cs

    return cs, trace
