"""Coreference scorers (MUC, B3, CEAF-phi4, CoNLL-F1), character-linking
P/R/F1, and corpus statistics.

Scoring conventions follow the standard shared-task reference scorer:

* MUC: link-based Vilain counting; mentions absent from the other side
  partition as implicit singletons.
* B3: per-mention overlap ratios; a mention unknown to the other side
  contributes a zero-overlap term to that side's mean.
* CEAF-phi4: phi4(K, R) = 2|K & R| / (|K| + |R|) under a globally optimal
  one-to-one cluster alignment (Kuhn-Munkres), not a greedy one.

Every scorer keeps its numerator/denominator pairs so corpus-level results
can pool counts across documents before dividing (micro); per-document
macro means are computed separately. All scorers are pure functions and are
sized for chains with tens of thousands of mentions: counting is O(total
mentions), never O(pairs).
"""

from __future__ import annotations

import math
from collections import Counter
from dataclasses import dataclass
from decimal import ROUND_HALF_UP, Decimal
from typing import Hashable, Iterable, Sequence

from scipy.optimize import linear_sum_assignment

from .errors import ContractError
from .formats import CorpusFile
from .model import ClusterSet

Clustering = Iterable[Iterable[Hashable]]


def pct(x: float) -> float:
    """Fraction -> percentage with one decimal, round-half-up."""
    return float(Decimal(str(x * 100.0)).quantize(Decimal("0.1"), rounding=ROUND_HALF_UP))


@dataclass(frozen=True, slots=True)
class PRF:
    """Precision/recall/F1 in [0, 1] plus the counts they came from."""

    precision: float
    recall: float
    f1: float
    p_num: float = 0.0
    p_den: float = 0.0
    r_num: float = 0.0
    r_den: float = 0.0

    @classmethod
    def from_counts(cls, p_num: float, p_den: float, r_num: float, r_den: float) -> "PRF":
        p = p_num / p_den if p_den > 0 else 0.0
        r = r_num / r_den if r_den > 0 else 0.0
        f1 = 2 * p * r / (p + r) if p + r > 0 else 0.0
        return cls(p, r, f1, p_num, p_den, r_num, r_den)

    def as_percentages(self) -> tuple[float, float, float]:
        return pct(self.precision), pct(self.recall), pct(self.f1)

    def to_dict(self) -> dict:
        return {
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
            "counts": [self.p_num, self.p_den, self.r_num, self.r_den],
        }


def _norm(clustering: Clustering | ClusterSet) -> list[frozenset]:
    if isinstance(clustering, ClusterSet):
        return [frozenset(p) for p in clustering.partition()]
    return [frozenset(c) for c in clustering]


def _mention_index(clusters: Sequence[frozenset]) -> dict[Hashable, int]:
    return {m: i for i, cluster in enumerate(clusters) for m in cluster}


def _vilain(clusters: Sequence[frozenset], other: dict[Hashable, int]) -> tuple[int, int]:
    num = den = 0
    for cluster in clusters:
        partitions = set()
        unaligned = 0
        for m in cluster:
            i = other.get(m)
            if i is None:
                unaligned += 1
            else:
                partitions.add(i)
        num += len(cluster) - unaligned - len(partitions)
        den += len(cluster) - 1
    return num, den


def muc(key: Clustering | ClusterSet, response: Clustering | ClusterSet) -> PRF:
    """Vilain et al. link-based metric."""
    k, r = _norm(key), _norm(response)
    r_num, r_den = _vilain(k, _mention_index(r))
    p_num, p_den = _vilain(r, _mention_index(k))
    return PRF.from_counts(p_num, p_den, r_num, r_den)


def _b3_side(clusters: Sequence[frozenset], other: dict[Hashable, int]) -> tuple[float, int]:
    num = 0.0
    den = 0
    for cluster in clusters:
        size = len(cluster)
        den += size
        counts = Counter(other.get(m) for m in cluster)
        counts.pop(None, None)
        # each of the c mentions shared with one other-side cluster sees
        # an intersection of size c, hence the c*c terms
        num += sum(c * c for c in counts.values()) / size
    return num, den


def b_cubed(key: Clustering | ClusterSet, response: Clustering | ClusterSet) -> PRF:
    """Bagga & Baldwin mention-based metric."""
    k, r = _norm(key), _norm(response)
    r_num, r_den = _b3_side(k, _mention_index(r))
    p_num, p_den = _b3_side(r, _mention_index(k))
    return PRF.from_counts(p_num, p_den, r_num, r_den)


def ceaf_phi4(key: Clustering | ClusterSet, response: Clustering | ClusterSet) -> PRF:
    """Luo's entity-alignment metric with the phi4 similarity."""
    k, r = _norm(key), _norm(response)
    if not k or not r:
        return PRF.from_counts(0.0, len(r), 0.0, len(k))
    r_index = _mention_index(r)
    overlaps: list[Counter] = []
    for cluster in k:
        counts = Counter(r_index.get(m) for m in cluster)
        counts.pop(None, None)
        overlaps.append(counts)
    sims = [[0.0] * len(r) for _ in k]
    for i, (cluster, counts) in enumerate(zip(k, overlaps)):
        row = sims[i]
        for j, c in counts.items():
            row[j] = 2.0 * c / (len(cluster) + len(r[j]))
    rows, cols = linear_sum_assignment(sims, maximize=True)
    total = float(sum(sims[i][j] for i, j in zip(rows, cols)))
    return PRF.from_counts(total, len(r), total, len(k))


@dataclass(frozen=True, slots=True)
class ScoreReport:
    """The three coreference metrics for one scoring unit, plus their mean."""

    muc: PRF
    b3: PRF
    ceaf: PRF
    conll_f1: float
    linking: PRF | None = None

    def to_dict(self) -> dict:
        d = {
            "muc": self.muc.to_dict(),
            "b3": self.b3.to_dict(),
            "ceaf_phi4": self.ceaf.to_dict(),
            "conll_f1": self.conll_f1,
        }
        if self.linking is not None:
            d["linking"] = self.linking.to_dict()
        return d

    def row(self) -> str:
        return (
            f"{pct(self.muc.f1):5.1f} {pct(self.b3.f1):5.1f} "
            f"{pct(self.ceaf.f1):5.1f} {pct(self.conll_f1):5.1f}"
        )


def _prepare(clustering: Clustering | ClusterSet, drop_singletons: bool) -> list[frozenset]:
    parts = [c for c in _norm(clustering) if c]
    if drop_singletons:
        parts = [c for c in parts if len(c) > 1]
    return parts


def conll(
    key: Clustering | ClusterSet,
    response: Clustering | ClusterSet,
    drop_singletons: bool = True,
    linking: PRF | None = None,
) -> ScoreReport:
    """Score all three metrics; CoNLL-F1 is exactly their arithmetic mean.

    Empty clusters are always dropped before scoring; singletons are dropped
    by default (the gold data has none, and the established scorer setup on
    singleton-free keys ignores predicted singletons).
    """
    k = _prepare(key, drop_singletons)
    r = _prepare(response, drop_singletons)
    m, b, c = muc(k, r), b_cubed(k, r), ceaf_phi4(k, r)
    return ScoreReport(m, b, c, (m.f1 + b.f1 + c.f1) / 3.0, linking)


def pool_reports(reports: Sequence[ScoreReport]) -> ScoreReport:
    """Micro pooling: sum numerators/denominators across units, then divide.

    Uses exactly-rounded summation so pooling is bit-for-bit invariant
    under unit reordering.
    """

    def pooled(prfs: Sequence[PRF]) -> PRF:
        return PRF.from_counts(
            math.fsum(x.p_num for x in prfs),
            math.fsum(x.p_den for x in prfs),
            math.fsum(x.r_num for x in prfs),
            math.fsum(x.r_den for x in prfs),
        )

    m = pooled([r.muc for r in reports])
    b = pooled([r.b3 for r in reports])
    c = pooled([r.ceaf for r in reports])
    link = None
    if reports and all(r.linking is not None for r in reports):
        link = pooled([r.linking for r in reports])  # type: ignore[list-item]
    return ScoreReport(m, b, c, (m.f1 + b.f1 + c.f1) / 3.0, link)


def macro_reports(reports: Sequence[ScoreReport]) -> ScoreReport:
    """Macro averaging: plain means of per-unit P/R/F1 (counts not carried)."""

    def mean(xs: Sequence[float]) -> float:
        return sum(xs) / len(xs) if xs else 0.0

    def avg(prfs: Sequence[PRF]) -> PRF:
        return PRF(
            mean([x.precision for x in prfs]),
            mean([x.recall for x in prfs]),
            mean([x.f1 for x in prfs]),
        )

    m = avg([r.muc for r in reports])
    b = avg([r.b3 for r in reports])
    c = avg([r.ceaf for r in reports])
    return ScoreReport(m, b, c, mean([r.conll_f1 for r in reports]))


def linking_prf(key: ClusterSet, response: ClusterSet) -> PRF:
    """Character-linking score over (span, character) pairs.

    A predicted pair is a true positive iff the identical pair (exact span,
    same character) exists in the key. Both sets must be character-keyed.
    """
    if any(not isinstance(k, str) for k in response.clusters):
        raise ContractError("linking requires character-keyed response clusters, got anonymous keys")
    if any(not isinstance(k, str) for k in key.clusters):
        raise ContractError("linking requires character-keyed key clusters, got anonymous keys")
    key_pairs = key.pairs()
    resp_pairs = response.pairs()
    tp = len(key_pairs & resp_pairs)
    return PRF.from_counts(tp, len(resp_pairs), tp, len(key_pairs))


def chain_distance(positions: Sequence[int]) -> tuple[int, int]:
    """Pair count and summed pairwise distance for one chain.

    ``positions`` are mention start offsets sorted ascending. Computes
    sum_{i<j}(p_j - p_i) in O(k) via prefix weighting, bit-identical to the
    quadratic double loop. Fewer than two positions yield (0, 0).
    """
    k = len(positions)
    if k < 2:
        return (0, 0)
    total = 0
    w = 1 - k
    for p in positions:
        total += p * w
        w += 2
    return (k * (k - 1) // 2, total)


@dataclass(frozen=True, slots=True)
class CorpusStats:
    """Corpus totals and averages in the shape of the benchmark table.

    ``mentions_per_chain`` pools mentions and chains over the whole corpus
    before dividing (micro); ``mentions_per_chain_macro`` averages the
    per-document ratios. ``mention_distance`` is the micro-average pairwise
    token distance between same-chain mention starts.
    """

    docs: int
    tokens: int
    mentions: int
    chains: int
    tokens_per_doc: float
    mentions_per_doc: float
    chains_per_doc: float
    mentions_per_chain: float
    mentions_per_chain_macro: float
    mention_distance: float
    mention_pairs: int

    def to_dict(self) -> dict:
        return {
            "docs": self.docs,
            "tokens": self.tokens,
            "mentions": self.mentions,
            "chains": self.chains,
            "tokens_per_doc": self.tokens_per_doc,
            "mentions_per_doc": self.mentions_per_doc,
            "chains_per_doc": self.chains_per_doc,
            "mentions_per_chain": self.mentions_per_chain,
            "mentions_per_chain_macro": self.mentions_per_chain_macro,
            "mention_distance": self.mention_distance,
            "mention_pairs": self.mention_pairs,
        }

    def to_table(self) -> str:
        head = (
            "Docs", "Tok.", "Ment.", "Tok./Doc", "Ment./Doc",
            "Chains/Doc", "Ment./Chain", "Ment./Chain(doc)", "Ment. Dist.",
        )
        row = (
            f"{self.docs}",
            f"{self.tokens}",
            f"{self.mentions}",
            f"{self.tokens_per_doc:.0f}",
            f"{self.mentions_per_doc:.0f}",
            f"{self.chains_per_doc:.1f}",
            f"{self.mentions_per_chain:.1f}",
            f"{self.mentions_per_chain_macro:.1f}",
            f"{self.mention_distance:.0f}",
        )
        widths = [max(len(h), len(v)) for h, v in zip(head, row)]
        return (
            "  ".join(h.rjust(w) for h, w in zip(head, widths))
            + "\n"
            + "  ".join(v.rjust(w) for v, w in zip(row, widths))
        )


def corpus_stats(corpus: CorpusFile, clusters_from: str = "gold") -> CorpusStats:
    """Totals, per-document means, and micro-averaged chain statistics."""
    docs = len(corpus.records)
    tokens = 0
    mentions = 0
    chains = 0
    pair_count = 0
    dist_sum = 0
    per_doc_ratio: list[float] = []
    for rec in corpus.records:
        tokens += len(rec.document.tokens)
        cs = rec.cluster_sets.get(clusters_from)
        if cs is None and rec.cluster_sets:
            cs = rec.only()
        if cs is None:
            continue
        doc_mentions = 0
        doc_chains = 0
        for _, ms in cs.clusters.items():
            if not ms:
                continue
            doc_chains += 1
            doc_mentions += len(ms)
            pairs, dist = chain_distance([m.start for m in ms])
            pair_count += pairs
            dist_sum += dist
        mentions += doc_mentions
        chains += doc_chains
        if doc_chains:
            per_doc_ratio.append(doc_mentions / doc_chains)
    return CorpusStats(
        docs=docs,
        tokens=tokens,
        mentions=mentions,
        chains=chains,
        tokens_per_doc=tokens / docs if docs else 0.0,
        mentions_per_doc=mentions / docs if docs else 0.0,
        chains_per_doc=chains / docs if docs else 0.0,
        mentions_per_chain=mentions / chains if chains else 0.0,
        mentions_per_chain_macro=sum(per_doc_ratio) / len(per_doc_ratio) if per_doc_ratio else 0.0,
        mention_distance=dist_sum / pair_count if pair_count else 0.0,
        mention_pairs=pair_count,
    )
