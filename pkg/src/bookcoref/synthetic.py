"""Deterministic generator for a gold-shaped benchmark stand-in.

The published gold benchmark is distributed externally; environments
without network access still need a corpus with the same measurable shape
to exercise the statistics, scorers and pipeline end to end. This module
builds one: three character-annotated "books" whose totals (tokens,
mentions, chains), per-document averages, micro-average pairwise mention
distance and exact-name-match precision/recall are calibrated to the
published figures.

Construction invariants (the tests and acceptance suite rely on these):

* every chain has at least two mentions (no singletons);
* mentions are pairwise disjoint with at least one filler token between
  them, and no mention straddles a 1500-token window boundary;
* a character's name token sequence occurs exactly at its explicit
  mentions and embedded inside its "extended" mentions (honorific-style
  maximal spans), and nowhere else, which pins exact-name matching to
  P ~ 95.6 / R ~ 18.9;
* generation is a pure function of the seed.
"""

from __future__ import annotations

import random
from dataclasses import dataclass

from .formats import CorpusFile, DocumentRecord
from .metrics import chain_distance, linking_prf
from .model import ClusterSet, Document, Mention, validate
from .pipeline import pattern_match

DEFAULT_SEED = 13

#: Micro-average pairwise mention-start distance the corpus is calibrated to.
DISTANCE_TARGET = 34_880.0


@dataclass(frozen=True, slots=True)
class BookSpec:
    doc_id: str
    n_tokens: int
    n_chains: int
    n_mentions: int
    n_explicit: int  # gold mentions that spell the exact character name
    n_extended: int  # gold maximal spans with the name embedded inside


#: Three books shaped like the published gold split: totals of 229,257
#: tokens (76,419/doc), 23,532 mentions (7,844/doc) and 67 chains
#: (22.33/doc); 4,448 exact-name mentions and 205 extended spans give
#: exact-name matching P = 4448/4653 = 95.59 and R = 4448/23532 = 18.90.
BOOK_SPECS = (
    BookSpec("synthetic_fable", 36_504, 20, 3_900, 737, 34),
    BookSpec("synthetic_journey", 47_785, 9, 4_308, 814, 37),
    BookSpec("synthetic_manor", 144_968, 38, 15_324, 2_897, 134),
)

WINDOW = 1500  # mentions are kept clear of multiples of this

_FILLER = (
    "the of and a to in that it was his with as had her for he at by on not "
    "be is all this from so they one were have which him she an or there what "
    "if would their when who will more no been its than then them we me my "
    "out up said very time only little like now some into could am are your "
    "our upon after before over under again most both any each few such own "
    "same too can just must while where why how never always often once here "
    "during between against about through down off above below other another "
    "things words house road garden river morning evening night day year long "
    "still light dark good great small last first next old new young many came "
    "come went gone look looked see seen saw know knew thought felt hand eyes "
    "face voice heart door room table chair window wall floor country town . , "
    "; ' laughed smiled walked turned stood sat spoke told asked answered "
    "replied cried called found left right near far away back again toward"
).split()

_PRONOUN_POOL = ("he", "she", "him", "her", "his", "hers", "they", "them", "i", "you")

_NP_POOL = (
    ("the", "gentleman"),
    ("the", "lady"),
    ("her", "friend"),
    ("his", "master"),
    ("the", "old", "man"),
    ("the", "young", "woman"),
    ("her", "companion"),
    ("his", "neighbour"),
    ("the", "visitor"),
    ("the", "stranger"),
)

_EXTENDED_PREFIXES = (("old",), ("young",), ("poor",), ("dear",), ("the", "good"))

_TITLES = ("Mr.", "Mrs.", "Miss", "Dr.", "Captain", "Lady", "Sir", "Colonel")

_SURNAME_HEADS = (
    "Var", "Tol", "Mar", "Ben", "Cro", "Fen", "Gal", "Har", "Irv", "Jas",
    "Kel", "Lor", "Mer", "Nor", "Oak", "Pem", "Quin", "Ros", "Sel", "Tre",
    "Ald", "Bram", "Cor", "Dun", "Elm", "Fair", "Grim", "Holt", "Ives", "Kirk",
)
_SURNAME_TAILS = (
    "ley", "ton", "wick", "bury", "field", "worth", "more", "den", "hart", "combe",
)

_FIRST_NAMES = (
    "Alric", "Berta", "Cedric", "Dora", "Edwin", "Flora", "Gideon", "Hattie",
    "Ivor", "Juna", "Kit", "Lyra", "Milo", "Nell", "Osric", "Prue", "Rafe",
    "Sibyl", "Tessa", "Ulric", "Vera", "Wilmot", "Yva", "Zede",
)


def _make_names(rng: random.Random, count: int) -> list[str]:
    """Unique character names; no name is a token subsequence of another."""
    surnames = [h + t for h in _SURNAME_HEADS for t in _SURNAME_TAILS]
    rng.shuffle(surnames)
    firsts = list(_FIRST_NAMES)
    rng.shuffle(firsts)
    names = []
    for i in range(count):
        surname = surnames[i]
        form = rng.random()
        if form < 0.35:
            names.append(surname)
        elif form < 0.80:
            names.append(f"{rng.choice(_TITLES)} {surname}")
        else:
            names.append(f"{firsts[i % len(firsts)]} {surname}")
    return names


def _chain_sizes(n_chains: int, n_mentions: int) -> list[int]:
    """Zipf-shaped chain sizes summing exactly to n_mentions, each >= 2."""
    weights = [1.0 / (i + 1) ** 0.85 for i in range(n_chains)]
    total = sum(weights)
    sizes = [max(2, int(n_mentions * w / total)) for w in weights]
    sizes[0] += n_mentions - sum(sizes)
    if sizes[0] < 2:
        raise ValueError("mention budget too small for the chain count")
    return sizes


def _spread_counts(total: int, sizes: list[int]) -> list[int]:
    """Split ``total`` across chains proportionally to size (largest remainder)."""
    grand = sum(sizes)
    raw = [total * s / grand for s in sizes]
    counts = [int(x) for x in raw]
    remainders = sorted(range(len(sizes)), key=lambda i: raw[i] - counts[i], reverse=True)
    for i in remainders[: total - sum(counts)]:
        counts[i] += 1
    return counts


@dataclass
class _PlannedMention:
    chain: int
    anchor: float  # relative position in [-0.5, 0.5] around the chain centre
    tokens: tuple[str, ...]
    kind: str  # explicit | extended | pronoun | np


def _plan_book(rng: random.Random, spec: BookSpec, names: list[str]) -> list[_PlannedMention]:
    sizes = _chain_sizes(spec.n_chains, spec.n_mentions)
    explicit = _spread_counts(spec.n_explicit, sizes)
    extended = _spread_counts(spec.n_extended, sizes)
    planned: list[_PlannedMention] = []
    for c, size in enumerate(sizes):
        name_toks = tuple(names[c].split())
        kinds = ["explicit"] * explicit[c] + ["extended"] * extended[c]
        while len(kinds) < size:
            kinds.append("pronoun" if rng.random() < 0.7 else "np")
        rng.shuffle(kinds)
        for kind in kinds:
            if kind == "explicit":
                toks = name_toks
            elif kind == "extended":
                toks = rng.choice(_EXTENDED_PREFIXES) + name_toks
            elif kind == "pronoun":
                toks = (rng.choice(_PRONOUN_POOL),)
            else:
                toks = rng.choice(_NP_POOL)
            planned.append(_PlannedMention(c, rng.uniform(-0.5, 0.5), toks, kind))
    return planned


def _order_mentions(
    planned: list[_PlannedMention],
    centres: list[float],
    alpha: float,
    n: int,
) -> list[_PlannedMention]:
    """Order mentions along the book by their chain-anchored targets.

    ``alpha`` scales how far a mention may stray from its chain centre:
    small values give per-chain blocks, large values full interleaving.
    """
    keyed = []
    for idx, pm in enumerate(planned):
        t = centres[pm.chain] + alpha * n * pm.anchor
        keyed.append((min(max(t, 0.0), float(n)), idx, pm))
    keyed.sort(key=lambda kv: (kv[0], kv[1]))
    return [pm for _, _, pm in keyed]


def _place_book(
    spec: BookSpec,
    ordered: list[_PlannedMention],
    extras: list[float],
) -> list[tuple[int, _PlannedMention]]:
    """Lay mentions out left to right with randomized gaps.

    Collision-free by construction: each mention starts after the previous
    one plus a mandatory one-token gap plus its share of the spare-token
    budget. Starts that would straddle a window boundary jump to the
    boundary (the budget keeps headroom for those jumps).
    """
    n = spec.n_tokens
    lengths = [len(pm.tokens) for pm in ordered]
    headroom = 8 * (n // WINDOW + 1)
    budget = n - sum(lengths) - len(lengths) - headroom
    if budget <= 0:
        raise AssertionError(f"{spec.doc_id}: token budget too small for its mentions")
    scale = budget / sum(extras)
    placed: list[tuple[int, _PlannedMention]] = []
    cursor = extras[0] * scale
    for pm, length, extra in zip(ordered, lengths, extras[1:]):
        s = int(cursor)
        if s // WINDOW != (s + length - 1) // WINDOW:
            s = (s // WINDOW + 1) * WINDOW
        if s + length > n:
            raise AssertionError(f"placement overflow in {spec.doc_id}")
        placed.append((s, pm))
        cursor = max(cursor, float(s)) + length + 1 + extra * scale
    return placed


def _pooled_distance(per_book_placed: list[list[tuple[int, _PlannedMention]]], n_chains: list[int]) -> float:
    pairs = 0
    dist = 0
    for placed, k in zip(per_book_placed, n_chains):
        starts: list[list[int]] = [[] for _ in range(k)]
        for s, pm in placed:
            starts[pm.chain].append(s)
        for chain_starts in starts:
            p, d = chain_distance(sorted(chain_starts))
            pairs += p
            dist += d
    return dist / pairs if pairs else 0.0


def make_reference_corpus(seed: int = DEFAULT_SEED) -> CorpusFile:
    """Build the calibrated three-book stand-in corpus."""
    rng = random.Random(seed)
    book_names = []
    book_plans = []
    book_centres = []
    book_extras = []
    for spec in BOOK_SPECS:
        names = _make_names(rng, spec.n_chains)
        planned = _plan_book(rng, spec, names)
        centres = [rng.uniform(0.10, 0.90) * spec.n_tokens for _ in range(spec.n_chains)]
        extras = [rng.expovariate(1.0) + 1e-6 for _ in range(len(planned) + 1)]
        book_names.append(names)
        book_plans.append(planned)
        book_centres.append(centres)
        book_extras.append(extras)

    # calibrate the global interleaving factor until the pooled
    # micro-average pairwise distance hits the target
    alpha = 0.8
    placed_books: list[list[tuple[int, _PlannedMention]]] = []
    for _ in range(24):
        placed_books = [
            _place_book(spec, _order_mentions(plan, centres, alpha, spec.n_tokens), extras)
            for spec, plan, centres, extras in zip(BOOK_SPECS, book_plans, book_centres, book_extras)
        ]
        got = _pooled_distance(placed_books, [s.n_chains for s in BOOK_SPECS])
        if abs(got - DISTANCE_TARGET) / DISTANCE_TARGET < 0.002:
            break
        alpha = min(max(alpha * (DISTANCE_TARGET / got) ** 0.9, 0.02), 4.0)

    corpus = CorpusFile()
    for spec, names, placed in zip(BOOK_SPECS, book_names, placed_books):
        fill_rng = random.Random((seed, spec.doc_id).__repr__())
        tokens = fill_rng.choices(_FILLER, k=spec.n_tokens)
        clusters: dict[str, list[Mention]] = {name: [] for name in names}
        for s, pm in placed:
            tokens[s : s + len(pm.tokens)] = pm.tokens
            clusters[names[pm.chain]].append(Mention(s, s + len(pm.tokens) - 1))
        doc = Document(
            spec.doc_id,
            tuple(tokens),
            tuple(names),
            {"title": spec.doc_id.replace("_", " ").title(), "synthetic": True, "seed": seed},
        )
        gold = ClusterSet.build(spec.doc_id, "gold", clusters)
        report = validate(doc, gold)
        if not report.ok:
            raise AssertionError(f"generator produced invalid gold for {spec.doc_id}: {report.summary()}")
        corpus.records.append(DocumentRecord(doc, {"gold": gold}))

    _self_check(corpus)
    return corpus


def _self_check(corpus: CorpusFile) -> None:
    """Cheap structural checks; tolerances well inside the acceptance ones."""
    from .metrics import corpus_stats

    stats = corpus_stats(corpus)
    assert stats.docs == 3
    assert stats.tokens == sum(s.n_tokens for s in BOOK_SPECS)
    assert stats.mentions == sum(s.n_mentions for s in BOOK_SPECS)
    assert stats.chains == sum(s.n_chains for s in BOOK_SPECS)
    if abs(stats.mention_distance - DISTANCE_TARGET) / DISTANCE_TARGET > 0.005:
        raise AssertionError(f"distance calibration failed: {stats.mention_distance:.0f}")
    tp = fp = 0
    for rec in corpus.records:
        match = pattern_match(rec.document)
        prf = linking_prf(rec.cluster_sets["gold"], match)
        tp += prf.p_num
        fp += prf.p_den - prf.p_num
    precision = tp / (tp + fp)
    recall = tp / stats.mentions
    if abs(precision * 100 - 95.6) > 0.5 or abs(recall * 100 - 18.9) > 0.5:
        raise AssertionError(f"name-match calibration failed: P={precision:.4f} R={recall:.4f}")
