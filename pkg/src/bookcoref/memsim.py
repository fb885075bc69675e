"""Replay simulator for incremental-coreference memory policies.

An incremental resolver keeps a working set of entity clusters; when a
cluster has been evicted, a later mention of it cannot be linked correctly
no matter how good the model is. Replaying a gold mention stream against a
policy therefore yields a structural lower bound on such a model's recall
errors ("forced errors").

Policies:

* ``unbounded``   - keep every cluster; never evicts.
* ``lru(k)``      - one cache of k clusters, least-recently-used eviction.
* ``dual(L, G)``  - a recency cache backed by a frequency cache. Any access
  promotes the cluster into the L-cache (updating recency); L overflow
  demotes L's least-recently-used cluster into the G-cache; G overflow
  evicts G's least-frequently-used cluster entirely (ties broken by least
  recency). Defaults: L = G = 25.

The dual policy is a fixed, deterministic rendering of a qualitatively
described mechanism (the original model chooses swaps with learned scores);
it is policy-shaped, not a model replica. ``dual(k, 0)`` degenerates to
``lru(k)``.
"""

from __future__ import annotations

from collections import Counter, OrderedDict
from dataclasses import dataclass
from typing import Hashable, Iterable, Sequence

from .errors import ConfigError
from .model import ClusterSet


@dataclass(frozen=True, slots=True)
class Policy:
    kind: str
    capacity: int = 0
    l_capacity: int = 25
    g_capacity: int = 25

    def __post_init__(self) -> None:
        if self.kind not in ("unbounded", "lru", "dual"):
            raise ConfigError(f"unknown policy kind {self.kind!r}")
        if self.kind == "lru" and self.capacity < 1:
            raise ConfigError("lru capacity must be >= 1")
        if self.kind == "dual" and (self.l_capacity < 1 or self.g_capacity < 0):
            raise ConfigError("dual needs l_capacity >= 1 and g_capacity >= 0")

    @classmethod
    def unbounded(cls) -> "Policy":
        return cls("unbounded")

    @classmethod
    def lru(cls, capacity: int) -> "Policy":
        return cls("lru", capacity=capacity)

    @classmethod
    def dual(cls, l_capacity: int = 25, g_capacity: int = 25) -> "Policy":
        return cls("dual", l_capacity=l_capacity, g_capacity=g_capacity)

    def label(self) -> str:
        if self.kind == "lru":
            return f"lru({self.capacity})"
        if self.kind == "dual":
            return f"dual({self.l_capacity},{self.g_capacity})"
        return "unbounded"


@dataclass(frozen=True, slots=True)
class SimReport:
    policy: str
    total_mentions: int
    evictions: int
    forced_errors: int
    forced_error_rate: float
    cluster_evictions: dict[Hashable, int]
    events: tuple[tuple[int, str, str], ...] | None = None

    def to_dict(self) -> dict:
        d = {
            "policy": self.policy,
            "total_mentions": self.total_mentions,
            "evictions": self.evictions,
            "forced_errors": self.forced_errors,
            "forced_error_rate": self.forced_error_rate,
            "cluster_evictions": {str(k): v for k, v in sorted(self.cluster_evictions.items(), key=lambda kv: str(kv[0]))},
        }
        if self.events is not None:
            d["events"] = [list(e) for e in self.events]
        return d


def mention_stream(gold: ClusterSet) -> list[Hashable]:
    """Cluster keys in order of mention arrival ((start, end) order)."""
    arrivals = [(m, key) for key, ms in gold.clusters.items() for m in ms]
    arrivals.sort(key=lambda t: (t[0], str(t[1])))
    return [key for _, key in arrivals]


def simulate(
    stream: ClusterSet | Sequence[Hashable],
    policy: Policy,
    keep_events: bool = False,
) -> SimReport:
    """Replay a mention stream against a memory policy.

    A mention of a resident cluster is a hit. A mention of a never-seen
    cluster inserts it (first occurrences are not errors). A mention of a
    previously evicted cluster is a forced error and re-inserts the cluster
    as new (frequency restarts).
    """
    keys: Sequence[Hashable] = mention_stream(stream) if isinstance(stream, ClusterSet) else stream
    seen: set[Hashable] = set()
    evictions = 0
    forced = 0
    per_cluster: Counter = Counter()
    events: list[tuple[int, str, str]] = []

    lcache: OrderedDict[Hashable, None] = OrderedDict()  # recency order, MRU last
    gcache: dict[Hashable, tuple[int, int]] = {}  # cluster -> (frequency, last access seq)
    freq: Counter = Counter()
    last_access: dict[Hashable, int] = {}
    unbounded: set[Hashable] = set()

    def note(seq: int, event: str, cluster: Hashable) -> None:
        if keep_events:
            events.append((seq, event, str(cluster)))

    def evict(seq: int, cluster: Hashable) -> None:
        nonlocal evictions
        evictions += 1
        per_cluster[cluster] += 1
        freq.pop(cluster, None)
        note(seq, "evict", cluster)

    for seq, c in enumerate(keys):
        if policy.kind == "unbounded":
            if c in unbounded:
                note(seq, "hit", c)
            else:
                unbounded.add(c)
                seen.add(c)
                note(seq, "insert", c)
            continue

        if policy.kind == "lru":
            if c in lcache:
                lcache.move_to_end(c)
                note(seq, "hit", c)
            else:
                if c in seen:
                    forced += 1
                    note(seq, "forced-miss", c)
                else:
                    seen.add(c)
                lcache[c] = None
                note(seq, "insert", c)
                while len(lcache) > policy.capacity:
                    victim, _ = lcache.popitem(last=False)
                    evict(seq, victim)
            continue

        # dual: promote-on-access L-cache over an LFU G-cache
        resident = c in lcache or c in gcache
        if resident:
            freq[c] += 1
            if c in gcache:
                del gcache[c]
            else:
                del lcache[c]
            lcache[c] = None
            note(seq, "hit", c)
        else:
            if c in seen:
                forced += 1
                note(seq, "forced-miss", c)
            else:
                seen.add(c)
            freq[c] = 1
            lcache[c] = None
            note(seq, "insert", c)
        last_access[c] = seq
        while len(lcache) > policy.l_capacity:
            demoted, _ = lcache.popitem(last=False)
            gcache[demoted] = (freq[demoted], last_access[demoted])
            note(seq, "demote", demoted)
            while len(gcache) > policy.g_capacity:
                victim = min(gcache, key=lambda k: (gcache[k][0], gcache[k][1]))
                del gcache[victim]
                evict(seq, victim)

    total = len(keys)
    return SimReport(
        policy=policy.label(),
        total_mentions=total,
        evictions=evictions,
        forced_errors=forced,
        forced_error_rate=forced / total if total else 0.0,
        cluster_evictions=dict(per_cluster),
        events=tuple(events) if keep_events else None,
    )


def sweep(
    stream: ClusterSet | Sequence[Hashable],
    policies: Iterable[Policy],
) -> list[tuple[Policy, SimReport]]:
    """Simulate the same stream under several policies (e.g. a capacity sweep)."""
    keys = mention_stream(stream) if isinstance(stream, ClusterSet) else list(stream)
    return [(p, simulate(keys, p)) for p in policies]


def sweep_csv(results: Sequence[tuple[Policy, SimReport]]) -> str:
    """Capacity-sweep table for plotting."""
    lines = ["policy,capacity,l_capacity,g_capacity,total,evictions,forced_errors,forced_error_rate"]
    for policy, report in results:
        lines.append(
            f"{policy.kind},{policy.capacity},{policy.l_capacity},{policy.g_capacity},"
            f"{report.total_mentions},{report.evictions},{report.forced_errors},"
            f"{report.forced_error_rate:.6f}"
        )
    return "\n".join(lines) + "\n"
