import random

import pytest

from bookcoref.errors import ConfigError
from bookcoref.memsim import Policy, mention_stream, simulate, sweep, sweep_csv
from bookcoref.model import ClusterSet


class TestPolicy:
    def test_labels(self):
        assert Policy.unbounded().label() == "unbounded"
        assert Policy.lru(3).label() == "lru(3)"
        assert Policy.dual(25, 25).label() == "dual(25,25)"

    def test_validation(self):
        with pytest.raises(ConfigError):
            Policy.lru(0)
        with pytest.raises(ConfigError):
            Policy.dual(0, 25)
        Policy.dual(3, 0)  # zero G-cache is legal: degenerates to lru(3)
        with pytest.raises(ConfigError):
            Policy("weird")


class TestUnbounded:
    def test_never_evicts_never_forces(self):
        stream = ["A", "B", "A", "C", "B", "A"] * 50
        report = simulate(stream, Policy.unbounded())
        assert report.evictions == 0
        assert report.forced_errors == 0
        assert report.forced_error_rate == 0.0
        assert report.total_mentions == 300


class TestLru:
    def test_capacity_one_abab_hand_trace(self):
        """A:insert; B:insert evicts A; A:forced, evicts B; B:forced, evicts A."""
        report = simulate(["A", "B", "A", "B"], Policy.lru(1), keep_events=True)
        assert report.evictions == 3
        assert report.forced_errors == 2
        assert report.forced_error_rate == 0.5
        kinds = [e for _, e, _ in report.events]
        assert kinds == [
            "insert",
            "insert", "evict",
            "forced-miss", "insert", "evict",
            "forced-miss", "insert", "evict",
        ]

    def test_recency_updates_protect_hot_clusters(self):
        # A stays hot; C evicts B, not A
        report = simulate(["A", "B", "A", "C", "B"], Policy.lru(2))
        assert report.cluster_evictions == {"B": 1, "A": 1}
        assert report.forced_errors == 1  # the final B

    def test_first_occurrences_are_not_forced_errors(self):
        report = simulate(list("ABCDEFG"), Policy.lru(2))
        assert report.forced_errors == 0
        assert report.evictions == 5

    def test_determinism(self):
        rng = random.Random(4)
        stream = [rng.choice("ABCDEFHIJ") for _ in range(2000)]
        a = simulate(stream, Policy.lru(3), keep_events=True)
        b = simulate(stream, Policy.lru(3), keep_events=True)
        assert a == b


class TestDual:
    def test_equals_lru_when_g_cache_is_zero(self):
        rng = random.Random(8)
        for _ in range(50):
            stream = [rng.choice("ABCDEFGH") for _ in range(rng.randint(1, 400))]
            k = rng.randint(1, 5)
            a = simulate(stream, Policy.lru(k), keep_events=True)
            b = simulate(stream, Policy.dual(k, 0), keep_events=True)
            assert a.forced_errors == b.forced_errors
            assert a.evictions == b.evictions
            ev_a = [e for e in a.events]
            ev_b = [e for e in b.events if e[1] != "demote"]
            assert ev_a == ev_b

    def test_demotion_then_lfu_eviction(self):
        # L=1, G=1: A(f=1) in; B pushes A to G; C pushes B to G, which
        # overflows and evicts A (lowest frequency, least recent)
        report = simulate(["A", "A", "B", "C"], Policy.dual(1, 1), keep_events=True)
        assert report.cluster_evictions == {"B": 1}  # A has freq 2, B only 1
        assert report.evictions == 1

    def test_g_cache_hit_promotes_back_to_l(self):
        # A demoted to G by B, then hit in G: promoted, B demoted
        report = simulate(["A", "B", "A", "B"], Policy.dual(1, 1))
        assert report.forced_errors == 0
        assert report.evictions == 0

    def test_frequency_resets_after_eviction(self):
        stream = ["A"] * 5 + ["B", "C", "D", "E"] + ["A"] + ["B"]
        report = simulate(stream, Policy.dual(1, 1), keep_events=True)
        assert report.forced_errors >= 1
        arrivals = [c for _, e, c in report.events if e == "forced-miss"]
        assert "A" in arrivals or "B" in arrivals


class TestFromClusterSet:
    def test_stream_ordered_by_mention_start(self):
        cs = ClusterSet.build(
            "d", "gold", {"B": [(5, 5), (0, 1)], "A": [(2, 2), (9, 9)]}
        )
        assert mention_stream(cs) == ["B", "A", "B", "A"]

    def test_simulate_accepts_cluster_set(self):
        cs = ClusterSet.build("d", "gold", {"B": [(5, 5), (0, 1)], "A": [(2, 2), (9, 9)]})
        report = simulate(cs, Policy.lru(1))
        assert report.total_mentions == 4
        assert report.forced_errors == 2


class TestMonotonicity:
    def test_rates_non_increasing_in_capacity_on_random_streams(self):
        rng = random.Random(21)
        for _ in range(40):
            n_clusters = rng.randint(2, 12)
            stream = [rng.randrange(n_clusters) for _ in range(rng.randint(10, 600))]
            for policies in (
                [Policy.lru(k) for k in range(1, n_clusters + 2)],
                [Policy.dual(k, k) for k in range(1, n_clusters + 2)],
                [Policy.dual(k, 3) for k in range(1, n_clusters + 2)],
            ):
                rates = [simulate(stream, p).forced_error_rate for p in policies]
                assert all(a >= b - 1e-12 for a, b in zip(rates, rates[1:])), (stream, rates)

    def test_gold_books_capacity_sweep(self, gold_corpus):
        for rec in gold_corpus.records:
            stream = mention_stream(rec.cluster_sets["gold"])
            rates = [
                simulate(stream, Policy.lru(k)).forced_error_rate
                for k in (1, 2, 4, 8, 16, 32, 64)
            ]
            assert all(a >= b - 1e-12 for a, b in zip(rates, rates[1:]))


def test_sweep_csv_shape(gold_corpus):
    stream = mention_stream(gold_corpus.records[0].cluster_sets["gold"])
    results = sweep(stream, [Policy.lru(k) for k in (1, 2, 4)])
    csv = sweep_csv(results)
    lines = csv.strip().splitlines()
    assert lines[0].startswith("policy,capacity")
    assert len(lines) == 4
    assert lines[1].startswith("lru,1,")


def test_report_invariants(gold_corpus):
    gold = gold_corpus.records[0].cluster_sets["gold"]
    for policy in (Policy.unbounded(), Policy.lru(5), Policy.dual(5, 5)):
        report = simulate(gold, policy)
        assert report.forced_errors <= report.total_mentions
        assert report.total_mentions == gold.n_mentions
        if policy.kind == "unbounded":
            assert report.evictions == 0
