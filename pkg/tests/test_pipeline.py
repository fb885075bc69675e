import pytest

from bookcoref.errors import ConfigError, ContractError, PlanningError, StageError, TransportError
from bookcoref.metrics import conll, linking_prf
from bookcoref.model import ClusterSet, Document, Mention, restrict, shift
from bookcoref.pipeline import (
    AcceptAllJudge,
    IdentityExpander,
    OracleExpander,
    OracleJudge,
    OracleLinker,
    PatternMatchLinker,
    PipelineConfig,
    RejectAllJudge,
    build_prompt,
    expand_pass,
    explicit_mentions,
    initialize,
    pattern_match,
    refine,
    run,
)
from bookcoref.windowing import plan_groups, plan_windows


def make_doc(n=40, doc_id="d", characters=("Mr. Darcy", "Jane")):
    tokens = [f"w{i}" for i in range(n)]
    return Document(doc_id, tuple(tokens), characters)


class TestBuildPrompt:
    DOC = Document("d", tuple(f"t{i}" for i in range(1000)), ("X",))

    def test_contains_the_fixed_instruction_sentence(self):
        prompt = build_prompt(self.DOC, Mention(500, 500), "X")
        assert (
            "You will need to answer if the assigned character is correct (Yes), or not (No)."
            in prompt
        )
        assert prompt.endswith("Does the mention [t500] correspond to the character X? (Yes/No)")

    def test_mention_bracketed_with_symmetric_context(self):
        prompt = build_prompt(self.DOC, Mention(500, 501), "X", context_words=10)
        excerpt = prompt.split("Book excerpt: ")[1].split("\n")[0]
        assert excerpt == "t495 t496 t497 t498 t499 [t500 t501] t502 t503 t504 t505 t506"

    def test_clamped_at_document_start(self):
        prompt = build_prompt(self.DOC, Mention(0, 0), "X", context_words=10)
        excerpt = prompt.split("Book excerpt: ")[1].split("\n")[0]
        assert excerpt.startswith("[t0]")

    def test_clamped_at_document_end(self):
        prompt = build_prompt(self.DOC, Mention(999, 999), "X", context_words=10)
        excerpt = prompt.split("Book excerpt: ")[1].split("\n")[0]
        assert excerpt.endswith("[t999]")

    def test_identical_surroundings_identical_prompts(self):
        doc = Document("d", ("a", "b", "c", "x", "a", "b", "c", "x"), ("X",))
        p1 = build_prompt(doc, Mention(1, 1), "X", context_words=2)
        p2 = build_prompt(doc, Mention(5, 5), "X", context_words=2)
        assert p1 == p2


class TestPatternMatch:
    def test_exact_name_match(self):
        doc = Document("d", ("Mr.", "Darcy", "smiled"), ("Mr. Darcy",))
        cs = pattern_match(doc)
        assert cs.clusters["Mr. Darcy"] == (Mention(0, 1),)
        assert cs.stage == "initialized"

    def test_two_occurrences(self):
        doc = Document("d", ("Darcy", ",", "said", "Darcy"), ("Darcy",))
        assert pattern_match(doc).clusters["Darcy"] == (Mention(0, 0), Mention(3, 3))

    def test_full_name_rule_no_partial_match(self):
        doc = Document("d", ("only", "Darcy", "here"), ("Mr. Darcy",))
        assert pattern_match(doc).clusters["Mr. Darcy"] == ()

    def test_case_sensitive(self):
        doc = Document("d", ("darcy",), ("Darcy",))
        assert pattern_match(doc).clusters["Darcy"] == ()

    def test_overlapping_matches_of_different_characters_both_kept(self):
        doc = Document("d", ("Mr.", "Darcy",), ("Mr. Darcy", "Darcy"))
        cs = pattern_match(doc)
        assert cs.clusters["Mr. Darcy"] == (Mention(0, 1),)
        assert cs.clusters["Darcy"] == (Mention(1, 1),)

    def test_overlapping_matches_of_same_character_deduplicated(self):
        doc = Document("d", ("a", "a", "a"), ("a a",))
        assert pattern_match(doc).clusters["a a"] == (Mention(0, 1),)


class TestInitialize:
    def test_pattern_linker_end_to_end(self):
        doc = Document("d", ("Mr.", "Darcy", "smiled"), ("Mr. Darcy",))
        cs = initialize(doc, PatternMatchLinker())
        assert cs.stage == "initialized"
        assert cs.clusters["Mr. Darcy"] == (Mention(0, 1),)

    def test_empty_linker_output_is_legal(self):
        class EmptyLinker:
            name = "empty"

            def link(self, doc):
                return ClusterSet.build(doc.doc_id, "initialized", {})

        cs = initialize(make_doc(), EmptyLinker())
        assert cs.n_mentions == 0

    def test_unknown_character_is_contract_error(self):
        class BadLinker:
            name = "bad"

            def link(self, doc):
                return ClusterSet.build(doc.doc_id, "initialized", {"Wickham": [(0, 0)]})

        with pytest.raises(ContractError, match="unknown character"):
            initialize(make_doc(), BadLinker())

    def test_out_of_bounds_span_is_contract_error(self):
        class BadLinker:
            name = "bad"

            def link(self, doc):
                return ClusterSet.build(doc.doc_id, "initialized", {"Jane": [(0, 999)]})

        with pytest.raises(ContractError, match="out of bounds"):
            initialize(make_doc(), BadLinker())

    def test_pronoun_span_kept_with_warning(self):
        doc = Document("d", ("she", "smiled"), ("Jane",))

        class PronounLinker:
            name = "pronoun"

            def link(self, doc):
                return ClusterSet.build(doc.doc_id, "initialized", {"Jane": [(0, 0)]})

        from bookcoref.pipeline import PipelineTrace

        trace = PipelineTrace("d", "x")
        cs = initialize(doc, PronounLinker(), trace)
        assert cs.clusters["Jane"] == (Mention(0, 0),)
        assert any("pronoun" in w for w in trace.warnings)

    def test_oracle_linker_returns_gold_minus_pronouns(self, gold_corpus):
        rec = gold_corpus.records[0]
        gold = rec.cluster_sets["gold"]
        cs = initialize(rec.document, OracleLinker(gold))
        assert cs.clusters == explicit_mentions(rec.document, gold).clusters
        assert 0 < cs.n_mentions < gold.n_mentions
        # explicit mentions only: no single-token pronoun spans survive
        from bookcoref.model import PRONOUNS

        for _, m in cs.mentions():
            if m.start == m.end:
                assert rec.document.tokens[m.start].lower() not in PRONOUNS


class TestRefine:
    DOC = Document("d", ("Darcy", "smiled", "at", "Bingley"), ("Darcy", "Bingley"))
    INIT = ClusterSet.build(
        "d", "initialized", {"Darcy": [(0, 0)], "Bingley": [(3, 3)]}
    )

    def test_accept_all_is_identity(self):
        out = refine(self.DOC, self.INIT, AcceptAllJudge())
        assert out.clusters == self.INIT.clusters
        assert out.stage == "refined"

    def test_reject_all_empties_every_cluster_but_keeps_keys(self):
        out = refine(self.DOC, self.INIT, RejectAllJudge())
        assert set(out.keys()) == {"Darcy", "Bingley"}
        assert out.n_mentions == 0

    def test_requires_initialized_stage(self):
        with pytest.raises(StageError):
            refine(self.DOC, self.INIT.with_stage("gold"), AcceptAllJudge())

    def test_transport_failure_retries_then_stage_error(self):
        calls = []

        class FlakyJudge:
            name = "flaky"

            def judge(self, request):
                calls.append(request.mention)
                raise TransportError("boom")

        # keys are judged in sorted order, so Bingley's mention comes first
        with pytest.raises(StageError, match=r"mention \(3,3\) of 'Bingley' after 2 retries"):
            refine(self.DOC, self.INIT, FlakyJudge(), retries=2)
        assert len(calls) == 3  # initial try plus two retries

    def test_transient_failure_recovers(self):
        attempts = {"n": 0}

        class OnceFlaky:
            name = "once"

            def judge(self, request):
                attempts["n"] += 1
                if attempts["n"] == 1:
                    raise TransportError("first call fails")
                return True

        out = refine(self.DOC, self.INIT, OnceFlaky(), retries=1)
        assert out.clusters == self.INIT.clusters

    def test_filtering_noise_raises_linking_precision(self):
        """A judge that rejects mentions whose text differs from the
        character's surname must not lower precision on a corpus with
        injected wrong links."""
        tokens = ("Darcy", "went", "Bingley", "came", "Darcy", "left", "Bingley", "again")
        doc = Document("noisy", tokens, ("Darcy", "Bingley"))
        gold = ClusterSet.build(
            "noisy", "gold", {"Darcy": [(0, 0), (4, 4)], "Bingley": [(2, 2), (6, 6)]}
        )
        # linker output with two wrong links injected
        noisy = ClusterSet.build(
            "noisy",
            "initialized",
            {"Darcy": [(0, 0), (2, 2), (4, 4)], "Bingley": [(4, 4), (6, 6)]},
        )

        class SurnameJudge:
            name = "surname"

            def judge(self, request):
                mention_text = request.prompt.rsplit("Does the mention [", 1)[1].split("]")[0]
                return mention_text == request.character

        refined = refine(doc, noisy, SurnameJudge())
        before = linking_prf(gold, noisy.with_stage("prediction")).precision
        after = linking_prf(gold, refined.with_stage("prediction")).precision
        assert after >= before
        assert after == 1.0

    def test_verdicts_recorded_in_trace(self):
        from bookcoref.pipeline import PipelineTrace

        trace = PipelineTrace("d", "x")
        refine(self.DOC, self.INIT, AcceptAllJudge(), trace=trace)
        assert len(trace.judge_verdicts) == 2
        assert all(v is True for _, _, v in trace.judge_verdicts)


def gold_small():
    """20-token, 2-window document with pronouns and names."""
    tokens = (
        "Ann", "saw", "her", "dog", "by", "the", "road", "and", "Ben", "waved",
        "then", "she", "met", "Ben", "near", "his", "house", "at", "noon", ".",
    )
    doc = Document("small", tokens, ("Ann", "Ben"))
    gold = ClusterSet.build(
        "small",
        "gold",
        {"Ann": [(0, 0), (2, 2), (11, 11)], "Ben": [(8, 8), (13, 13), (15, 15)]},
    )
    return doc, gold


class TestExpandPass:
    def test_identity_expander_preserves_clusters(self):
        doc, gold = gold_small()
        cs = explicit_mentions(doc, gold).with_stage("refined")
        plan = plan_windows(doc, 10, "strict")
        out = expand_pass(doc, cs, plan, IdentityExpander())
        assert out.stage == "window_expanded"
        assert out.clusters == cs.clusters

    def test_oracle_closure_window_and_group(self):
        doc, gold = gold_small()
        cs = explicit_mentions(doc, gold).with_stage("refined")
        plan = plan_windows(doc, 10, "strict")
        out = expand_pass(doc, cs, plan, OracleExpander(gold))
        assert out.clusters == gold.clusters
        grouped = plan_groups(plan, 2)
        final = expand_pass(doc, out, grouped, OracleExpander(gold))
        assert final.stage == "final"
        assert final.clusters == gold.clusters

    def test_stage_gates(self):
        doc, gold = gold_small()
        plan = plan_windows(doc, 10, "strict")
        with pytest.raises(StageError):
            expand_pass(doc, gold, plan, IdentityExpander())
        grouped = plan_groups(plan, 2)
        refined = explicit_mentions(doc, gold).with_stage("refined")
        with pytest.raises(StageError):
            expand_pass(doc, refined, grouped, IdentityExpander())

    def test_dropped_seed_is_contract_violation_naming_window_and_mention(self):
        doc, gold = gold_small()
        cs = explicit_mentions(doc, gold).with_stage("refined")

        class DropsOne:
            name = "drops"

            def expand(self, request):
                out = {k: list(ms) for k, ms in request.seeds.items()}
                for k, ms in out.items():
                    if ms:
                        ms.pop()
                        break
                return out

        plan = plan_windows(doc, 10, "strict")
        with pytest.raises(ContractError, match=r"dropped seed mention \(\d+,\d+\) of .* in window"):
            expand_pass(doc, cs, plan, DropsOne())

    def test_omitting_a_seeded_key_is_also_a_drop(self):
        doc, gold = gold_small()
        cs = explicit_mentions(doc, gold).with_stage("refined")

        class OmitsKey:
            name = "omits"

            def expand(self, request):
                return {k: ms for k, ms in request.seeds.items() if not ms or k != "Ann"}

        plan = plan_windows(doc, 10, "strict")
        with pytest.raises(ContractError, match="dropped seed mention"):
            expand_pass(doc, cs, plan, OmitsKey())

    def test_out_of_window_span_rejected(self):
        doc, gold = gold_small()
        cs = explicit_mentions(doc, gold).with_stage("refined")

        class Overflows:
            name = "overflow"

            def expand(self, request):
                out = {k: list(ms) for k, ms in request.seeds.items()}
                out["Ann"] = list(out["Ann"]) + [Mention(request.hi - request.lo, request.hi - request.lo)]
                return out

        plan = plan_windows(doc, 10, "strict")
        with pytest.raises(ContractError, match="outside window"):
            expand_pass(doc, cs, plan, Overflows())

    def test_unknown_key_rejected(self):
        doc, gold = gold_small()
        cs = explicit_mentions(doc, gold).with_stage("refined")

        class Invents:
            name = "invents"

            def expand(self, request):
                out = dict(request.seeds)
                out["Ghost"] = [Mention(0, 0)]
                return out

        plan = plan_windows(doc, 10, "strict")
        with pytest.raises(ContractError, match="unknown cluster key"):
            expand_pass(doc, cs, plan, Invents())

    def test_same_span_in_two_clusters_rejected(self):
        doc, gold = gold_small()
        cs = explicit_mentions(doc, gold).with_stage("refined")

        class DoubleBooks:
            name = "doublebooks"

            def expand(self, request):
                out = {k: list(ms) for k, ms in request.seeds.items()}
                out["Ann"] = list(out["Ann"]) + [Mention(5, 5)]
                out["Ben"] = list(out["Ben"]) + [Mention(5, 5)]
                return out

        plan = plan_windows(doc, 10, "strict")
        with pytest.raises(ContractError, match="in clusters"):
            expand_pass(doc, cs, plan, DoubleBooks())

    def test_character_with_zero_seeds_recoverable_at_group_level(self):
        """A character unseen in one window is absent from that window's
        expansion but comes back in the grouped pass (the wider-context
        recovery the grouping step exists for)."""
        doc, gold = gold_small()

        class SeededOnlyOracle:
            """Window-local annotator that can only expand clusters it has
            at least one seed for."""

            name = "seeded-only"

            def __init__(self, gold):
                self._gold = gold

            def expand(self, request):
                window = shift(restrict(self._gold, request.lo, request.hi), -request.lo)
                return {
                    k: (window.clusters.get(k, ()) if request.seeds[k] else ())
                    for k in request.seeds
                }

        # Ben has no explicit seed in window 1 (tokens 0-9 hold only "Ben"@8,
        # drop it to create the gap), Ann has no seed in window 2
        seeds = ClusterSet.build("small", "refined", {"Ann": [(0, 0)], "Ben": [(13, 13)]})
        plan = plan_windows(doc, 10, "strict")
        expander = SeededOnlyOracle(gold)
        after_windows = expand_pass(doc, seeds, plan, expander)
        # window pass: Ben missing from window 1, Ann missing from window 2
        assert Mention(8, 8) not in after_windows.clusters["Ben"]
        assert Mention(11, 11) not in after_windows.clusters["Ann"]
        grouped = plan_groups(plan, 2)
        final = expand_pass(doc, after_windows, grouped, expander)
        assert final.clusters == gold.clusters

    def test_boundary_crossing_input_mention_is_refused_loudly(self):
        """A strict plan that would silently lose a boundary-crossing seed
        is rejected instead (mention_safe planning avoids the situation)."""
        doc, _ = gold_small()
        cs = ClusterSet.build("small", "refined", {"Ann": [(9, 10)], "Ben": []})
        strict = plan_windows(doc, 10, "strict")
        with pytest.raises(PlanningError, match=r"\(9,10\) of 'Ann' crosses"):
            expand_pass(doc, cs, strict, IdentityExpander())
        safe = plan_windows(doc, 10, "mention_safe", guard=cs)
        out = expand_pass(doc, cs, safe, IdentityExpander())
        assert out.clusters == cs.clusters

    def test_window_order_independence_via_parallel_jobs(self):
        doc, gold = gold_small()
        cs = explicit_mentions(doc, gold).with_stage("refined")
        plan = plan_windows(doc, 5, "strict")
        serial = expand_pass(doc, cs, plan, OracleExpander(gold), jobs=1)
        parallel = expand_pass(doc, cs, plan, OracleExpander(gold), jobs=4)
        assert serial == parallel

    def test_monotone_growth_through_expansion(self):
        doc, gold = gold_small()
        cs = explicit_mentions(doc, gold).with_stage("refined")
        plan = plan_windows(doc, 10, "strict")
        out = expand_pass(doc, cs, plan, OracleExpander(gold))
        assert out.n_mentions >= cs.n_mentions


class TestRun:
    def test_all_reference_components_reduce_to_pattern_links(self):
        doc, _ = gold_small()
        config = PipelineConfig(window_len=10, group_size=2)
        final, trace = run(doc, config, PatternMatchLinker(), AcceptAllJudge(), IdentityExpander())
        assert final.stage == "final"
        assert final.clusters == pattern_match(doc).clusters
        assert trace.components == {"linker": "pattern", "judge": "accept-all", "expander": "identity"}

    def test_oracle_components_reproduce_gold(self, gold_corpus):
        rec = gold_corpus.records[1]
        gold = rec.cluster_sets["gold"]
        config = PipelineConfig()
        final, _ = run(rec.document, config, OracleLinker(gold), OracleJudge(gold), OracleExpander(gold))
        assert conll(gold, final).conll_f1 == 1.0

    def test_seven_ablation_configurations(self):
        """Every stage subset behind the published ablation rows runs and
        lands in the right stage."""
        doc, gold = gold_small()
        rows = {
            ("init",): "initialized",
            ("init", "refine"): "refined",
            ("init", "window"): "window_expanded",
            ("init", "refine", "window"): "window_expanded",
            ("init", "window", "group"): "final",
            ("init", "refine", "window", "group"): "final",
        }
        for linker in (PatternMatchLinker(), OracleLinker(gold)):
            for stages, want_stage in rows.items():
                config = PipelineConfig(window_len=10, group_size=2, stages=stages)
                final, _ = run(doc, config, linker, OracleJudge(gold), OracleExpander(gold))
                assert final.stage == want_stage, (linker.name, stages)

    def test_group_without_window_rejected(self):
        with pytest.raises(ConfigError):
            PipelineConfig(stages=("init", "group"))

    def test_refine_disabled_advances_stage_without_judging(self):
        doc, gold = gold_small()
        calls = []

        class CountingJudge:
            name = "counting"

            def judge(self, request):
                calls.append(request)
                return True

        config = PipelineConfig(window_len=10, group_size=2, stages=("init", "window"))
        run(doc, config, OracleLinker(gold), CountingJudge(), OracleExpander(gold))
        assert calls == []

    def test_rerun_is_bit_identical(self, gold_corpus):
        rec = gold_corpus.records[0]
        gold = rec.cluster_sets["gold"]
        config = PipelineConfig(jobs=2)

        def one_run():
            final, trace = run(
                rec.document, config, OracleLinker(gold), OracleJudge(gold), OracleExpander(gold)
            )
            d = trace.to_dict()
            d.pop("stage_seconds")
            return final, d

        (f1, t1), (f2, t2) = one_run(), one_run()
        assert f1 == f2
        assert t1 == t2

    def test_mention_counts_monotone_through_stages(self, gold_corpus):
        rec = gold_corpus.records[0]
        gold = rec.cluster_sets["gold"]
        final, trace = run(
            rec.document, PipelineConfig(), OracleLinker(gold), OracleJudge(gold), OracleExpander(gold)
        )
        counts = {name: cs.n_mentions for name, cs in trace.snapshots.items()}
        assert counts["refined"] <= counts["initialized"]
        assert counts["window_expanded"] >= counts["refined"]
        assert counts["final"] >= counts["window_expanded"]
