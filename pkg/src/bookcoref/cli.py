"""Command-line entry point.

One subcommand per capability: convert, validate, stats, split, score,
score-linking, pipeline run, simulate, synth. Every subcommand prints a
human-readable summary and can also write its full result as JSON via
``--out``. A JSON config file (``--config``) supplies defaults; explicit
flags win. Exit codes: 0 success, 1 contract/validation errors, 2 I/O or
parse errors.
"""

from __future__ import annotations

import argparse
import hashlib
import json
import sys
from typing import Sequence

from . import __version__
from .errors import BookcorefError, ConfigError, ParseError, SchemaError
from .formats import CorpusFile, DocumentRecord, read_conll, read_jsonl, write_conll, write_jsonl
from .harness import Setting, evaluate, stats
from .memsim import Policy, simulate, sweep, sweep_csv
from .metrics import linking_prf, pct
from .model import validate
from .pipeline import (
    AcceptAllJudge,
    IdentityExpander,
    OracleExpander,
    OracleJudge,
    OracleLinker,
    PatternMatchLinker,
    PipelineConfig,
    RejectAllJudge,
    run,
)
from .remote import HttpExpander, HttpJudge, HttpLinker, ServiceClient
from .synthetic import DEFAULT_SEED, make_reference_corpus
from .windowing import split_corpus

_SETTINGS = {"full": "full_book", "split": "split", "gold+window": "gold_plus_window"}


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> "None":  # type: ignore[override]
        self.print_usage(sys.stderr)
        sys.stderr.write(f"{self.prog}: error: {message}\n")
        raise SystemExit(1)


def _write_json(args: argparse.Namespace, payload: dict) -> None:
    invocation = {
        k: v
        for k, v in sorted(vars(args).items())
        if k != "func" and isinstance(v, (str, int, float, bool, type(None)))
    }
    digest = hashlib.sha256(json.dumps(invocation, sort_keys=True).encode()).hexdigest()[:16]
    payload = {**payload, "invocation": invocation, "invocation_hash": digest}
    if getattr(args, "out", None):
        with open(args.out, "w", encoding="utf-8") as f:
            json.dump(payload, f, indent=2, sort_keys=True)
            f.write("\n")
    if getattr(args, "json", False):
        print(json.dumps(payload, indent=2, sort_keys=True))


def _read_corpus(path: str, clusters_as: str = "gold") -> CorpusFile:
    if path.endswith((".conll", ".conll12", ".v4_gold_conll")):
        return read_conll(path, clusters_as="prediction" if clusters_as == "prediction" else clusters_as)
    return read_jsonl(path, clusters_as=clusters_as)


def _cmd_synth(args: argparse.Namespace) -> int:
    corpus = make_reference_corpus(args.seed)
    write_jsonl(corpus, args.output)
    s = stats(corpus)
    print(f"wrote {args.output}: {s.docs} docs, {s.tokens} tokens, {s.mentions} mentions (seed={args.seed})")
    _write_json(args, {"command": "synth", "seed": args.seed, "output": args.output, "stats": s.to_dict()})
    return 0


def _cmd_convert(args: argparse.Namespace) -> int:
    to = args.to
    if to is None:
        to = "conll" if args.output.endswith((".conll", ".conll12")) else "jsonl"
    if to == "conll":
        corpus = _read_corpus(args.input)
        write_conll(corpus, args.output)
    else:
        corpus = _read_corpus(args.input)
        write_jsonl(corpus, args.output)
    print(f"converted {args.input} -> {args.output} ({len(corpus)} documents, format {to})")
    _write_json(args, {"command": "convert", "input": args.input, "output": args.output, "format": to})
    return 0


def _cmd_validate(args: argparse.Namespace) -> int:
    corpus = _read_corpus(args.input)
    total_errors = 0
    reports = {}
    for rec in corpus.records:
        for name, cs in rec.cluster_sets.items():
            report = validate(rec.document, cs)
            total_errors += len(report.errors)
            reports[f"{rec.document.doc_id}/{name}"] = {
                "errors": [list(f) for f in report.errors],
                "warnings": [list(f) for f in report.warnings],
            }
            status = "ok" if report.ok else f"{len(report.errors)} error(s)"
            print(f"{rec.document.doc_id}/{name}: {status}, {len(report.warnings)} warning(s)")
            for f in report.errors:
                print(f"  E {f.code} at {f.location}: {f.message}")
    _write_json(args, {"command": "validate", "input": args.input, "reports": reports})
    return 1 if total_errors else 0


def _cmd_stats(args: argparse.Namespace) -> int:
    corpus = _read_corpus(args.input)
    s = stats(corpus)
    print(s.to_table())
    _write_json(args, {"command": "stats", "input": args.input, "stats": s.to_dict()})
    return 0


def _cmd_split(args: argparse.Namespace) -> int:
    corpus = _read_corpus(args.input)
    result = split_corpus(corpus, args.window_len)
    write_jsonl(result.corpus, args.output)
    print(
        f"split {len(corpus)} documents into {len(result.corpus)} windows of <= {args.window_len} tokens; "
        f"{result.n_crossings} boundary-crossing mention(s) dropped"
    )
    _write_json(
        args,
        {
            "command": "split",
            "input": args.input,
            "output": args.output,
            "window_len": args.window_len,
            "windows": len(result.corpus),
            "crossings": [
                {"doc_id": d, "cluster_set": n, "key": str(k), "span": [m.start, m.end]}
                for d, n, k, m in result.crossings
            ],
        },
    )
    return 0


def _cmd_score(args: argparse.Namespace) -> int:
    setting = Setting(_SETTINGS[args.setting], args.window_len)
    key = _read_corpus(args.key)
    response = _read_corpus(args.response, clusters_as="prediction")
    eval_run = evaluate(setting, key, response, drop_singletons=not args.keep_singletons)
    print(eval_run.summary_table())
    if args.results:
        eval_run.save(args.results)
        print(f"run artifacts written to {args.results}/")
    _write_json(args, {"command": "score", **eval_run.to_dict()})
    return 0


def _cmd_score_linking(args: argparse.Namespace) -> int:
    key = _read_corpus(args.key)
    response = _read_corpus(args.response, clusters_as="prediction")
    responses = response.by_id()
    per_doc = []
    for rec in key.records:
        resp = responses.get(rec.document.doc_id)
        if resp is None:
            raise SchemaError(f"response corpus is missing document {rec.document.doc_id!r}")
        prf = linking_prf(rec.cluster_sets["gold"], resp.cluster_sets["prediction"])
        per_doc.append((rec.document.doc_id, prf))
        p, r, f1 = prf.as_percentages()
        print(f"{rec.document.doc_id}: P={p:.1f} R={r:.1f} F1={f1:.1f}")
    tp = sum(prf.p_num for _, prf in per_doc)
    pd = sum(prf.p_den for _, prf in per_doc)
    rd = sum(prf.r_den for _, prf in per_doc)
    pp = pct(tp / pd) if pd else 0.0
    rr = pct(tp / rd) if rd else 0.0
    print(f"pooled: P={pp:.1f} R={rr:.1f}")
    _write_json(
        args,
        {
            "command": "score-linking",
            "per_doc": {doc: prf.to_dict() for doc, prf in per_doc},
            "pooled": {"precision_pct": pp, "recall_pct": rr},
        },
    )
    return 0


def _components(args: argparse.Namespace, gold, client):
    if args.linker == "pattern":
        linker = PatternMatchLinker()
    elif args.linker == "oracle":
        linker = OracleLinker(gold)
    else:
        linker = HttpLinker(client)
    if args.judge == "accept":
        judge = AcceptAllJudge()
    elif args.judge == "reject":
        judge = RejectAllJudge()
    elif args.judge == "oracle":
        judge = OracleJudge(gold)
    else:
        judge = HttpJudge(client)
    if args.expander == "identity":
        expander = IdentityExpander()
    elif args.expander == "oracle":
        expander = OracleExpander(gold)
    else:
        expander = HttpExpander(client)
    return linker, judge, expander


def _cmd_pipeline_run(args: argparse.Namespace) -> int:
    stages = tuple(s.strip() for s in args.stages.split(",") if s.strip())
    config = PipelineConfig(
        window_len=args.window_len,
        group_size=args.group_size,
        judge_context_words=args.context_words,
        boundary_rule=args.boundary,
        stages=stages,
        jobs=args.jobs,
        retries=args.retries,
        timeout=args.timeout,
        endpoints={"all": args.endpoint} if args.endpoint else None,
        cache_dir=args.cache_dir,
    )
    needs_gold = "oracle" in (args.linker, args.judge, args.expander)
    client = None
    if "http" in (args.linker, args.judge, args.expander):
        if not args.endpoint:
            raise ConfigError("--endpoint is required when a component is 'http'")
        client = ServiceClient(
            args.endpoint, timeout=args.timeout, retries=args.retries, cache_dir=args.cache_dir
        )
    corpus = _read_corpus(args.input)
    out = CorpusFile()
    traces = {}
    for rec in corpus.records:
        gold = rec.cluster_sets.get("gold")
        if needs_gold and gold is None:
            raise SchemaError(f"oracle components need gold clusters; missing for {rec.document.doc_id!r}")
        linker, judge, expander = _components(args, gold, client)
        final, trace = run(rec.document, config, linker, judge, expander)
        out.records.append(DocumentRecord(rec.document, {"prediction": final.with_stage("prediction")}))
        traces[rec.document.doc_id] = trace.to_dict()
        counts = trace.to_dict()["mention_counts"]
        print(f"{rec.document.doc_id}: stages {', '.join(f'{k}={v}' for k, v in counts.items())}")
    write_jsonl(out, args.output, clusters_from="prediction")
    print(f"wrote predictions to {args.output} (config {config.config_hash()})")
    payload = {"command": "pipeline-run", "config_hash": config.config_hash(), "stages": list(stages), "traces": traces}
    if client is not None:
        payload["service_log"] = client.log
    _write_json(args, payload)
    return 0


def _cmd_simulate(args: argparse.Namespace) -> int:
    corpus = _read_corpus(args.input)
    if args.policy == "unbounded":
        base = Policy.unbounded()
    elif args.policy == "lru":
        base = Policy.lru(args.capacity)
    else:
        base = Policy.dual(args.l_cap, args.g_cap)
    results = {}
    csv_chunks = []
    for rec in corpus.records:
        gold = rec.cluster_sets["gold"]
        if args.sweep:
            capacities = [int(c) for c in args.sweep.split(",")]
            if args.policy == "lru":
                policies = [Policy.lru(c) for c in capacities]
            elif args.policy == "dual":
                policies = [Policy.dual(c, c) for c in capacities]
            else:
                raise ConfigError("--sweep requires --policy lru or dual")
            swept = sweep(gold, policies)
            results[rec.document.doc_id] = [r.to_dict() for _, r in swept]
            csv_chunks.append((rec.document.doc_id, sweep_csv(swept)))
            for policy, report in swept:
                print(
                    f"{rec.document.doc_id} {policy.label()}: evictions={report.evictions} "
                    f"forced={report.forced_errors} rate={report.forced_error_rate:.4f}"
                )
        else:
            report = simulate(gold, base)
            results[rec.document.doc_id] = report.to_dict()
            print(
                f"{rec.document.doc_id} {report.policy}: mentions={report.total_mentions} "
                f"evictions={report.evictions} forced={report.forced_errors} "
                f"rate={report.forced_error_rate:.4f}"
            )
    if args.csv:
        with open(args.csv, "w", encoding="utf-8") as f:
            for doc_id, chunk in csv_chunks:
                f.write(f"# {doc_id}\n")
                f.write(chunk)
        print(f"sweep table written to {args.csv}")
    _write_json(args, {"command": "simulate", "policy": base.label(), "results": results})
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="bookcoref", description=__doc__)
    parser.add_argument("--version", action="version", version=f"bookcoref {__version__}")
    parser.add_argument("--config", help="JSON file with default values for any flag")
    parser.add_argument("--seed", type=int, default=DEFAULT_SEED, help="seed for randomized test-support behavior")
    parser.add_argument("--jobs", type=int, default=1, help="parallel worker cap for window-level work")
    sub = parser.add_subparsers(dest="command", required=True, metavar="command")

    def common_out(p: argparse.ArgumentParser) -> None:
        p.add_argument("--out", help="also write the full result as JSON to this path")
        p.add_argument("--json", action="store_true", help="print the JSON result to stdout")

    p = sub.add_parser("synth", help="generate the gold-shaped synthetic benchmark corpus")
    p.add_argument("output")
    common_out(p)
    p.set_defaults(func=_cmd_synth)

    p = sub.add_parser("convert", help="convert between JSONL and CoNLL-2012")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--to", choices=("jsonl", "conll"), help="target format (default: by output extension)")
    common_out(p)
    p.set_defaults(func=_cmd_convert)

    p = sub.add_parser("validate", help="check spans, duplicates and character keys")
    p.add_argument("input")
    common_out(p)
    p.set_defaults(func=_cmd_validate)

    p = sub.add_parser("stats", help="corpus statistics table")
    p.add_argument("input")
    common_out(p)
    p.set_defaults(func=_cmd_stats)

    p = sub.add_parser("split", help="cut books into independent window-documents")
    p.add_argument("input")
    p.add_argument("output")
    p.add_argument("--window-len", type=int, default=1500)
    common_out(p)
    p.set_defaults(func=_cmd_split)

    p = sub.add_parser("score", help="coreference scoring under an evaluation setting")
    p.add_argument("--setting", choices=sorted(_SETTINGS), default="full")
    p.add_argument("key")
    p.add_argument("response")
    p.add_argument("--window-len", type=int, default=1500)
    p.add_argument("--keep-singletons", action="store_true", help="score singleton clusters too")
    p.add_argument("--results", help="directory for run.json / units.jsonl / summary.txt")
    common_out(p)
    p.set_defaults(func=_cmd_score)

    p = sub.add_parser("score-linking", help="character-linking P/R/F1 over (span, character) pairs")
    p.add_argument("key")
    p.add_argument("response")
    common_out(p)
    p.set_defaults(func=_cmd_score_linking)

    p = sub.add_parser("pipeline", help="annotation pipeline").add_subparsers(
        dest="pipeline_command", required=True, metavar="run"
    )
    pr = p.add_parser("run", help="run the staged annotation pipeline")
    pr.add_argument("input")
    pr.add_argument("output")
    pr.add_argument("--stages", default="init,refine,window,group", help="comma list from: init,refine,window,group")
    pr.add_argument("--linker", choices=("pattern", "oracle", "http"), default="pattern")
    pr.add_argument("--judge", choices=("accept", "reject", "oracle", "http"), default="accept")
    pr.add_argument("--expander", choices=("identity", "oracle", "http"), default="identity")
    pr.add_argument("--endpoint", help="base URL of the annotator service")
    pr.add_argument("--window-len", type=int, default=1500)
    pr.add_argument("--group-size", type=int, default=10)
    pr.add_argument("--context-words", type=int, default=400)
    pr.add_argument("--boundary", choices=("strict", "mention_safe"), default="mention_safe")
    pr.add_argument("--retries", type=int, default=2)
    pr.add_argument("--timeout", type=float, default=30.0)
    pr.add_argument("--cache-dir", help="service response cache (default: $BOOKCOREF_CACHE_DIR)")
    common_out(pr)
    pr.set_defaults(func=_cmd_pipeline_run)

    p = sub.add_parser("simulate", help="replay gold mention streams against a memory policy")
    p.add_argument("input")
    p.add_argument("--policy", choices=("unbounded", "lru", "dual"), default="unbounded")
    p.add_argument("--capacity", type=int, default=25, help="cluster capacity for --policy lru")
    p.add_argument("--l-cap", type=int, default=25, help="L-cache capacity for --policy dual")
    p.add_argument("--g-cap", type=int, default=25, help="G-cache capacity for --policy dual")
    p.add_argument("--sweep", help="comma list of capacities to sweep")
    p.add_argument("--csv", help="write the sweep table as CSV")
    common_out(p)
    p.set_defaults(func=_cmd_simulate)

    return parser


def _walk_parsers(parser: argparse.ArgumentParser):
    yield parser
    for action in parser._actions:
        if isinstance(action, argparse._SubParsersAction):
            for child in action.choices.values():
                yield from _walk_parsers(child)


def _apply_config(parser: argparse.ArgumentParser, argv: Sequence[str]) -> argparse.Namespace:
    probe = _Parser(add_help=False)
    probe.add_argument("--config")
    known, _ = probe.parse_known_args(argv)
    if known.config:
        with open(known.config, encoding="utf-8") as f:
            try:
                defaults = json.load(f)
            except json.JSONDecodeError as e:
                raise ParseError(f"config file {known.config!r}: {e.msg}", e.lineno) from e
        if not isinstance(defaults, dict):
            raise SchemaError(f"config file {known.config!r} must hold a JSON object")
        normalized = {k.replace("-", "_"): v for k, v in defaults.items()}
        # subcommands parse into a fresh namespace, so defaults must reach
        # every parser in the tree
        for p in _walk_parsers(parser):
            p.set_defaults(**normalized)
    return parser.parse_args(argv)


def main(argv: Sequence[str] | None = None) -> int:
    argv = list(sys.argv[1:] if argv is None else argv)
    parser = build_parser()
    try:
        args = _apply_config(parser, argv)
        return args.func(args)
    except (ParseError, SchemaError, OSError) as e:
        print(f"bookcoref: {e}", file=sys.stderr)
        return 2
    except BookcorefError as e:
        print(f"bookcoref: {e}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
