"""``recover`` command line: run, score, check-tables."""

from __future__ import annotations

import argparse
import json
import logging
import sys
from pathlib import Path

from .evaluation import ReportError, aggregate_report, score_segment
from .pipeline import ConfigError, CorpusError, load_config_file, make_config, run_corpus
from .tables import check_tables, load_fixture
from .text import load_lexicon

log = logging.getLogger("recover")

# CLI flag -> config key
RUN_FLAGS = {
    "segments": "segments",
    "lexicon": "lexicon",
    "out": "out_dir",
    "strategy": "strategy",
    "baseline_label": "baseline_label",
    "workers": "workers",
    "top_k": "retrieval.top_k",
    "w_exact": "retrieval.w_exact",
    "w_fuzzy": "retrieval.w_fuzzy",
    "w_phonetic": "retrieval.w_phonetic",
    "fuzzy_window": "retrieval.fuzzy_len_window",
    "phonetic_prefix": "retrieval.phonetic_prefix_len",
    "min_edit_similarity": "guardrails.min_edit_similarity",
    "backend": "proposer.backend",
    "base_url": "proposer.base_url",
    "model": "proposer.model",
    "temperature": "proposer.temperature",
    "max_retries": "proposer.max_retries",
    "max_in_flight": "proposer.max_in_flight",
    "mock_script": "proposer.mock_script",
}


def _add_run(sub) -> None:
    p = sub.add_parser("run", help="correct a corpus and score it")
    p.add_argument("--config", type=Path, help="TOML run config; flags override it")
    p.add_argument("--segments", help="segments JSONL")
    p.add_argument("--lexicon", help="entity list (.txt or .jsonl)")
    p.add_argument("--out", help="output directory")
    p.add_argument("--strategy", choices=["one-best", "entity-select", "rover", "llm-select"])
    p.add_argument("--top-k", type=int)
    p.add_argument("--w-exact", type=float)
    p.add_argument("--w-fuzzy", type=float)
    p.add_argument("--w-phonetic", type=float)
    p.add_argument("--fuzzy-window", type=int)
    p.add_argument("--phonetic-prefix", type=int)
    p.add_argument("--min-edit-similarity", type=float)
    p.add_argument("--backend", choices=["none", "mock", "remote"])
    p.add_argument("--base-url")
    p.add_argument("--model")
    p.add_argument("--temperature", type=float)
    p.add_argument("--max-retries", type=int)
    p.add_argument("--max-in-flight", type=int)
    p.add_argument("--mock-script", help="JSON file with scripted mock replies or a corrections table")
    p.add_argument("--workers", type=int, help="segment worker threads (default: max in-flight)")
    p.add_argument("--baseline-label")
    p.add_argument("--include-hypotheses", action="store_true", help="show all hypotheses to the proposer as context")
    p.add_argument("--no-figures", action="store_true")


def _cmd_run(args) -> int:
    values = load_config_file(args.config) if args.config else {}
    for flag, key in RUN_FLAGS.items():
        v = getattr(args, flag)
        if v is not None:
            values[key] = v
    if args.include_hypotheses:
        values["proposer.include_hypotheses"] = True
    if args.no_figures:
        values["figures"] = False
    config = make_config(values)
    report, results = run_corpus(config)
    print(f"processed {len(results)} segment(s) -> {config.out_dir}")
    if report is not None:
        print(report.to_table(), end="")
    else:
        print("no references: metrics omitted")
    return 0


def _read_runs(path: Path) -> dict[str, dict]:
    rows = {}
    with path.open(encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                row = json.loads(line)
                rows[row["segment_id"]] = row
    return rows


def _cmd_score(args) -> int:
    lexicon = load_lexicon(args.lexicon)
    base_rows, sys_rows = _read_runs(args.ref_runs), _read_runs(args.sys_runs)
    if set(base_rows) != set(sys_rows):
        diff = sorted(set(base_rows) ^ set(sys_rows))
        raise ReportError(f"run files cover different segments; differing ids: {diff}")
    systems = {args.baseline_label: [], args.system_label: []}
    for sid in sorted(base_rows):
        ref = base_rows[sid].get("reference") or sys_rows[sid].get("reference")
        if ref is None:
            continue
        systems[args.baseline_label].append(score_segment(sid, ref, base_rows[sid]["corrected_text"], lexicon))
        systems[args.system_label].append(score_segment(sid, ref, sys_rows[sid]["corrected_text"], lexicon))
    report = aggregate_report(systems, baseline=args.baseline_label)
    if args.out:
        out = Path(args.out)
        out.mkdir(parents=True, exist_ok=True)
        (out / "report.json").write_text(report.dumps(), encoding="utf-8")
        (out / "report.txt").write_text(report.to_table(), encoding="utf-8")
        if not args.no_figures:
            from .plots import render_report_figures

            render_report_figures(report, out)
    print(report.to_table(), end="")
    return 0


def _cmd_check_tables(args) -> int:
    checks = check_tables(load_fixture(args.fixtures))
    for c in checks:
        print(c.line())
    failed = sum(not c.passed for c in checks)
    print(f"{len(checks) - failed}/{len(checks)} checks passed")
    return 1 if failed else 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="recover", description="Entity-focused ASR transcript correction")
    parser.add_argument("-v", "--verbose", action="store_true")
    sub = parser.add_subparsers(dest="command", required=True)
    _add_run(sub)

    p = sub.add_parser("score", help="score two run outputs against their references")
    p.add_argument("--ref-runs", type=Path, required=True, help="baseline corrected.jsonl")
    p.add_argument("--sys-runs", type=Path, required=True, help="system corrected.jsonl")
    p.add_argument("--lexicon", type=Path, required=True)
    p.add_argument("--baseline-label", default="baseline")
    p.add_argument("--system-label", default="system")
    p.add_argument("--out", help="also write report.json / report.txt here")
    p.add_argument("--no-figures", action="store_true")

    p = sub.add_parser("check-tables", help="recompute published E-WER/RWERR from alignment counts")
    p.add_argument("--fixtures", type=Path, help="counts fixture JSON (default: bundled)")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(
        level=logging.INFO if args.verbose else logging.WARNING,
        format="%(levelname)s %(name)s: %(message)s",
    )
    handlers = {"run": _cmd_run, "score": _cmd_score, "check-tables": _cmd_check_tables}
    try:
        return handlers[args.command](args)
    except (ConfigError, CorpusError, ReportError, ValueError, OSError) as exc:
        print(f"recover: error: {exc}", file=sys.stderr)
        return 2
    except KeyboardInterrupt:
        print("recover: interrupted; partial results written", file=sys.stderr)
        return 130


if __name__ == "__main__":
    sys.exit(main())
