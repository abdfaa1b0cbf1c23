"""End-to-end batch correction: retrieve, fuse, propose, verify, apply, score."""

from __future__ import annotations

import json
import logging
import os
import sys
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from pathlib import Path

from .evaluation import EvaluationReport, SegmentScore, aggregate_report, score_segment
from .fusion import FusionStrategy, fuse, select_one_best
from .guardrails import GuardrailConfig, VerificationOutcome, apply_edits, verify_edit
from .proposer import (
    API_KEY_ENV,
    Backend,
    BackendError,
    LookupBackend,
    MockBackend,
    Mode,
    ParseError,
    Proposer,
    ProposerRequest,
    RemoteBackend,
    candidate_pairs,
)
from .retrieval import RetrievalWeights, retrieve_top_k
from .text import EntityLexicon, SegmentRecord, load_lexicon, tokenize

if sys.version_info >= (3, 11):
    import tomllib
else:  # pragma: no cover
    import tomli as tomllib

log = logging.getLogger(__name__)

MALFORMED_LIMIT = 0.01


class CorpusError(ValueError):
    pass


class ConfigError(ValueError):
    pass


@dataclass(frozen=True)
class ProposerConfig:
    backend: str = "mock"  # none | mock | remote
    base_url: str = "https://api.openai.com"
    model: str = "gpt-4o"
    temperature: float = 0.0
    max_retries: int = 2
    backoff: float = 0.5
    max_in_flight: int = 4
    timeout: float = 60.0
    mock_script: str | None = None
    include_hypotheses: bool = False


@dataclass(frozen=True)
class RunConfig:
    segments: str
    lexicon: str
    out_dir: str
    strategy: FusionStrategy = FusionStrategy.ONE_BEST
    retrieval: RetrievalWeights = field(default_factory=RetrievalWeights)
    guardrails: GuardrailConfig = field(default_factory=GuardrailConfig)
    proposer: ProposerConfig = field(default_factory=ProposerConfig)
    baseline_label: str = "baseline"
    workers: int | None = None
    figures: bool = True

    def validate(self) -> None:
        for label, path in (("segments", self.segments), ("lexicon", self.lexicon)):
            if not Path(path).is_file():
                raise ConfigError(f"{label} file not found: {path}")
        if self.proposer.backend not in ("none", "mock", "remote"):
            raise ConfigError(f"unknown backend {self.proposer.backend!r}")
        if self.strategy is FusionStrategy.LLM_SELECT and self.proposer.backend == "none":
            raise ConfigError("llm-select needs a proposer backend")
        if self.proposer.backend == "remote" and not os.environ.get(API_KEY_ENV):
            raise ConfigError(f"remote backend needs ${API_KEY_ENV}")
        out = Path(self.out_dir)
        out.mkdir(parents=True, exist_ok=True)
        if not os.access(out, os.W_OK):
            raise ConfigError(f"output directory not writable: {out}")

    @property
    def system_label(self) -> str:
        return self.strategy.value

    @property
    def is_baseline_run(self) -> bool:
        return self.strategy is FusionStrategy.ONE_BEST and self.proposer.backend == "none"


def load_config_file(path: str | Path) -> dict:
    """Flatten a TOML run config into keyword overrides for :func:`make_config`."""
    with open(path, "rb") as fh:
        data = tomllib.load(fh)
    flat = {k: v for k, v in data.items() if not isinstance(v, dict)}
    for section in ("retrieval", "guardrails", "proposer"):
        for k, v in data.get(section, {}).items():
            flat[f"{section}.{k}"] = v
    return flat


def make_config(values: dict) -> RunConfig:
    """Build a RunConfig from flat keys (``top_k`` or ``retrieval.top_k`` style)."""
    sections = {"retrieval": RetrievalWeights, "guardrails": GuardrailConfig, "proposer": ProposerConfig}
    nested: dict[str, dict] = {name: {} for name in sections}
    top: dict = {}
    for key, value in values.items():
        if value is None:
            continue
        if "." in key:
            section, name = key.split(".", 1)
            if section not in sections or name not in sections[section].__dataclass_fields__:
                raise ConfigError(f"unknown config key {key!r}")
            nested[section][name] = value
        else:
            if key not in RunConfig.__dataclass_fields__:
                raise ConfigError(f"unknown config key {key!r}")
            top[key] = value
    for field_name in ("segments", "lexicon", "out_dir"):
        if field_name not in top:
            raise ConfigError(f"missing required setting {field_name!r}")
    try:
        return RunConfig(
            strategy=FusionStrategy(top.pop("strategy", FusionStrategy.ONE_BEST)),
            retrieval=RetrievalWeights(**nested["retrieval"]),
            guardrails=GuardrailConfig(**nested["guardrails"]),
            proposer=ProposerConfig(**nested["proposer"]),
            **top,
        )
    except (TypeError, ValueError) as exc:
        raise ConfigError(str(exc)) from exc


def _parse_record(obj) -> SegmentRecord:
    if not isinstance(obj, dict):
        raise ValueError("not a JSON object")
    sid = obj.get("segment_id")
    if not isinstance(sid, str) or not sid:
        raise ValueError("missing segment_id")
    hyps = obj.get("hypotheses")
    if not isinstance(hyps, list) or not hyps or not all(isinstance(h, str) for h in hyps):
        raise ValueError("'hypotheses' must be a non-empty list of strings")
    ref = obj.get("reference")
    if ref is not None and not isinstance(ref, str):
        raise ValueError("'reference' must be a string or null")
    meta = obj.get("metadata") or {}
    if not isinstance(meta, dict):
        raise ValueError("'metadata' must be an object")
    return SegmentRecord(sid, tuple(hyps), ref, {str(k): str(v) for k, v in meta.items()})


def load_corpus(path: str | Path) -> list[SegmentRecord]:
    path = Path(path)
    if not path.is_file():
        raise CorpusError(f"segments file not found: {path}")
    records: list[SegmentRecord] = []
    seen: set[str] = set()
    bad: list[str] = []
    total = 0
    with path.open(encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            total += 1
            try:
                rec = _parse_record(json.loads(line))
                if rec.segment_id in seen:
                    raise ValueError(f"duplicate segment_id {rec.segment_id!r}")
            except ValueError as exc:  # JSONDecodeError included
                bad.append(f"line {lineno}: {exc}")
                continue
            seen.add(rec.segment_id)
            records.append(rec)
    if total == 0:
        raise CorpusError(f"{path}: corpus is empty")
    if bad:
        if len(bad) / total > MALFORMED_LIMIT:
            raise CorpusError(f"{path}: {len(bad)} of {total} lines malformed:\n  " + "\n  ".join(bad))
        for msg in bad:
            log.warning("%s: skipping %s", path, msg)
    return records


@dataclass
class SegmentResult:
    segment_id: str
    reference: str | None
    fused_text: str
    corrected_text: str
    chosen_variant: int | None
    strategy: str
    applied: list = field(default_factory=list)
    outcomes: list[VerificationOutcome] = field(default_factory=list)
    warnings: list[str] = field(default_factory=list)
    baseline_score: SegmentScore | None = None
    score: SegmentScore | None = None
    timing: dict = field(default_factory=dict)

    def to_json(self) -> dict:
        return {
            "segment_id": self.segment_id,
            "reference": self.reference,
            "strategy": self.strategy,
            "chosen_variant": self.chosen_variant,
            "fused_text": self.fused_text,
            "corrected_text": self.corrected_text,
            "applied_edits": [a.edit.to_json() for a in self.applied],
            "rejected_edits": [
                {**o.edit.to_json(), "rejection_code": o.rejection_code.value} for o in self.outcomes if not o.verified
            ],
            "warnings": self.warnings,
        }

    def audit_lines(self) -> list[dict]:
        return [
            {
                "segment_id": self.segment_id,
                "find": o.edit.find,
                "replace": o.edit.replace,
                "verdict": o.verdict.value,
                "rejection_code": o.rejection_code.value if o.rejection_code else None,
                "relocated": o.relocated,
                "similarity": None if o.similarity is None else round(o.similarity, 6),
            }
            for o in self.outcomes
        ]


def make_backend(config: ProposerConfig) -> Backend | None:
    if config.backend == "none":
        return None
    if config.backend == "remote":
        return RemoteBackend(config.base_url, config.model, config.temperature, timeout=config.timeout)
    if not config.mock_script:
        return MockBackend()
    script = json.loads(Path(config.mock_script).read_text(encoding="utf-8"))
    if "corrections" in script:
        return LookupBackend(script["corrections"])
    return MockBackend(script.get("replies", {}), script.get("default", MockBackend().default))


def run_segment(
    record: SegmentRecord,
    lexicon: EntityLexicon,
    config: RunConfig,
    proposer: Proposer | None,
) -> SegmentResult:
    started = time.perf_counter()
    streams = [tokenize(h) for h in record.hypotheses]
    candidates = retrieve_top_k(lexicon, streams, config.retrieval, record.segment_id)
    warnings: list[str] = []
    meta: dict = {}

    if config.strategy is FusionStrategy.LLM_SELECT:
        try:
            fusion = fuse(config.strategy, streams, candidates, lexicon, proposer)
            meta = fusion.proposer_meta
        except (BackendError, ParseError) as exc:
            log.warning("%s: llm-select failed (%s); keeping hypothesis 0", record.segment_id, exc)
            fusion = select_one_best(streams, candidates, lexicon)
            fusion.warnings.append(f"{type(exc).__name__}: {exc}")
        edits = fusion.edits
    else:
        fusion = fuse(config.strategy, streams, candidates, lexicon)
        edits = []
        if proposer is not None:
            context = tuple(record.hypotheses) if config.proposer.include_hypotheses else ()
            request = ProposerRequest(
                Mode.CORRECT,
                (fusion.fused_text,),
                candidate_pairs(lexicon, candidates.phrase_indices),
                context=context,
            )
            response = proposer.propose_or_empty(request)
            edits = response.edits
            warnings.extend(response.warnings)
            meta = response.meta
    warnings = fusion.warnings + warnings

    outcomes = [verify_edit(e, fusion.fused_text, lexicon, config.guardrails) for e in edits]
    corrected, applied, outcomes = apply_edits(fusion.fused_text, outcomes)

    result = SegmentResult(
        record.segment_id,
        record.reference,
        fusion.fused_text,
        corrected,
        fusion.chosen_variant_index,
        config.strategy.value,
        applied,
        outcomes,
        warnings,
    )
    if record.reference is not None:
        result.baseline_score = score_segment(record.segment_id, record.reference, record.hypotheses[0], lexicon)
        result.score = score_segment(record.segment_id, record.reference, corrected, lexicon)
    result.timing = {"seconds": time.perf_counter() - started, **meta}
    return result


def _write_jsonl(path: Path, rows) -> None:
    with path.open("w", encoding="utf-8") as fh:
        for row in rows:
            fh.write(json.dumps(row, ensure_ascii=False, sort_keys=True) + "\n")


def build_report(results: list[SegmentResult], config: RunConfig) -> EvaluationReport | None:
    scored = [r for r in results if r.score is not None]
    if not scored:
        return None
    systems = {config.baseline_label: [r.baseline_score for r in scored]}
    if not config.is_baseline_run:
        systems[config.system_label] = [r.score for r in scored]
    report = aggregate_report(systems, baseline=config.baseline_label)
    report.extra = {"unscored_segments": len(results) - len(scored)}
    return report


def write_outputs(results: list[SegmentResult], config: RunConfig, wall: float, complete: bool = True):
    out = Path(config.out_dir)
    out.mkdir(parents=True, exist_ok=True)
    _write_jsonl(out / "corrected.jsonl", (r.to_json() for r in results))
    _write_jsonl(out / "edits.jsonl", (line for r in results for line in r.audit_lines()))
    report = build_report(results, config) if complete else None
    if report is not None:
        (out / "report.json").write_text(report.dumps(), encoding="utf-8")
        (out / "report.txt").write_text(report.to_table(), encoding="utf-8")
        (out / "report.csv").write_text(report.to_csv(), encoding="utf-8")
        if config.figures:
            from .plots import render_report_figures

            render_report_figures(report, out)
    meta = {
        "complete": complete,
        "segments": len(results),
        "wall_seconds": wall,
        "config": json.loads(json.dumps(asdict(config), default=str)),
        "per_segment": {r.segment_id: r.timing for r in results},
    }
    (out / "run_meta.json").write_text(json.dumps(meta, indent=2, sort_keys=True, default=str) + "\n", encoding="utf-8")
    return report


def run_corpus(config: RunConfig, backend: Backend | None = None) -> tuple[EvaluationReport | None, list[SegmentResult]]:
    """Process every segment and write corrected.jsonl, edits.jsonl and the reports.

    ``backend`` overrides the one described by ``config.proposer``.
    """
    config.validate()
    records = load_corpus(config.segments)
    lexicon = load_lexicon(config.lexicon)
    if backend is None:
        backend = make_backend(config.proposer)
    pc = config.proposer
    proposer = None
    if backend is not None and pc.backend != "none":
        proposer = Proposer(backend, pc.max_retries, pc.backoff, pc.max_in_flight)

    started = time.perf_counter()
    workers = config.workers or pc.max_in_flight
    results: dict[str, SegmentResult] = {}
    pool = ThreadPoolExecutor(max_workers=max(1, workers))
    try:
        futures = {pool.submit(run_segment, rec, lexicon, config, proposer): rec.segment_id for rec in records}
        for fut, sid in futures.items():
            results[sid] = fut.result()
    except KeyboardInterrupt:
        pool.shutdown(wait=False, cancel_futures=True)
        log.warning("interrupted; writing %d finished segment(s)", len(results))
        write_outputs(sorted(results.values(), key=lambda r: r.segment_id), config, time.perf_counter() - started, False)
        raise
    pool.shutdown()
    ordered = sorted(results.values(), key=lambda r: r.segment_id)
    report = write_outputs(ordered, config, time.perf_counter() - started)
    return report, ordered


def with_overrides(config: RunConfig, **changes) -> RunConfig:
    return replace(config, **changes)
