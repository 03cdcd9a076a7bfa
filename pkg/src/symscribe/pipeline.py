"""End-to-end note processing: segment -> match -> assert -> serialize.

Notes are processed by a bounded worker pool over immutable shared state
(matcher index, rule engine, section/abbreviation lists) and merged back in
input order, so output files are identical for any worker count. Timing is
recorded per note and per stage; the volatile timing figures go to
timing.csv, never into mentions.jsonl, which keeps that file byte-stable
across runs with equal inputs.
"""

from __future__ import annotations

import sys
import threading
import time
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import PIPELINE_VERSION
from .assertion import (
    RemoteClassifierError,
    RuleEngine,
    default_rules,
    classify_remote,
    load_rules,
)
from .docmodel import (
    NoteStream,
    PipelineOutput,
    TimingRecord,
    fingerprint_file,
    serialize_output,
    to_bioc,
    to_omop_note_nlp,
    write_note_nlp_csv,
)
from .lexicon import Lexicon, load_lexicon
from .ner import MatcherIndex, find_mentions
from .segment import Document, Section, default_abbreviations, default_section_titles, load_line_list, split_sections, split_sentences

_DATA_DIR = Path(__file__).parent / "data"
REMOTE_IN_FLIGHT_LIMIT = 8


class StartupError(RuntimeError):
    """Configuration or resource problem that aborts the run before notes flow."""


@dataclass
class PipelineConfig:
    lexicon_path: Path = _DATA_DIR / "demo_lexicon.tsv"
    section_rules_path: Path | None = None
    abbrev_list_path: Path | None = None
    assertion_rules_path: Path | None = None
    remote_url: str | None = None
    workers: int = 1
    output_dir: Path = Path("run")
    seed: int = 0

    def __post_init__(self) -> None:
        if self.workers < 1:
            raise StartupError("worker count must be >= 1")

    @classmethod
    def from_file(cls, path: str | Path) -> "PipelineConfig":
        try:
            import tomllib  # type: ignore[import-not-found]
        except ModuleNotFoundError:
            import tomli as tomllib
        with open(path, "rb") as fh:
            data = tomllib.load(fh)
        known = {
            "lexicon": "lexicon_path",
            "section_rules": "section_rules_path",
            "abbrev_list": "abbrev_list_path",
            "assertion_rules": "assertion_rules_path",
            "remote_url": "remote_url",
            "workers": "workers",
            "output_dir": "output_dir",
            "seed": "seed",
        }
        kwargs: dict = {}
        for key, value in data.items():
            if key not in known:
                raise StartupError(f"{path}: unknown config key {key!r}")
            attr = known[key]
            if attr.endswith("_path") or attr == "output_dir":
                value = Path(value)
            kwargs[attr] = value
        return cls(**kwargs)


@dataclass
class RunSummary:
    notes_processed: int
    notes_skipped: int
    mentions_emitted: int
    positive_total: int
    negative_total: int
    timing_mean: dict[str, float]
    timing_sd: dict[str, float]
    wall_total: float
    remote_fallbacks: int = 0

    def as_dict(self) -> dict:
        return {
            "notes_processed": self.notes_processed,
            "notes_skipped": self.notes_skipped,
            "mentions_emitted": self.mentions_emitted,
            "positive_total": self.positive_total,
            "negative_total": self.negative_total,
            "timing_mean_seconds_per_note": self.timing_mean,
            "timing_sd_seconds_per_note": self.timing_sd,
            "wall_total_seconds": self.wall_total,
            "remote_fallbacks": self.remote_fallbacks,
        }


@dataclass
class _SharedContext:
    index: MatcherIndex
    lexicon: Lexicon
    engine: RuleEngine
    section_titles: list[str]
    abbreviations: set[str]
    fingerprint: str
    remote_url: str | None
    remote_gate: threading.Semaphore


@dataclass
class _NoteResult:
    doc: Document
    sections: list[Section]
    output: PipelineOutput  # timing holds stage times; serialization filled later
    fallbacks: int
    error: str | None = None


def _load_context(config: PipelineConfig) -> _SharedContext:
    if not Path(config.lexicon_path).is_file():
        raise StartupError(f"lexicon file not found: {config.lexicon_path}")
    lexicon = load_lexicon(config.lexicon_path)
    titles = (
        load_line_list(config.section_rules_path)
        if config.section_rules_path
        else default_section_titles()
    )
    abbreviations = (
        set(load_line_list(config.abbrev_list_path))
        if config.abbrev_list_path
        else default_abbreviations()
    )
    rules = load_rules(config.assertion_rules_path) if config.assertion_rules_path else default_rules()
    return _SharedContext(
        index=MatcherIndex(lexicon),
        lexicon=lexicon,
        engine=RuleEngine(rules),
        section_titles=titles,
        abbreviations=abbreviations,
        fingerprint=fingerprint_file(config.lexicon_path),
        remote_url=config.remote_url,
        remote_gate=threading.Semaphore(REMOTE_IN_FLIGHT_LIMIT),
    )


def process_note(doc: Document, ctx: _SharedContext) -> _NoteResult:
    """Segment, match, and assert one note; timing excludes serialization."""
    fallbacks = 0
    t0 = time.perf_counter()
    sections = split_sections(doc, ctx.section_titles)
    t1 = time.perf_counter()
    sentences = split_sentences(doc, sections, ctx.abbreviations)
    t2 = time.perf_counter()
    mentions = find_mentions(ctx.index, doc, sentences)
    t3 = time.perf_counter()
    pairs = []
    sentence_ctx_cache: dict[int, object] = {}
    for mention in mentions:
        sentence = sentences[mention.sentence_index]
        sent_text = sentence.span.slice(doc.text)
        rel_start = mention.span.start - sentence.span.start
        rel_end = mention.span.end - sentence.span.start
        result = None
        if ctx.remote_url:
            with ctx.remote_gate:
                try:
                    result = classify_remote(ctx.remote_url, sent_text, rel_start, rel_end)
                except RemoteClassifierError:
                    fallbacks += 1
                    result = None
        if result is None:
            sent_ctx = sentence_ctx_cache.get(mention.sentence_index)
            if sent_ctx is None:
                sent_ctx = ctx.engine.analyze(sent_text)
                sentence_ctx_cache[mention.sentence_index] = sent_ctx
            result = ctx.engine.assert_in_context(sent_ctx, rel_start, rel_end)
        pairs.append((mention, result.shifted(sentence.span.start)))
    t4 = time.perf_counter()
    timing = TimingRecord(
        segment_sections=t1 - t0,
        segment_sentences=t2 - t1,
        ner=t3 - t2,
        assertion=t4 - t3,
        serialization=0.0,
        total=t4 - t0,
    )
    output = PipelineOutput(
        note_id=doc.note_id,
        site_id=doc.site_id,
        mentions=pairs,
        pipeline_version=PIPELINE_VERSION,
        lexicon_fingerprint=ctx.fingerprint,
        timing=timing,
    )
    return _NoteResult(doc=doc, sections=sections, output=output, fallbacks=fallbacks)


def _safe_process(doc: Document, ctx: _SharedContext) -> _NoteResult:
    try:
        return process_note(doc, ctx)
    except Exception as exc:  # per-note failures skip the note, never abort
        empty = PipelineOutput(doc.note_id, doc.site_id, [], PIPELINE_VERSION, ctx.fingerprint)
        return _NoteResult(doc=doc, sections=[], output=empty, fallbacks=0, error=str(exc))


def run(config: PipelineConfig, input_path: str | Path, input_format: str | None = None) -> RunSummary:
    """Process a notes file and write the run's output files.

    Outputs under config.output_dir: mentions.jsonl, mentions.bioc.xml,
    note_nlp.csv, timing.csv. Startup problems raise StartupError; per-note
    failures are skipped with a diagnostic on stderr.
    """
    wall_start = time.perf_counter()
    ctx = _load_context(config)
    out_dir = Path(config.output_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    stream = NoteStream(input_path, input_format)

    outputs: list[PipelineOutput] = []
    docs: dict[str, Document] = {}
    sections_by_note: dict[str, list[Section]] = {}
    timings: list[TimingRecord] = []
    mentions_total = 0
    positive_total = 0
    negative_total = 0
    fallbacks = 0
    failed = 0

    with open(out_dir / "mentions.jsonl", "w", encoding="utf-8") as jsonl:
        def handle(result: _NoteResult) -> None:
            nonlocal mentions_total, positive_total, negative_total, fallbacks, failed
            if result.error is not None:
                failed += 1
                print(f"symscribe: skipping note {result.doc.note_id!r}: {result.error}", file=sys.stderr)
                return
            t5 = time.perf_counter()
            line = serialize_output(replace_timing(result.output, None))
            jsonl.write(line + "\n")
            ser = time.perf_counter() - t5
            base = result.output.timing
            assert base is not None
            timing = TimingRecord(
                segment_sections=base.segment_sections,
                segment_sentences=base.segment_sentences,
                ner=base.ner,
                assertion=base.assertion,
                serialization=ser,
                total=base.total + ser,
            )
            result.output.timing = timing
            timings.append(timing)
            outputs.append(result.output)
            docs[result.doc.note_id] = result.doc
            sections_by_note[result.doc.note_id] = result.sections
            fallbacks += result.fallbacks
            mentions_total += len(result.output.mentions)
            for _, assertion in result.output.mentions:
                if assertion.binary.value == "positive":
                    positive_total += 1
                else:
                    negative_total += 1

        if config.workers == 1:
            for doc in stream:
                handle(_safe_process(doc, ctx))
        else:
            with ThreadPoolExecutor(max_workers=config.workers) as pool:
                for result in pool.map(lambda d: _safe_process(d, ctx), stream):
                    handle(result)

    _write_timing_csv(outputs, out_dir / "timing.csv")
    (out_dir / "mentions.bioc.xml").write_text(
        to_bioc(outputs, docs, sections_by_note), encoding="utf-8"
    )
    write_note_nlp_csv(to_omop_note_nlp(outputs), out_dir / "note_nlp.csv")

    stage_names = ("segment_sections", "segment_sentences", "ner", "assertion", "serialization", "total")
    timing_mean: dict[str, float] = {}
    timing_sd: dict[str, float] = {}
    for name in stage_names:
        values = np.asarray([getattr(t, name) for t in timings], dtype=float)
        timing_mean[name] = float(values.mean()) if len(values) else 0.0
        timing_sd[name] = float(values.std(ddof=0)) if len(values) else 0.0

    return RunSummary(
        notes_processed=len(outputs),
        notes_skipped=stream.skipped + failed,
        mentions_emitted=mentions_total,
        positive_total=positive_total,
        negative_total=negative_total,
        timing_mean=timing_mean,
        timing_sd=timing_sd,
        wall_total=time.perf_counter() - wall_start,
        remote_fallbacks=fallbacks,
    )


def replace_timing(output: PipelineOutput, timing: TimingRecord | None) -> PipelineOutput:
    return PipelineOutput(
        note_id=output.note_id,
        site_id=output.site_id,
        mentions=output.mentions,
        pipeline_version=output.pipeline_version,
        lexicon_fingerprint=output.lexicon_fingerprint,
        timing=timing,
    )


def _write_timing_csv(outputs: list[PipelineOutput], path: Path) -> None:
    import csv

    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(
            ["note_id", "segment_sections", "segment_sentences", "ner", "assertion", "serialization", "total"]
        )
        for output in outputs:
            t = output.timing
            if t is None:
                continue
            writer.writerow(
                [
                    output.note_id,
                    f"{t.segment_sections:.6f}",
                    f"{t.segment_sentences:.6f}",
                    f"{t.ner:.6f}",
                    f"{t.assertion:.6f}",
                    f"{t.serialization:.6f}",
                    f"{t.total:.6f}",
                ]
            )
