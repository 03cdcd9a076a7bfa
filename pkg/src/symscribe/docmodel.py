"""Record types and serialization: note ingestion, internal JSONL, BioC XML,
and OMOP note_nlp-shaped tabular output.

The internal JSONL (one pipeline output per line, fixed field order) is the
format of record consumed by the evaluation and prevalence modules. Offsets
in every serialization are character offsets into the original note text.
"""

from __future__ import annotations

import csv
import hashlib
import io
import json
import xml.etree.ElementTree as ET
from dataclasses import dataclass
from datetime import date
from pathlib import Path
from typing import Iterator

from .assertion import AssertionResult, AssertionStatus, BinaryAssertion, Engine
from .ner import Mention
from .segment import Document, Section, Span


class IngestError(ValueError):
    pass


class MissingColumn(IngestError):
    pass


class UnreadableFile(IngestError):
    pass


class UnknownNote(KeyError):
    pass


@dataclass(frozen=True)
class TimingRecord:
    segment_sections: float
    segment_sentences: float
    ner: float
    assertion: float
    serialization: float
    total: float


@dataclass
class PipelineOutput:
    note_id: str
    site_id: str
    mentions: list[tuple[Mention, AssertionResult]]
    pipeline_version: str
    lexicon_fingerprint: str
    timing: TimingRecord | None = None


def fingerprint_file(path: str | Path) -> str:
    """Content hash of a file, stable for identical bytes."""
    digest = hashlib.sha256(Path(path).read_bytes()).hexdigest()
    return f"sha256:{digest}"


# ---------------------------------------------------------------------------
# Note ingestion

_REQUIRED = ("note_id", "site_id", "text")

# Long single-line notes blow the csv module's 128 KB default field cap.
csv.field_size_limit(min(2**31 - 1, 1 << 30))


class NoteStream:
    """Iterate Documents out of a CSV or JSONL notes file.

    Malformed rows are skipped and counted (`skipped`, `diagnostics`);
    structural problems (missing header column, unreadable file) abort.
    """

    def __init__(self, path: str | Path, fmt: str | None = None) -> None:
        self.path = Path(path)
        if fmt is None:
            fmt = "jsonl" if self.path.suffix.lower() in (".jsonl", ".ndjson") else "csv"
        if fmt not in ("csv", "jsonl"):
            raise IngestError(f"unsupported format {fmt!r}")
        self.fmt = fmt
        self.skipped = 0
        self.read = 0
        self.diagnostics: list[str] = []
        if not self.path.is_file():
            raise UnreadableFile(f"notes file not found: {self.path}")

    def __iter__(self) -> Iterator[Document]:
        if self.fmt == "csv":
            yield from self._iter_csv()
        else:
            yield from self._iter_jsonl()

    def _skip(self, where: str, why: str) -> None:
        self.skipped += 1
        self.diagnostics.append(f"{where}: {why}")

    def _iter_csv(self) -> Iterator[Document]:
        with open(self.path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            header = reader.fieldnames or []
            for col in _REQUIRED:
                if col not in header:
                    raise MissingColumn(f"{self.path.name}: required column {col!r} missing")
            for rownum, row in enumerate(reader, start=2):
                missing = [c for c in _REQUIRED if not (row.get(c) or "").strip() and c != "text"]
                if row.get("text") is None or row["text"] == "":
                    missing.append("text")
                if missing:
                    self._skip(f"{self.path.name}:{rownum}", f"empty field(s): {', '.join(missing)}")
                    continue
                metadata = {
                    k: v for k, v in row.items() if k not in _REQUIRED and k is not None and v not in (None, "")
                }
                self.read += 1
                yield Document(note_id=row["note_id"], site_id=row["site_id"], text=row["text"], metadata=metadata)

    def _iter_jsonl(self) -> Iterator[Document]:
        with open(self.path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                if not line.strip():
                    continue
                try:
                    obj = json.loads(line)
                except json.JSONDecodeError as exc:
                    self._skip(f"{self.path.name}:{lineno}", f"invalid JSON: {exc}")
                    continue
                if not isinstance(obj, dict) or any(not isinstance(obj.get(c), str) or obj.get(c) == "" for c in ("note_id", "site_id")) or not isinstance(obj.get("text"), str) or obj["text"] == "":
                    self._skip(f"{self.path.name}:{lineno}", "missing or empty note_id/site_id/text")
                    continue
                metadata = obj.get("metadata") or {}
                self.read += 1
                yield Document(note_id=obj["note_id"], site_id=obj["site_id"], text=obj["text"], metadata=dict(metadata))


def ingest_notes(path: str | Path, fmt: str | None = None) -> NoteStream:
    return NoteStream(path, fmt)


# ---------------------------------------------------------------------------
# Internal JSONL

def _mention_to_dict(mention: Mention, result: AssertionResult) -> dict:
    trigger = None
    if result.trigger_phrase is not None and result.trigger_span is not None:
        trigger = {
            "phrase": result.trigger_phrase,
            "start": result.trigger_span[0],
            "end": result.trigger_span[1],
        }
    return {
        "start": mention.span.start,
        "end": mention.span.end,
        "text": mention.matched_text,
        "concept_id": mention.concept_id,
        "category_id": mention.category_id,
        "sentence_index": mention.sentence_index,
        "section_index": mention.section_index,
        "status": result.status.value,
        "binary": result.binary.value,
        "trigger": trigger,
        "engine": result.engine.value,
    }


def serialize_output(output: PipelineOutput) -> str:
    """One canonical JSON line per pipeline output (fixed field order)."""
    timing = None
    if output.timing is not None:
        t = output.timing
        timing = {
            "segment_sections": t.segment_sections,
            "segment_sentences": t.segment_sentences,
            "ner": t.ner,
            "assertion": t.assertion,
            "serialization": t.serialization,
            "total": t.total,
        }
    record = {
        "note_id": output.note_id,
        "site_id": output.site_id,
        "pipeline_version": output.pipeline_version,
        "lexicon_fingerprint": output.lexicon_fingerprint,
        "mentions": [_mention_to_dict(m, r) for m, r in output.mentions],
        "timing": timing,
    }
    return json.dumps(record, ensure_ascii=False, separators=(",", ":"))


def parse_output(line: str) -> PipelineOutput:
    obj = json.loads(line)
    mentions: list[tuple[Mention, AssertionResult]] = []
    for m in obj["mentions"]:
        mention = Mention(
            note_id=obj["note_id"],
            span=Span(m["start"], m["end"]),
            matched_text=m["text"],
            concept_id=m["concept_id"],
            category_id=m["category_id"],
            sentence_index=m["sentence_index"],
            section_index=m["section_index"],
        )
        trig = m.get("trigger")
        result = AssertionResult(
            status=AssertionStatus(m["status"]),
            binary=BinaryAssertion(m["binary"]),
            trigger_phrase=trig["phrase"] if trig else None,
            trigger_span=(trig["start"], trig["end"]) if trig else None,
            engine=Engine(m["engine"]),
        )
        mentions.append((mention, result))
    timing = None
    if obj.get("timing") is not None:
        t = obj["timing"]
        timing = TimingRecord(
            segment_sections=t["segment_sections"],
            segment_sentences=t["segment_sentences"],
            ner=t["ner"],
            assertion=t["assertion"],
            serialization=t["serialization"],
            total=t["total"],
        )
    return PipelineOutput(
        note_id=obj["note_id"],
        site_id=obj["site_id"],
        mentions=mentions,
        pipeline_version=obj["pipeline_version"],
        lexicon_fingerprint=obj["lexicon_fingerprint"],
        timing=timing,
    )


def read_outputs(path: str | Path) -> Iterator[PipelineOutput]:
    with open(path, encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield parse_output(line)


# ---------------------------------------------------------------------------
# BioC XML

def to_bioc(
    outputs: list[PipelineOutput],
    docs: dict[str, Document],
    sections_by_note: dict[str, list[Section]],
    run_date: str | None = None,
) -> str:
    """Render outputs as one BioC collection: a document per note, a passage
    per section, and span-exact annotations with concept/category/status
    infons. Raises UnknownNote when an output has no source document.
    """
    collection = ET.Element("collection")
    ET.SubElement(collection, "source").text = "symscribe"
    ET.SubElement(collection, "date").text = run_date or date.today().isoformat()
    ET.SubElement(collection, "key").text = "symscribe.key"
    ann_counter = 0
    for output in outputs:
        doc = docs.get(output.note_id)
        if doc is None:
            raise UnknownNote(output.note_id)
        doc_el = ET.SubElement(collection, "document")
        ET.SubElement(doc_el, "id").text = output.note_id
        site_infon = ET.SubElement(doc_el, "infon", key="site_id")
        site_infon.text = output.site_id
        sections = sections_by_note.get(output.note_id) or [Section(title=None, span=Span(0, max(1, len(doc.text))))]
        if not doc.text:
            sections = []
        for section in sections:
            passage = ET.SubElement(doc_el, "passage")
            if section.title is not None:
                title_infon = ET.SubElement(passage, "infon", key="title")
                title_infon.text = section.title
            ET.SubElement(passage, "offset").text = str(section.span.start)
            ET.SubElement(passage, "text").text = section.span.slice(doc.text)
            for mention, result in output.mentions:
                if not (section.span.start <= mention.span.start < section.span.end):
                    continue
                ann = ET.SubElement(passage, "annotation", id=f"a{ann_counter}")
                ann_counter += 1
                for key, value in (
                    ("concept_id", mention.concept_id),
                    ("category_id", mention.category_id),
                    ("status", result.status.value),
                    ("binary", result.binary.value),
                ):
                    infon = ET.SubElement(ann, "infon", key=key)
                    infon.text = value
                ET.SubElement(
                    ann,
                    "location",
                    offset=str(mention.span.start),
                    length=str(mention.span.end - mention.span.start),
                )
                ET.SubElement(ann, "text").text = mention.matched_text
    buf = io.BytesIO()
    ET.ElementTree(collection).write(buf, encoding="utf-8", xml_declaration=True)
    return buf.getvalue().decode("utf-8")


@dataclass(frozen=True)
class BiocAnnotation:
    id: str
    offset: int
    length: int
    text: str
    infons: dict[str, str]


@dataclass(frozen=True)
class BiocPassage:
    title: str | None
    offset: int
    text: str
    annotations: list[BiocAnnotation]


@dataclass(frozen=True)
class BiocDocument:
    id: str
    site_id: str | None
    passages: list[BiocPassage]


def parse_bioc(xml_text: str) -> list[BiocDocument]:
    """Parse a BioC collection back into a light structure (round-trip aid)."""
    root = ET.fromstring(xml_text)
    documents: list[BiocDocument] = []
    for doc_el in root.findall("document"):
        site = None
        for infon in doc_el.findall("infon"):
            if infon.get("key") == "site_id":
                site = infon.text or ""
        passages: list[BiocPassage] = []
        for p_el in doc_el.findall("passage"):
            title = None
            for infon in p_el.findall("infon"):
                if infon.get("key") == "title":
                    title = infon.text or ""
            annotations: list[BiocAnnotation] = []
            for a_el in p_el.findall("annotation"):
                loc = a_el.find("location")
                annotations.append(
                    BiocAnnotation(
                        id=a_el.get("id", ""),
                        offset=int(loc.get("offset")),
                        length=int(loc.get("length")),
                        text=a_el.findtext("text") or "",
                        infons={i.get("key", ""): (i.text or "") for i in a_el.findall("infon")},
                    )
                )
            passages.append(
                BiocPassage(
                    title=title,
                    offset=int(p_el.findtext("offset") or 0),
                    text=p_el.findtext("text") or "",
                    annotations=annotations,
                )
            )
        documents.append(BiocDocument(id=doc_el.findtext("id") or "", site_id=site, passages=passages))
    return documents


def to_bioc_json(xml_text: str) -> str:
    """Convenience JSON rendering of a BioC collection."""
    docs = parse_bioc(xml_text)
    payload = [
        {
            "id": d.id,
            "site_id": d.site_id,
            "passages": [
                {
                    "title": p.title,
                    "offset": p.offset,
                    "text": p.text,
                    "annotations": [
                        {
                            "id": a.id,
                            "offset": a.offset,
                            "length": a.length,
                            "text": a.text,
                            "infons": a.infons,
                        }
                        for a in p.annotations
                    ],
                }
                for p in d.passages
            ],
        }
        for d in docs
    ]
    return json.dumps({"documents": payload}, ensure_ascii=False, indent=2)


# ---------------------------------------------------------------------------
# OMOP note_nlp

OMOP_NOTE_NLP_COLUMNS = [
    "note_nlp_id",
    "note_id",
    "section_concept_id",
    "snippet",
    "offset",
    "lexical_variant",
    "note_nlp_concept_id",
    "note_nlp_source_concept_id",
    "nlp_system",
    "nlp_date",
    "nlp_datetime",
    "term_exists",
    "term_temporal",
    "term_modifiers",
]


def to_omop_note_nlp(outputs: list[PipelineOutput], nlp_date: str | None = None) -> list[dict[str, str]]:
    """One row per mention; note_nlp_id is sequential in input order, and
    columns the pipeline cannot populate stay empty.
    """
    nlp_date = nlp_date or date.today().isoformat()
    rows: list[dict[str, str]] = []
    next_id = 1
    for output in outputs:
        for mention, result in output.mentions:
            rows.append(
                {
                    "note_nlp_id": str(next_id),
                    "note_id": output.note_id,
                    "section_concept_id": "",
                    "snippet": "",
                    "offset": f"{mention.span.start}-{mention.span.end}",
                    "lexical_variant": mention.matched_text,
                    "note_nlp_concept_id": mention.concept_id,
                    "note_nlp_source_concept_id": mention.category_id,
                    "nlp_system": output.pipeline_version,
                    "nlp_date": nlp_date,
                    "nlp_datetime": "",
                    "term_exists": "Y" if result.binary is BinaryAssertion.POSITIVE else "N",
                    "term_temporal": result.status.value,
                    "term_modifiers": "",
                }
            )
            next_id += 1
    return rows


def write_note_nlp_csv(rows: list[dict[str, str]], path: str | Path) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.DictWriter(fh, fieldnames=OMOP_NOTE_NLP_COLUMNS)
        writer.writeheader()
        writer.writerows(rows)
