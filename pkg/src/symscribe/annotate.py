"""Annotation review backend: serve extracted mentions to human annotators,
persist their judgments, compute inter-rater agreement, and export the
adjudicated gold set.

Storage is an append-only JSONL journal per session plus a meta.json written
once at creation; the in-memory index is rebuilt from disk on startup, so a
killed server loses nothing that was acknowledged. Writes are serialized
through one lock; reads are lock-free snapshots.
"""

from __future__ import annotations

import hashlib
import json
import mimetypes
import os
import re
import threading
import time
from dataclasses import dataclass, field
from http.server import BaseHTTPRequestHandler, ThreadingHTTPServer
from pathlib import Path
from urllib.parse import parse_qs, urlparse

from .assertion import AssertionStatus, BinaryAssertion
from .docmodel import parse_bioc
from .metrics import cohens_kappa


class AnnotateError(ValueError):
    pass


class EmptyRun(AnnotateError):
    pass


class UnknownSession(AnnotateError):
    pass


class UnknownTask(AnnotateError):
    pass


class UnknownAnnotator(AnnotateError):
    pass


class MissingStatus(AnnotateError):
    """Related judgments need a status; unrelated ones must not carry one."""


class IncompleteSession(AnnotateError):
    pass


@dataclass(frozen=True)
class AnnotationTask:
    task_id: str
    note_id: str
    start: int  # note-absolute mention span
    end: int
    passage: str
    highlight_start: int  # within passage
    highlight_end: int
    suggested_category: str

    def as_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "note_id": self.note_id,
            "start": self.start,
            "end": self.end,
            "passage": self.passage,
            "highlight_start": self.highlight_start,
            "highlight_end": self.highlight_end,
            "suggested_category": self.suggested_category,
        }


@dataclass(frozen=True)
class AnnotationRecord:
    task_id: str
    annotator_id: str
    related: bool
    status: AssertionStatus | None
    timestamp: float

    def as_dict(self) -> dict:
        return {
            "task_id": self.task_id,
            "annotator_id": self.annotator_id,
            "related": self.related,
            "status": self.status.value if self.status else None,
            "timestamp": self.timestamp,
        }


@dataclass(frozen=True)
class GoldEntry:
    note_id: str
    start: int
    end: int
    binary: BinaryAssertion


@dataclass(frozen=True)
class GoldSet:
    entries: list[GoldEntry]
    annotators: list[str]
    kappa: float
    removed: int

    @property
    def total(self) -> int:
        return len(self.entries) + self.removed


@dataclass
class Session:
    session_id: str
    run_path: str
    annotators: list[str]
    created: float
    tasks: list[AnnotationTask]
    records: dict[tuple[str, str], AnnotationRecord] = field(default_factory=dict)

    def task_map(self) -> dict[str, AnnotationTask]:
        return {t.task_id: t for t in self.tasks}

    def completed_by(self, annotator: str) -> int:
        return sum(1 for t in self.tasks if (t.task_id, annotator) in self.records)


def _binary_label(record: AnnotationRecord) -> str:
    if record.related and record.status is AssertionStatus.PRESENT:
        return BinaryAssertion.POSITIVE.value
    return BinaryAssertion.NON_POSITIVE.value


def tasks_from_run(run_path: str | Path) -> list[AnnotationTask]:
    """Build one task per extracted mention from a run directory's BioC file.

    The context passage shown to annotators is the section the mention sits
    in, with the highlight rebased into it.
    """
    run_path = Path(run_path)
    bioc_path = run_path / "mentions.bioc.xml" if run_path.is_dir() else run_path
    if not bioc_path.is_file():
        raise AnnotateError(f"run output not found: {bioc_path}")
    tasks: list[AnnotationTask] = []
    for doc in parse_bioc(bioc_path.read_text(encoding="utf-8")):
        for passage in doc.passages:
            for ann in passage.annotations:
                start = ann.offset
                end = ann.offset + ann.length
                tasks.append(
                    AnnotationTask(
                        task_id=f"{doc.id}:{start}-{end}",
                        note_id=doc.id,
                        start=start,
                        end=end,
                        passage=passage.text,
                        highlight_start=start - passage.offset,
                        highlight_end=end - passage.offset,
                        suggested_category=ann.infons.get("category_id", ""),
                    )
                )
    tasks.sort(key=lambda t: (t.note_id, t.start))
    return tasks


class SessionStore:
    """Durable session registry under one data directory."""

    def __init__(self, data_dir: str | Path) -> None:
        self.data_dir = Path(data_dir)
        self.data_dir.mkdir(parents=True, exist_ok=True)
        self._lock = threading.Lock()
        self.sessions: dict[str, Session] = {}
        self._recover()

    # -- persistence ------------------------------------------------------

    def _session_dir(self, session_id: str) -> Path:
        return self.data_dir / session_id

    def _recover(self) -> None:
        for meta_path in sorted(self.data_dir.glob("*/meta.json")):
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
            session = Session(
                session_id=meta["session_id"],
                run_path=meta["run_path"],
                annotators=list(meta["annotators"]),
                created=float(meta["created"]),
                tasks=[
                    AnnotationTask(
                        task_id=t["task_id"],
                        note_id=t["note_id"],
                        start=t["start"],
                        end=t["end"],
                        passage=t["passage"],
                        highlight_start=t["highlight_start"],
                        highlight_end=t["highlight_end"],
                        suggested_category=t["suggested_category"],
                    )
                    for t in meta["tasks"]
                ],
            )
            journal = meta_path.parent / "journal.jsonl"
            if journal.is_file():
                with open(journal, encoding="utf-8") as fh:
                    for line in fh:
                        if not line.strip():
                            continue
                        rec = json.loads(line)
                        record = AnnotationRecord(
                            task_id=rec["task_id"],
                            annotator_id=rec["annotator_id"],
                            related=rec["related"],
                            status=AssertionStatus(rec["status"]) if rec.get("status") else None,
                            timestamp=float(rec["timestamp"]),
                        )
                        session.records[(record.task_id, record.annotator_id)] = record
            self.sessions[session.session_id] = session

    def _append_journal(self, session: Session, record: AnnotationRecord) -> None:
        path = self._session_dir(session.session_id) / "journal.jsonl"
        with open(path, "a", encoding="utf-8") as fh:
            fh.write(json.dumps(record.as_dict(), ensure_ascii=False) + "\n")
            fh.flush()
            os.fsync(fh.fileno())

    # -- operations -------------------------------------------------------

    def create_session(self, run_path: str | Path, annotators: list[str]) -> Session:
        """Create (or idempotently return) the session for a run's mentions."""
        if not annotators:
            raise AnnotateError("need at least one annotator")
        tasks = tasks_from_run(run_path)
        if not tasks:
            raise EmptyRun(f"run at {run_path} contains no mentions")
        key = json.dumps([sorted(t.task_id for t in tasks), sorted(annotators)])
        session_id = "s" + hashlib.sha1(key.encode("utf-8")).hexdigest()[:12]
        with self._lock:
            existing = self.sessions.get(session_id)
            if existing is not None:
                return existing
            session = Session(
                session_id=session_id,
                run_path=str(run_path),
                annotators=list(annotators),
                created=time.time(),
                tasks=tasks,
            )
            sdir = self._session_dir(session_id)
            sdir.mkdir(parents=True, exist_ok=True)
            meta = {
                "session_id": session.session_id,
                "run_path": session.run_path,
                "annotators": session.annotators,
                "created": session.created,
                "tasks": [t.as_dict() for t in session.tasks],
            }
            tmp = sdir / "meta.json.tmp"
            tmp.write_text(json.dumps(meta, ensure_ascii=False), encoding="utf-8")
            tmp.replace(sdir / "meta.json")
            self.sessions[session_id] = session
            return session

    def get(self, session_id: str) -> Session:
        session = self.sessions.get(session_id)
        if session is None:
            raise UnknownSession(f"no session {session_id!r}")
        return session

    def submit(
        self,
        session_id: str,
        task_id: str,
        annotator_id: str,
        related: bool,
        status: str | None,
        timestamp: float | None = None,
    ) -> AnnotationRecord:
        """Validate and durably persist one judgment; resubmission overwrites."""
        session = self.get(session_id)
        if task_id not in session.task_map():
            raise UnknownTask(f"no task {task_id!r} in session {session_id!r}")
        if annotator_id not in session.annotators:
            raise UnknownAnnotator(f"annotator {annotator_id!r} not registered for this session")
        if related:
            if not status:
                raise MissingStatus("related=true requires one of the five statuses")
            parsed: AssertionStatus | None = AssertionStatus(status)
        else:
            if status:
                raise MissingStatus("related=false must not carry a status")
            parsed = None
        record = AnnotationRecord(
            task_id=task_id,
            annotator_id=annotator_id,
            related=related,
            status=parsed,
            timestamp=timestamp if timestamp is not None else time.time(),
        )
        with self._lock:
            self._append_journal(session, record)
            session.records[(task_id, annotator_id)] = record
        return record

    def compute_agreement(self, session_id: str) -> dict:
        """Kappa over binary-collapsed judgments plus the disagreement list.

        Requires a two-annotator session with every task judged by both.
        """
        session = self.get(session_id)
        if len(session.annotators) != 2:
            raise IncompleteSession("agreement needs a session with exactly two annotators")
        a1, a2 = session.annotators
        pending = [
            t.task_id
            for t in session.tasks
            if (t.task_id, a1) not in session.records or (t.task_id, a2) not in session.records
        ]
        if pending:
            raise IncompleteSession(f"{len(pending)} task(s) still unannotated by one or both annotators")
        labels_1: list[str] = []
        labels_2: list[str] = []
        disagreements: list[str] = []
        for task in session.tasks:
            r1 = session.records[(task.task_id, a1)]
            r2 = session.records[(task.task_id, a2)]
            labels_1.append(_binary_label(r1))
            labels_2.append(_binary_label(r2))
            unrelated = not (r1.related and r2.related)
            conflicting = r1.related and r2.related and r1.status is not r2.status
            if unrelated or conflicting:
                disagreements.append(task.task_id)
        kappa = cohens_kappa(labels_1, labels_2)
        return {
            "annotators": [a1, a2],
            "kappa": kappa,
            "tasks": len(session.tasks),
            "disagreements": disagreements,
        }

    def export_gold(self, session_id: str) -> GoldSet:
        """Adjudicate: keep tasks where both annotators marked related and
        agreed on the five-way status; everything else is removed.
        """
        agreement = self.compute_agreement(session_id)
        session = self.get(session_id)
        a1, a2 = session.annotators
        entries: list[GoldEntry] = []
        for task in session.tasks:
            r1 = session.records[(task.task_id, a1)]
            r2 = session.records[(task.task_id, a2)]
            if r1.related and r2.related and r1.status is r2.status:
                assert r1.status is not None
                binary = (
                    BinaryAssertion.POSITIVE
                    if r1.status is AssertionStatus.PRESENT
                    else BinaryAssertion.NON_POSITIVE
                )
                entries.append(GoldEntry(task.note_id, task.start, task.end, binary))
        return GoldSet(
            entries=entries,
            annotators=[a1, a2],
            kappa=agreement["kappa"],
            removed=len(session.tasks) - len(entries),
        )


# ---------------------------------------------------------------------------
# HTTP layer

_TASKS_RE = re.compile(r"^/api/sessions/([^/]+)/tasks$")
_AGREEMENT_RE = re.compile(r"^/api/sessions/([^/]+)/agreement$")
_GOLD_RE = re.compile(r"^/api/sessions/([^/]+)/gold$")

_ERROR_HTTP_STATUS = {
    UnknownSession: 404,
    UnknownTask: 404,
    UnknownAnnotator: 404,
    MissingStatus: 400,
    EmptyRun: 400,
    IncompleteSession: 409,
    AnnotateError: 400,
}


def _session_summary(session: Session) -> dict:
    return {
        "session_id": session.session_id,
        "run_path": session.run_path,
        "annotators": session.annotators,
        "task_count": len(session.tasks),
        "created": session.created,
    }


class AnnotationHandler(BaseHTTPRequestHandler):
    server: "AnnotationServer"

    def log_message(self, fmt: str, *args) -> None:  # quiet by default
        if os.environ.get("SYMSCRIBE_HTTP_LOG"):
            super().log_message(fmt, *args)

    # -- helpers ----------------------------------------------------------

    def _json(self, payload: dict | list, status: int = 200) -> None:
        body = json.dumps(payload, ensure_ascii=False).encode("utf-8")
        self.send_response(status)
        self.send_header("Content-Type", "application/json; charset=utf-8")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _error(self, exc: Exception) -> None:
        status = 500
        for klass, code in _ERROR_HTTP_STATUS.items():
            if isinstance(exc, klass):
                status = code
                break
        self._json({"error": type(exc).__name__, "message": str(exc)}, status=status)

    def _read_body(self) -> dict:
        length = int(self.headers.get("Content-Length") or 0)
        raw = self.rfile.read(length) if length else b"{}"
        try:
            payload = json.loads(raw.decode("utf-8"))
        except json.JSONDecodeError as exc:
            raise AnnotateError(f"request body is not valid JSON: {exc}") from exc
        if not isinstance(payload, dict):
            raise AnnotateError("request body must be a JSON object")
        return payload

    # -- routes -----------------------------------------------------------

    def do_GET(self) -> None:  # noqa: N802 (stdlib handler API)
        parsed = urlparse(self.path)
        store = self.server.store
        try:
            if parsed.path == "/api/sessions":
                sessions = [_session_summary(s) for s in store.sessions.values()]
                sessions.sort(key=lambda s: s["created"])
                self._json({"sessions": sessions})
                return
            m = _TASKS_RE.match(parsed.path)
            if m:
                self._tasks(store.get(m.group(1)), parse_qs(parsed.query))
                return
            m = _AGREEMENT_RE.match(parsed.path)
            if m:
                self._json(store.compute_agreement(m.group(1)))
                return
            m = _GOLD_RE.match(parsed.path)
            if m:
                self._gold(store, m.group(1))
                return
            if parsed.path.startswith("/api/"):
                self._json({"error": "NotFound", "message": parsed.path}, status=404)
                return
            self._static(parsed.path)
        except Exception as exc:  # noqa: BLE001 - map to HTTP error payloads
            self._error(exc)

    def do_POST(self) -> None:  # noqa: N802
        parsed = urlparse(self.path)
        store = self.server.store
        try:
            if parsed.path == "/api/sessions":
                body = self._read_body()
                run = body.get("run")
                annotators = body.get("annotators")
                if not run or not isinstance(annotators, list) or not annotators:
                    raise AnnotateError("body must carry 'run' (path) and non-empty 'annotators' (list)")
                session = store.create_session(run, [str(a) for a in annotators])
                self._json(_session_summary(session), status=201)
                return
            if parsed.path == "/api/annotations":
                body = self._read_body()
                for key in ("session_id", "task_id", "annotator_id"):
                    if not body.get(key):
                        raise AnnotateError(f"missing field {key!r}")
                if not isinstance(body.get("related"), bool):
                    raise AnnotateError("field 'related' must be a boolean")
                record = store.submit(
                    session_id=body["session_id"],
                    task_id=body["task_id"],
                    annotator_id=body["annotator_id"],
                    related=body["related"],
                    status=body.get("status"),
                )
                self._json({"ok": True, "record": record.as_dict()})
                return
            self._json({"error": "NotFound", "message": parsed.path}, status=404)
        except Exception as exc:  # noqa: BLE001
            self._error(exc)

    def _tasks(self, session: Session, query: dict[str, list[str]]) -> None:
        annotator = (query.get("annotator") or [None])[0]
        if not annotator:
            raise AnnotateError("query parameter 'annotator' is required")
        if annotator not in session.annotators:
            raise UnknownAnnotator(f"annotator {annotator!r} not registered for this session")
        cursor = int((query.get("cursor") or ["0"])[0])
        limit = int((query.get("limit") or ["50"])[0])
        window = session.tasks[cursor : cursor + limit]
        tasks = []
        for task in window:
            record = session.records.get((task.task_id, annotator))
            view = task.as_dict()
            view["record"] = record.as_dict() if record else None
            tasks.append(view)
        completed = session.completed_by(annotator)
        agreement_available = len(session.annotators) == 2 and all(
            session.completed_by(a) == len(session.tasks) for a in session.annotators
        )
        self._json(
            {
                "tasks": tasks,
                "cursor": cursor,
                "next_cursor": cursor + len(window) if cursor + len(window) < len(session.tasks) else None,
                "total": len(session.tasks),
                "completed": completed,
                "remaining": len(session.tasks) - completed,
                "agreement_available": agreement_available,
            }
        )

    def _gold(self, store: SessionStore, session_id: str) -> None:
        gold = store.export_gold(session_id)
        lines = [
            json.dumps(
                {"note_id": e.note_id, "start": e.start, "end": e.end, "binary": e.binary.value},
                ensure_ascii=False,
            )
            for e in gold.entries
        ]
        body = ("\n".join(lines) + ("\n" if lines else "")).encode("utf-8")
        self.send_response(200)
        self.send_header("Content-Type", "application/x-ndjson; charset=utf-8")
        self.send_header("Content-Disposition", f'attachment; filename="gold_{session_id}.jsonl"')
        self.send_header("X-Kappa", f"{gold.kappa:.6f}")
        self.send_header("X-Removed", str(gold.removed))
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def _static(self, path: str) -> None:
        root = self.server.frontend_dir
        if root is None:
            body = (
                b"<!doctype html><title>symscribe annotation service</title>"
                b"<h1>symscribe annotation service</h1>"
                b"<p>No frontend bundle configured. The JSON API lives under /api/.</p>"
            )
            self.send_response(200)
            self.send_header("Content-Type", "text/html; charset=utf-8")
            self.send_header("Content-Length", str(len(body)))
            self.end_headers()
            self.wfile.write(body)
            return
        rel = path.lstrip("/") or "index.html"
        target = (root / rel).resolve()
        if not str(target).startswith(str(root.resolve())) or not target.is_file():
            if (root / "index.html").is_file() and "." not in rel:
                target = (root / "index.html").resolve()
            else:
                self._json({"error": "NotFound", "message": path}, status=404)
                return
        data = target.read_bytes()
        ctype = mimetypes.guess_type(str(target))[0] or "application/octet-stream"
        self.send_response(200)
        self.send_header("Content-Type", ctype)
        self.send_header("Content-Length", str(len(data)))
        self.end_headers()
        self.wfile.write(data)


class AnnotationServer(ThreadingHTTPServer):
    daemon_threads = True

    def __init__(self, address: tuple[str, int], store: SessionStore, frontend_dir: Path | None = None):
        super().__init__(address, AnnotationHandler)
        self.store = store
        self.frontend_dir = frontend_dir


def serve(port: int = 8680, data_dir: str | Path | None = None, frontend_dir: str | Path | None = None) -> None:
    """Run the annotation service until interrupted."""
    data_dir = data_dir or os.environ.get("SYMSCRIBE_DATA") or "annotation_data"
    store = SessionStore(data_dir)
    front = Path(frontend_dir) if frontend_dir else None
    server = AnnotationServer(("0.0.0.0", port), store, front)
    print(f"symscribe annotation service on port {port}, data in {data_dir}", flush=True)
    try:
        server.serve_forever()
    except KeyboardInterrupt:
        pass
    finally:
        server.server_close()
