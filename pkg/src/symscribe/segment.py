"""Section and sentence segmentation with exact character offsets.

Sections tile the whole note: a recognized title starts a new section at its
line start, and any text before the first title forms an untitled preamble.
Sentence boundaries fall after '.', '!', '?' (unless the terminator ends an
abbreviation or sits inside a token) and after newline runs; runs of three
or more spaces also force a boundary because list-like layouts otherwise let
negation scopes leak across visually separate items.

All offsets are Unicode scalar positions into the original, unmodified text.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

_DATA_DIR = Path(__file__).parent / "data"
_TERMINATORS = frozenset(".!?")


@dataclass(frozen=True)
class Span:
    start: int
    end: int

    def __post_init__(self) -> None:
        if not (0 <= self.start < self.end):
            raise ValueError(f"invalid span [{self.start}, {self.end})")

    def slice(self, text: str) -> str:
        return text[self.start : self.end]


@dataclass(frozen=True)
class Document:
    note_id: str
    site_id: str
    text: str
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.note_id:
            raise ValueError("note_id must be non-empty")


@dataclass(frozen=True)
class Section:
    title: str | None
    span: Span


@dataclass(frozen=True)
class Sentence:
    span: Span
    section_index: int


def load_line_list(path: str | Path) -> list[str]:
    """Read a one-entry-per-line config file; '#' starts a comment line."""
    entries: list[str] = []
    for line in Path(path).read_text(encoding="utf-8").splitlines():
        line = line.strip()
        if line and not line.startswith("#"):
            entries.append(line)
    return entries


def default_section_titles() -> list[str]:
    return load_line_list(_DATA_DIR / "section_titles.txt")


def default_abbreviations() -> set[str]:
    return set(load_line_list(_DATA_DIR / "abbreviations.txt"))


def _title_at_line(line: str, titles_lower: list[tuple[str, str]]) -> str | None:
    """Return the matched title text if the line opens with a known section
    title followed by ':' or is the title standing alone; longest title wins.
    """
    line_lower = line.lower()
    stripped = line_lower.rstrip()
    best: str | None = None
    for t_lower, _ in titles_lower:
        if stripped == t_lower or line_lower.startswith(t_lower + ":"):
            if best is None or len(t_lower) > len(best):
                best = t_lower
    if best is None:
        return None
    return line[: len(best)]


def split_sections(doc: Document, titles: list[str] | None = None) -> list[Section]:
    """Divide a note into title-delimited sections covering the entire text."""
    if titles is None:
        titles = default_section_titles()
    if not titles:
        raise ValueError("section title list must be non-empty")
    text = doc.text
    if not text:
        return []
    titles_lower = [(t.lower(), t) for t in titles]

    # (line_start_offset, matched_title_text) for every title line
    marks: list[tuple[int, str]] = []
    offset = 0
    for line in text.split("\n"):
        matched = _title_at_line(line, titles_lower)
        if matched is not None:
            marks.append((offset, matched))
        offset += len(line) + 1

    sections: list[Section] = []
    if not marks:
        return [Section(title=None, span=Span(0, len(text)))]
    first_start = marks[0][0]
    if first_start > 0:
        sections.append(Section(title=None, span=Span(0, first_start)))
    for i, (start, title_text) in enumerate(marks):
        end = marks[i + 1][0] if i + 1 < len(marks) else len(text)
        sections.append(Section(title=title_text, span=Span(start, end)))
    return sections


def _token_before(text: str, end: int) -> str:
    """The maximal non-whitespace run ending at `end` (exclusive), with any
    leading punctuation such as '(' stripped off.
    """
    start = end
    while start > 0 and not text[start - 1].isspace():
        start -= 1
    token = text[start:end]
    while token and not token[0].isalnum():
        token = token[1:]
    return token


def split_sentences(
    doc: Document,
    sections: list[Section],
    abbreviations: set[str] | None = None,
) -> list[Sentence]:
    """Split each section into trimmed, offset-faithful sentences."""
    if abbreviations is None:
        abbreviations = default_abbreviations()
    abbrev_lower = {a.lower() for a in abbreviations}
    text = doc.text
    sentences: list[Sentence] = []

    for sec_index, section in enumerate(sections):
        lo, hi = section.span.start, section.span.end
        cursor = lo
        i = lo
        while i < hi:
            c = text[i]
            boundary_end: int | None = None
            if c == "\n":
                boundary_end = i
            elif c == " ":
                j = i
                while j < hi and text[j] == " ":
                    j += 1
                if j - i >= 3:
                    boundary_end = i
                else:
                    i = j
                    continue
            elif c in _TERMINATORS:
                # Only a terminator followed by whitespace or end-of-section
                # can close a sentence; this keeps decimals ("98.6") and
                # dotted abbreviations ("p.r.n.") intact.
                j = i
                while j < hi and text[j] in _TERMINATORS:
                    j += 1
                if j >= hi or text[j].isspace():
                    if c == "." and j == i + 1 and _token_before(text, i + 1).lower() in abbrev_lower:
                        i = j
                        continue
                    boundary_end = j
            if boundary_end is None:
                i += 1
                continue
            _emit(text, cursor, boundary_end, sec_index, sentences)
            # Skip the whitespace run that follows the boundary.
            k = boundary_end
            while k < hi and text[k].isspace():
                k += 1
            cursor = k
            i = k
        _emit(text, cursor, hi, sec_index, sentences)
    return sentences


def _emit(text: str, start: int, end: int, sec_index: int, out: list[Sentence]) -> None:
    while start < end and text[start].isspace():
        start += 1
    while end > start and text[end - 1].isspace():
        end -= 1
    if start < end:
        out.append(Sentence(span=Span(start, end), section_index=sec_index))
