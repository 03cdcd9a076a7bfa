"""Dictionary NER: multi-pattern phrase matching over normalized sentence text.

Matching runs on the normalized form of each sentence while spans are
reported against the original note text, so the matcher maintains an offset
map through normalization. Match semantics, shared by the automaton and the
brute-force reference scan:

    1. matches start and end at word boundaries (letter/digit runs delimited
       by non-alphanumerics);
    2. overlapping candidates resolve to the longest match;
    3. equal-length overlaps resolve to the leftmost;
    4. accepted matches never overlap, and output is sorted by start offset.
"""

from __future__ import annotations

from bisect import bisect_right
from collections import deque
from dataclasses import dataclass, field

from .lexicon import Lexicon, NormalizationPolicy, _fold_char
from .segment import Document, Sentence, Span


@dataclass(frozen=True)
class Mention:
    note_id: str
    span: Span
    matched_text: str
    concept_id: str
    category_id: str
    sentence_index: int
    section_index: int


def normalize_with_map(text: str, policy: NormalizationPolicy) -> tuple[str, list[int], list[int]]:
    """Normalize `text` and return (normalized, starts, ends) where
    starts[i]/ends[i] bracket the original characters behind normalized
    char i. Mirrors lexicon.normalize exactly.
    """
    out: list[str] = []
    starts: list[int] = []
    ends: list[int] = []
    run_start: int | None = None
    for idx, c in enumerate(text):
        if c.isspace():
            if policy.collapse_whitespace:
                if run_start is None:
                    run_start = idx
            else:
                out.append(c)
                starts.append(idx)
                ends.append(idx + 1)
            continue
        if run_start is not None:
            if out:
                out.append(" ")
                starts.append(run_start)
                ends.append(idx)
            run_start = None
        out.append(_fold_char(c) if policy.case_fold else c)
        starts.append(idx)
        ends.append(idx + 1)
    return "".join(out), starts, ends


@dataclass
class _Node:
    children: dict[str, "_Node"] = field(default_factory=dict)
    fail: "_Node | None" = None
    # (pattern_length, concept_id, category_id) for every pattern ending here
    output: list[tuple[int, str, str]] = field(default_factory=list)


class MatcherIndex:
    """Aho-Corasick automaton compiled from one lexicon's normalized synonyms.

    Immutable after construction; queries never mutate it, so a single index
    is safe to share across concurrent workers.
    """

    def __init__(self, lexicon: Lexicon) -> None:
        self.policy = lexicon.policy
        self._root = _Node()
        count = 0
        for normed, concept_id, category_id in lexicon.iter_synonyms():
            node = self._root
            for ch in normed:
                node = node.children.setdefault(ch, _Node())
            node.output.append((len(normed), concept_id, category_id))
            count += 1
        self.synonym_count = count
        self._build_failure_links()

    def _build_failure_links(self) -> None:
        root = self._root
        root.fail = root
        queue: deque[_Node] = deque()
        for child in root.children.values():
            child.fail = root
            queue.append(child)
        while queue:
            node = queue.popleft()
            for ch, child in node.children.items():
                fb = node.fail
                while fb is not root and ch not in fb.children:
                    fb = fb.fail
                target = fb.children.get(ch)
                child.fail = target if target is not None and target is not child else root
                child.output = child.output + child.fail.output
                queue.append(child)

    def scan(self, normalized: str) -> list[tuple[int, int, str, str]]:
        """All raw pattern occurrences as (start, end, concept_id, category_id)."""
        hits: list[tuple[int, int, str, str]] = []
        node = self._root
        root = self._root
        for i, ch in enumerate(normalized):
            while node is not root and ch not in node.children:
                node = node.fail
            node = node.children.get(ch, root)
            for length, concept_id, category_id in node.output:
                hits.append((i + 1 - length, i + 1, concept_id, category_id))
        return hits


def compile(lexicon: Lexicon) -> MatcherIndex:  # noqa: A001 - domain verb
    """Build the shared matching index for a validated lexicon."""
    return MatcherIndex(lexicon)


def _at_word_boundaries(normalized: str, start: int, end: int) -> bool:
    if start > 0 and normalized[start - 1].isalnum():
        return False
    if end < len(normalized) and normalized[end].isalnum():
        return False
    return True


def _resolve(candidates: list[tuple[int, int, str, str]]) -> list[tuple[int, int, str, str]]:
    """Longest match wins among overlaps; equal lengths go to the leftmost;
    accepted matches never overlap.

    Accepted intervals are kept sorted so each candidate only needs to be
    checked against its two neighbors.
    """
    ordered = sorted(candidates, key=lambda c: (-(c[1] - c[0]), c[0], c[2]))
    starts_acc: list[int] = []
    ends_acc: list[int] = []
    accepted: list[tuple[int, int, str, str]] = []
    for cand in ordered:
        idx = bisect_right(starts_acc, cand[0])
        if idx > 0 and ends_acc[idx - 1] > cand[0]:
            continue
        if idx < len(starts_acc) and starts_acc[idx] < cand[1]:
            continue
        starts_acc.insert(idx, cand[0])
        ends_acc.insert(idx, cand[1])
        accepted.append(cand)
    accepted.sort(key=lambda c: c[0])
    return accepted


def _mentions_in_sentence(
    doc: Document,
    sentence: Sentence,
    sent_index: int,
    resolved: list[tuple[int, int, str, str]],
    starts: list[int],
    ends: list[int],
) -> list[Mention]:
    base = sentence.span.start
    out: list[Mention] = []
    for a, b, concept_id, category_id in resolved:
        span = Span(base + starts[a], base + ends[b - 1])
        out.append(
            Mention(
                note_id=doc.note_id,
                span=span,
                matched_text=span.slice(doc.text),
                concept_id=concept_id,
                category_id=category_id,
                sentence_index=sent_index,
                section_index=sentence.section_index,
            )
        )
    return out


def find_mentions(index: MatcherIndex, doc: Document, sentences: list[Sentence]) -> list[Mention]:
    """All lexicon phrase matches across the sentences, per the tie rules."""
    mentions: list[Mention] = []
    for sent_index, sentence in enumerate(sentences):
        sent_text = sentence.span.slice(doc.text)
        normalized, starts, ends = normalize_with_map(sent_text, index.policy)
        raw = index.scan(normalized)
        valid = [c for c in raw if _at_word_boundaries(normalized, c[0], c[1])]
        mentions.extend(
            _mentions_in_sentence(doc, sentence, sent_index, _resolve(valid), starts, ends)
        )
    mentions.sort(key=lambda m: m.span.start)
    return mentions


def brute_force_mentions(lexicon: Lexicon, doc: Document, sentences: list[Sentence]) -> list[Mention]:
    """Reference implementation: O(synonyms x text) substring scan applying
    the same tie rules end to end. Test oracle; not used by the pipeline.
    """
    synonyms = list(lexicon.iter_synonyms())
    mentions: list[Mention] = []
    for sent_index, sentence in enumerate(sentences):
        sent_text = sentence.span.slice(doc.text)
        normalized, starts, ends = normalize_with_map(sent_text, lexicon.policy)
        n = len(normalized)
        candidates: list[tuple[int, int, str, str]] = []
        for pattern, concept_id, category_id in synonyms:
            pos = normalized.find(pattern)
            while pos != -1:
                end = pos + len(pattern)
                before_ok = pos == 0 or not normalized[pos - 1].isalnum()
                after_ok = end == n or not normalized[end].isalnum()
                if before_ok and after_ok:
                    candidates.append((pos, end, concept_id, category_id))
                pos = normalized.find(pattern, pos + 1)
        # Independent copy of the resolution rule, via an occupancy map
        # rather than the interval bisection the main path uses.
        ordered = sorted(candidates, key=lambda c: (-(c[1] - c[0]), c[0], c[2]))
        occupied = bytearray(n)
        accepted: list[tuple[int, int, str, str]] = []
        for cand in ordered:
            if not any(occupied[cand[0] : cand[1]]):
                occupied[cand[0] : cand[1]] = b"\x01" * (cand[1] - cand[0])
                accepted.append(cand)
        accepted.sort(key=lambda c: c[0])
        mentions.extend(_mentions_in_sentence(doc, sentence, sent_index, accepted, starts, ends))
    mentions.sort(key=lambda m: m.span.start)
    return mentions
