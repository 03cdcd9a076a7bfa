"""Assertion detection: five-way status for each mention, collapsed to binary.

The default engine is a trigger-rule scheme in the NegEx/ConText family:
trigger phrases project a status over a directional scope that ends at a
terminator phrase, a token budget, or the sentence boundary. A remote
classifier can replace the rule engine per mention over a small HTTP
protocol; transport failures fall back to the rules at the call site.
"""

from __future__ import annotations

import json
import re
import urllib.error
import urllib.request
from bisect import bisect_left, bisect_right
from dataclasses import dataclass
from enum import Enum
from pathlib import Path

_DATA_DIR = Path(__file__).parent / "data"


class AssertionStatus(Enum):
    PRESENT = "present"
    ABSENT = "absent"
    HYPOTHETICAL = "hypothetical"
    PAST = "past"
    OTHER = "other"


class BinaryAssertion(Enum):
    POSITIVE = "positive"
    NON_POSITIVE = "non_positive"


class Direction(Enum):
    FORWARD = "forward"
    BACKWARD = "backward"
    BIDIRECTIONAL = "bidirectional"


class Engine(Enum):
    RULE_ENGINE = "rule_engine"
    REMOTE_CLASSIFIER = "remote_classifier"


#: Conflicting covering triggers resolve by this order (then by proximity).
_PRECEDENCE = {
    AssertionStatus.ABSENT: 0,
    AssertionStatus.PAST: 1,
    AssertionStatus.HYPOTHETICAL: 2,
    AssertionStatus.OTHER: 3,
    AssertionStatus.PRESENT: 4,
}


def collapse(status: AssertionStatus) -> BinaryAssertion:
    """Only a present mention is positive; every other status is non-positive."""
    return BinaryAssertion.POSITIVE if status is AssertionStatus.PRESENT else BinaryAssertion.NON_POSITIVE


@dataclass(frozen=True)
class TriggerRule:
    phrase: str
    status_effect: AssertionStatus
    direction: Direction = Direction.FORWARD
    scope_limit: int | None = None  # None = until sentence end
    terminators: frozenset[str] = frozenset()

    def __post_init__(self) -> None:
        if not self.phrase.strip():
            raise ValueError("trigger phrase must be non-empty")
        if self.scope_limit is not None and self.scope_limit < 1:
            raise ValueError("scope_limit must be >= 1 when token-bounded")


@dataclass(frozen=True)
class AssertionResult:
    status: AssertionStatus
    binary: BinaryAssertion
    trigger_phrase: str | None
    trigger_span: tuple[int, int] | None
    engine: Engine

    def shifted(self, delta: int) -> "AssertionResult":
        """Rebase the trigger span (e.g. sentence-relative to note-absolute)."""
        if self.trigger_span is None:
            return self
        s, e = self.trigger_span
        return AssertionResult(self.status, self.binary, self.trigger_phrase, (s + delta, e + delta), self.engine)


def _phrase_pattern(phrase: str) -> re.Pattern[str]:
    parts = [re.escape(p) for p in phrase.split()]
    body = r"\s+".join(parts)
    if phrase[0].isalnum():
        body = r"\b" + body
    if phrase[-1].isalnum():
        body = body + r"\b"
    return re.compile(body, re.IGNORECASE)


@dataclass
class SentenceContext:
    """Precomputed per-sentence scan: token spans plus every trigger and
    terminator occurrence, so one sentence with many mentions is scanned once.

    All occurrence lists come from re.finditer, so starts and ends are both
    strictly increasing, which is what the bisect lookups below rely on.
    """

    sentence: str
    token_starts: list[int]
    token_ends: list[int]
    trigger_hits: list[tuple[list[int], list[int]]]  # aligned with engine rules
    terminator_hits: dict[str, tuple[list[int], list[int]]]


class RuleEngine:
    """Immutable compiled rule set; pure per-sentence assertion decisions."""

    def __init__(self, rules: list[TriggerRule]) -> None:
        self.rules = tuple(rules)
        self._compiled = [(_phrase_pattern(r.phrase), r) for r in rules]
        self._terminator_patterns = {
            t: _phrase_pattern(t) for r in rules for t in r.terminators
        }

    def analyze(self, sentence: str) -> SentenceContext:
        token_starts: list[int] = []
        token_ends: list[int] = []
        for m in re.finditer(r"[^\W_]+", sentence):
            token_starts.append(m.start())
            token_ends.append(m.end())
        trigger_hits = []
        for pattern, _ in self._compiled:
            starts: list[int] = []
            ends: list[int] = []
            for m in pattern.finditer(sentence):
                starts.append(m.start())
                ends.append(m.end())
            trigger_hits.append((starts, ends))
        terminator_hits = {}
        for phrase, pattern in self._terminator_patterns.items():
            starts, ends = [], []
            for m in pattern.finditer(sentence):
                starts.append(m.start())
                ends.append(m.end())
            terminator_hits[phrase] = (starts, ends)
        return SentenceContext(sentence, token_starts, token_ends, trigger_hits, terminator_hits)

    def assert_status(self, sentence: str, start: int, end: int) -> AssertionResult:
        """Status of the mention at [start, end) within this sentence."""
        return self.assert_in_context(self.analyze(sentence), start, end)

    def assert_in_context(self, ctx: SentenceContext, start: int, end: int) -> AssertionResult:
        if not (0 <= start < end <= len(ctx.sentence)):
            raise ValueError(f"mention [{start}, {end}) outside sentence of length {len(ctx.sentence)}")

        # (precedence, char_distance, trigger_start, rule, span)
        covering: list[tuple[int, int, int, TriggerRule, tuple[int, int]]] = []
        for rule_index, (_, rule) in enumerate(self._compiled):
            starts, ends = ctx.trigger_hits[rule_index]
            if not starts:
                continue
            # Only the nearest occurrence on each side can matter: a farther
            # one sees the same terminators plus a larger token gap.
            if rule.direction in (Direction.FORWARD, Direction.BIDIRECTIONAL):
                idx = bisect_right(ends, start) - 1
                if idx >= 0 and self._in_scope(ctx, rule, ends[idx], start):
                    covering.append(
                        (_PRECEDENCE[rule.status_effect], start - ends[idx], starts[idx], rule, (starts[idx], ends[idx]))
                    )
            if rule.direction in (Direction.BACKWARD, Direction.BIDIRECTIONAL):
                idx = bisect_left(starts, end)
                if idx < len(starts) and self._in_scope(ctx, rule, end, starts[idx]):
                    covering.append(
                        (_PRECEDENCE[rule.status_effect], starts[idx] - end, starts[idx], rule, (starts[idx], ends[idx]))
                    )

        if not covering:
            return AssertionResult(AssertionStatus.PRESENT, BinaryAssertion.POSITIVE, None, None, Engine.RULE_ENGINE)
        covering.sort(key=lambda c: (c[0], c[1], c[2]))
        _, _, _, rule, span = covering[0]
        status = rule.status_effect
        if status is AssertionStatus.PRESENT:
            return AssertionResult(status, collapse(status), None, None, Engine.RULE_ENGINE)
        return AssertionResult(status, collapse(status), rule.phrase, span, Engine.RULE_ENGINE)

    def _in_scope(self, ctx: SentenceContext, rule: TriggerRule, lo: int, hi: int) -> bool:
        """True when nothing cuts the stretch [lo, hi) between trigger and mention."""
        if rule.scope_limit is not None:
            first = bisect_left(ctx.token_starts, lo)
            last = bisect_right(ctx.token_ends, hi)
            if max(0, last - first) >= rule.scope_limit:
                return False
        for phrase in rule.terminators:
            starts, ends = ctx.terminator_hits[phrase]
            idx = bisect_left(starts, lo)
            if idx < len(starts) and ends[idx] <= hi:
                return False
        return True


def assert_status(rules: list[TriggerRule], sentence: str, start: int, end: int) -> AssertionResult:
    """One-shot convenience wrapper around RuleEngine."""
    return RuleEngine(rules).assert_status(sentence, start, end)


_DEFAULT_TERMINATORS = frozenset({"but", "however", "except", ";"})


def default_rules() -> list[TriggerRule]:
    return load_rules(_DATA_DIR / "assertion_rules.tsv")


def load_rules(path: str | Path) -> list[TriggerRule]:
    """Parse the TRIGGER TSV rule file."""
    rules: list[TriggerRule] = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cols = line.split("\t")
        if cols[0] != "TRIGGER" or len(cols) != 6:
            raise ValueError(f"{path}:{lineno}: expected TRIGGER row with 6 columns")
        _, phrase, status, direction, scope, terms = cols
        scope_limit = None if scope == "sentence_end" else int(scope)
        terminators = frozenset(t.strip() for t in terms.split(",") if t.strip())
        rules.append(
            TriggerRule(
                phrase=phrase,
                status_effect=AssertionStatus(status),
                direction=Direction(direction),
                scope_limit=scope_limit,
                terminators=terminators,
            )
        )
    if not rules:
        raise ValueError(f"{path}: no trigger rules found")
    return rules


class RemoteClassifierError(RuntimeError):
    """Base for remote-assertion transport/protocol failures."""


class RemoteTimeout(RemoteClassifierError):
    pass


class MalformedResponse(RemoteClassifierError):
    pass


def classify_remote(
    endpoint: str,
    sentence: str,
    start: int,
    end: int,
    timeout: float = 5.0,
) -> AssertionResult:
    """Ask a remote model for the mention's status over the wire protocol.

    POST {endpoint}/classify with {"sentence", "start", "end"}; expects
    {"label": <status>, "score": float in [0,1]}. Raises RemoteTimeout or
    MalformedResponse; callers fall back to the rule engine on either.
    """
    url = endpoint.rstrip("/")
    if not url.endswith("/classify"):
        url += "/classify"
    payload = json.dumps({"sentence": sentence, "start": start, "end": end}).encode("utf-8")
    request = urllib.request.Request(url, data=payload, headers={"Content-Type": "application/json"})
    try:
        with urllib.request.urlopen(request, timeout=timeout) as resp:
            body = resp.read()
    except TimeoutError as exc:
        raise RemoteTimeout(f"classifier at {url} timed out") from exc
    except (urllib.error.URLError, OSError) as exc:
        if isinstance(getattr(exc, "reason", None), TimeoutError):
            raise RemoteTimeout(f"classifier at {url} timed out") from exc
        raise RemoteClassifierError(f"classifier at {url} unreachable: {exc}") from exc
    try:
        data = json.loads(body.decode("utf-8"))
        status = AssertionStatus(data["label"])
        score = float(data["score"])
    except (ValueError, KeyError, TypeError) as exc:
        raise MalformedResponse(f"classifier at {url} returned malformed body: {body[:200]!r}") from exc
    if not 0.0 <= score <= 1.0:
        raise MalformedResponse(f"classifier score {score} outside [0, 1]")
    return AssertionResult(status, collapse(status), None, None, Engine.REMOTE_CLASSIFIER)
