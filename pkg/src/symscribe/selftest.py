"""Embedded verification suites runnable by any user via `symscribe selftest`.

The paper-style validation data for this pipeline is private, so the
verifiable surface is made executable instead: the matcher is checked
against its brute-force reference on seeded random inputs, the rank
correlation against an independent rank-then-correlate computation, and the
assertion engine against the golden sentence set shipped with the package.
"""

from __future__ import annotations

import random
import re
from dataclasses import dataclass
from pathlib import Path

import numpy as np
from scipy import stats as sp_stats

from .assertion import AssertionStatus, RuleEngine, default_rules
from .lexicon import Category, Concept, Lexicon, NormalizationPolicy, normalize
from .ner import MatcherIndex, brute_force_mentions, find_mentions
from .prevalence import spearman
from .segment import Document, default_abbreviations, default_section_titles, split_sections, split_sentences

_DATA_DIR = Path(__file__).parent / "data"

_WORD_POOL = [
    "ab", "bc", "ca", "ache", "pain", "fog", "dry", "eye", "ear",
    "cough", "be", "ce", "aa", "bb", "abc", "bca", "a1", "x9",
    "breath", "of", "short", "low", "grade", "fever", "chest", "wall",
]
_FILLER_POOL = [
    "patient", "notes", "stable", "today", "without", "reported", "exam",
    "normal", "followup", "zzz", "qqq", "w0rd", "123", "plan",
]
_SEPARATORS = ["", " ", " ", " ", "  ", ", ", ". ", "\n", "; ", "- ", "   ", ".\n"]


def random_lexicon(rng: random.Random, max_synonyms: int = 200) -> Lexicon:
    """A small random lexicon with 1-4 word synonyms and heavy overlap."""
    policy = NormalizationPolicy()
    n_syn = rng.randint(1, max_synonyms)
    seen: set[str] = set()
    concepts: dict[str, Concept] = {}
    categories = {f"cat{i}": Category(f"cat{i}", f"Category {i}") for i in range(3)}
    idx = 0
    for _ in range(n_syn):
        words = [rng.choice(_WORD_POOL) for _ in range(rng.randint(1, 4))]
        surface = " ".join(words)
        if normalize(surface, policy) in seen:
            continue
        seen.add(normalize(surface, policy))
        concept_id = f"C{idx:05d}"
        concepts[concept_id] = Concept(concept_id, surface, f"cat{idx % 3}", (surface,))
        idx += 1
    if not concepts:
        concepts["C00000"] = Concept("C00000", "pain", "cat0", ("pain",))
    return Lexicon(categories=categories, concepts=concepts, policy=policy)


def random_note(rng: random.Random, lexicon: Lexicon, max_chars: int = 5000) -> Document:
    """Random text salted with lexicon synonyms, odd spacing, and punctuation."""
    target = rng.randint(0, max_chars)
    synonyms = [c.preferred_term for c in lexicon.concepts.values()]
    chunks: list[str] = []
    length = 0
    while length < target:
        roll = rng.random()
        if roll < 0.45 and synonyms:
            piece = rng.choice(synonyms)
            if rng.random() < 0.15:
                piece = piece.upper()
            elif rng.random() < 0.15:
                piece = piece.title()
        elif roll < 0.8:
            piece = rng.choice(_FILLER_POOL)
        else:
            piece = rng.choice(_WORD_POOL)
        sep = rng.choice(_SEPARATORS)
        chunks.append(piece)
        chunks.append(sep)
        length += len(piece) + len(sep)
    text = "".join(chunks)[:max_chars]
    return Document(note_id=f"synthetic-{rng.randint(0, 10**9)}", site_id="selftest", text=text)


def generate_ner_case(seed: int, max_synonyms: int = 200, max_chars: int = 5000):
    rng = random.Random(seed)
    lexicon = random_lexicon(rng, max_synonyms)
    doc = random_note(rng, lexicon, max_chars)
    sections = split_sections(doc, default_section_titles())
    sentences = split_sentences(doc, sections, default_abbreviations())
    return lexicon, doc, sentences


@dataclass
class SuiteResult:
    name: str
    passed: int
    failed: int
    detail: list[str]

    @property
    def ok(self) -> bool:
        return self.failed == 0


def run_ner_oracle_suite(cases: int = 100, seed: int = 20_000) -> SuiteResult:
    passed = failed = 0
    detail: list[str] = []
    for i in range(cases):
        lexicon, doc, sentences = generate_ner_case(seed + i)
        index = MatcherIndex(lexicon)
        fast = find_mentions(index, doc, sentences)
        slow = brute_force_mentions(lexicon, doc, sentences)
        if fast == slow:
            passed += 1
        else:
            failed += 1
            detail.append(f"case seed={seed + i}: {len(fast)} vs {len(slow)} mentions")
    return SuiteResult("ner-oracle", passed, failed, detail)


def _rank_then_pearson(x: np.ndarray, y: np.ndarray) -> float:
    # Independent route: library ranking + correlation matrix entry.
    rx = sp_stats.rankdata(x)
    ry = sp_stats.rankdata(y)
    return float(np.corrcoef(rx, ry)[0, 1])


def run_spearman_oracle_suite(cases: int = 200, seed: int = 30_000) -> SuiteResult:
    passed = failed = 0
    detail: list[str] = []
    rng = np.random.default_rng(seed)
    for i in range(cases):
        n = int(rng.integers(3, 40))
        if i % 2 == 0:
            x = rng.integers(0, max(2, n // 2), size=n).astype(float)  # tie-heavy
            y = rng.integers(0, max(2, n // 2), size=n).astype(float)
        else:
            x = rng.normal(size=n)
            y = rng.normal(size=n)
        if len(np.unique(x)) == 1 or len(np.unique(y)) == 1:
            continue
        ours = spearman(x, y, method="exact-t").rho
        reference = _rank_then_pearson(x, y)
        if abs(ours - reference) <= 1e-12:
            passed += 1
        else:
            failed += 1
            detail.append(f"case {i}: ours={ours!r} reference={reference!r}")
    return SuiteResult("spearman-oracle", passed, failed, detail)


def load_golden_sentences(path: str | Path | None = None) -> list[tuple[str, int, int, AssertionStatus]]:
    """Parse the golden file: a [bracketed] mention inside each sentence."""
    path = Path(path) if path else _DATA_DIR / "golden_sentences.tsv"
    cases: list[tuple[str, int, int, AssertionStatus]] = []
    for line in path.read_text(encoding="utf-8").splitlines():
        if not line.strip() or line.startswith("#"):
            continue
        marked, expected = line.split("\t")
        m = re.search(r"\[(.+?)\]", marked)
        if m is None:
            raise ValueError(f"golden sentence has no [mention]: {marked!r}")
        sentence = marked.replace("[", "", 1).replace("]", "", 1)
        start = m.start()
        end = start + len(m.group(1))
        cases.append((sentence, start, end, AssertionStatus(expected)))
    return cases


def run_assertion_golden_suite(path: str | Path | None = None) -> SuiteResult:
    engine = RuleEngine(default_rules())
    passed = failed = 0
    detail: list[str] = []
    for sentence, start, end, expected in load_golden_sentences(path):
        got = engine.assert_status(sentence, start, end).status
        if got is expected:
            passed += 1
        else:
            failed += 1
            detail.append(f"{sentence!r} [{sentence[start:end]}]: expected {expected.value}, got {got.value}")
    return SuiteResult("assertion-golden", passed, failed, detail)


def run_all(ner_cases: int = 100, spearman_cases: int = 200) -> list[SuiteResult]:
    return [
        run_ner_oracle_suite(cases=ner_cases),
        run_spearman_oracle_suite(cases=spearman_cases),
        run_assertion_golden_suite(),
    ]
