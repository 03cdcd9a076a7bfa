"""Hierarchical symptom lexicon: categories, concepts, and synonym surface forms.

The lexicon file is UTF-8 TSV with two record kinds:

    CAT\t<category_id>\t<display_name>
    SYN\t<concept_id>\t<preferred_term>\t<category_id>\t<synonym>

One SYN row per synonym. All SYN rows of a concept must repeat the same
preferred term and category. A concept's preferred term is folded into its
synonym set automatically when the file does not list it as its own row.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path


class LexiconError(ValueError):
    """Base class for lexicon load/validation failures."""


class MalformedRow(LexiconError):
    pass


class DanglingCategory(LexiconError):
    pass


class DuplicateSynonym(LexiconError):
    pass


class DuplicateCategory(LexiconError):
    pass


class InconsistentConcept(LexiconError):
    pass


class EmptyLexicon(LexiconError):
    pass


@dataclass(frozen=True)
class NormalizationPolicy:
    """How surface forms are canonicalized before indexing and matching."""

    case_fold: bool = True
    collapse_whitespace: bool = True


def _fold_char(c: str) -> str:
    # Per-character lowercase that never changes string length, so that
    # matcher offset maps stay one-to-one.
    low = c.lower()
    return low if len(low) == 1 else c


def normalize(text: str, policy: NormalizationPolicy) -> str:
    """Canonicalize a surface form: optional case fold and whitespace collapse.

    Leading/trailing whitespace is stripped; internal whitespace runs become a
    single space when collapsing is enabled.
    """
    out: list[str] = []
    pending_ws = False
    for c in text:
        if c.isspace():
            if policy.collapse_whitespace:
                pending_ws = True
            else:
                out.append(c)
            continue
        if pending_ws:
            if out:
                out.append(" ")
            pending_ws = False
        out.append(_fold_char(c) if policy.case_fold else c)
    if not policy.collapse_whitespace:
        return "".join(out).strip()
    return "".join(out)


@dataclass(frozen=True)
class Category:
    id: str
    display_name: str


@dataclass(frozen=True)
class Concept:
    concept_id: str
    preferred_term: str
    category_id: str
    synonyms: tuple[str, ...]


@dataclass(frozen=True)
class Diagnostic:
    """One invariant violation, with enough provenance to locate it."""

    code: str
    message: str
    concept_id: str | None = None
    category_id: str | None = None

    def __str__(self) -> str:
        return f"{self.code}: {self.message}"


@dataclass
class Lexicon:
    categories: dict[str, Category]
    concepts: dict[str, Concept]
    policy: NormalizationPolicy
    _index: dict[str, str] = field(default_factory=dict, repr=False, compare=False)

    def __post_init__(self) -> None:
        if not self._index:
            for concept in self.concepts.values():
                for syn in concept.synonyms:
                    self._index.setdefault(normalize(syn, self.policy), concept.concept_id)

    @property
    def category_count(self) -> int:
        return len(self.categories)

    @property
    def concept_count(self) -> int:
        return len(self.concepts)

    @property
    def synonym_count(self) -> int:
        return sum(len(c.synonyms) for c in self.concepts.values())

    def iter_synonyms(self):
        """Yield (normalized_synonym, concept_id, category_id) triples."""
        for concept in self.concepts.values():
            for syn in concept.synonyms:
                yield normalize(syn, self.policy), concept.concept_id, concept.category_id

    def lookup(self, surface: str) -> tuple[str, str] | None:
        """Resolve a surface form to (concept_id, category_id), or None."""
        cid = self._index.get(normalize(surface, self.policy))
        if cid is None:
            return None
        return cid, self.concepts[cid].category_id


def validate_lexicon(lex: Lexicon) -> list[Diagnostic]:
    """Check every lexicon invariant; empty list means the lexicon is valid."""
    diags: list[Diagnostic] = []
    if not lex.categories or not lex.concepts:
        diags.append(Diagnostic("EmptyLexicon", "lexicon needs at least one category and one concept"))
    for cat in lex.categories.values():
        if not cat.display_name.strip():
            diags.append(
                Diagnostic("EmptyDisplayName", f"category {cat.id!r} has an empty display name", category_id=cat.id)
            )
    seen: dict[str, str] = {}
    for concept in lex.concepts.values():
        if concept.category_id not in lex.categories:
            diags.append(
                Diagnostic(
                    "DanglingCategory",
                    f"concept {concept.concept_id!r} references unknown category {concept.category_id!r}",
                    concept_id=concept.concept_id,
                    category_id=concept.category_id,
                )
            )
        if not concept.synonyms:
            diags.append(
                Diagnostic("EmptySynonymList", f"concept {concept.concept_id!r} has no synonyms", concept_id=concept.concept_id)
            )
        normed = {normalize(s, lex.policy) for s in concept.synonyms}
        if "" in normed:
            diags.append(
                Diagnostic("EmptySynonym", f"concept {concept.concept_id!r} has a zero-length synonym", concept_id=concept.concept_id)
            )
            normed.discard("")
        if normalize(concept.preferred_term, lex.policy) not in normed:
            diags.append(
                Diagnostic(
                    "MissingPreferredTerm",
                    f"preferred term {concept.preferred_term!r} of {concept.concept_id!r} is not among its synonyms",
                    concept_id=concept.concept_id,
                )
            )
        for n in sorted(normed):
            other = seen.get(n)
            if other is not None and other != concept.concept_id:
                diags.append(
                    Diagnostic(
                        "DuplicateSynonym",
                        f"synonym {n!r} appears under both {other!r} and {concept.concept_id!r}",
                        concept_id=concept.concept_id,
                    )
                )
            else:
                seen[n] = concept.concept_id
    return diags


def load_lexicon(path: str | Path, policy: NormalizationPolicy | None = None) -> Lexicon:
    """Parse and validate a lexicon TSV file.

    Raises a typed LexiconError on the first violation; a returned Lexicon
    always satisfies every invariant (validate_lexicon on it is empty).
    """
    policy = policy or NormalizationPolicy()
    path = Path(path)
    categories: dict[str, Category] = {}
    # concept_id -> (preferred, category, [synonyms]) with row provenance
    raw: dict[str, tuple[str, str, list[str]]] = {}

    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip() or line.lstrip().startswith("#"):
            continue
        cols = line.split("\t")
        kind = cols[0]
        if kind == "CAT":
            if len(cols) != 3:
                raise MalformedRow(f"{path.name}:{lineno}: CAT row needs 3 columns, got {len(cols)}")
            _, cat_id, display = cols
            if not display.strip():
                raise MalformedRow(f"{path.name}:{lineno}: category {cat_id!r} has empty display name")
            if cat_id in categories:
                raise DuplicateCategory(f"{path.name}:{lineno}: category id {cat_id!r} defined twice")
            categories[cat_id] = Category(cat_id, display)
        elif kind == "SYN":
            if len(cols) != 5:
                raise MalformedRow(f"{path.name}:{lineno}: SYN row needs 5 columns, got {len(cols)}")
            _, concept_id, preferred, cat_id, synonym = cols
            if not synonym.strip():
                raise MalformedRow(f"{path.name}:{lineno}: empty synonym for concept {concept_id!r}")
            if concept_id in raw:
                prev_pref, prev_cat, syns = raw[concept_id]
                if prev_pref != preferred or prev_cat != cat_id:
                    raise InconsistentConcept(
                        f"{path.name}:{lineno}: concept {concept_id!r} redefined with a different "
                        f"preferred term or category"
                    )
                syns.append(synonym)
            else:
                raw[concept_id] = (preferred, cat_id, [synonym])
        else:
            raise MalformedRow(f"{path.name}:{lineno}: unknown record kind {kind!r}")

    if not categories or not raw:
        raise EmptyLexicon(f"{path.name}: lexicon needs at least one category and one concept")

    norm_owner: dict[str, str] = {}
    concepts: dict[str, Concept] = {}
    for concept_id, (preferred, cat_id, synonyms) in raw.items():
        if cat_id not in categories:
            raise DanglingCategory(f"concept {concept_id!r} references unknown category {cat_id!r}")
        deduped: list[str] = []
        normed_here: set[str] = set()
        for syn in synonyms:
            n = normalize(syn, policy)
            if n in normed_here:
                continue
            owner = norm_owner.get(n)
            if owner is not None and owner != concept_id:
                raise DuplicateSynonym(
                    f"synonym {n!r} appears under both {owner!r} and {concept_id!r}"
                )
            norm_owner[n] = concept_id
            normed_here.add(n)
            deduped.append(syn)
        pref_norm = normalize(preferred, policy)
        if pref_norm not in normed_here:
            owner = norm_owner.get(pref_norm)
            if owner is not None and owner != concept_id:
                raise DuplicateSynonym(
                    f"synonym {pref_norm!r} appears under both {owner!r} and {concept_id!r}"
                )
            norm_owner[pref_norm] = concept_id
            deduped.append(preferred)
        concepts[concept_id] = Concept(concept_id, preferred, cat_id, tuple(deduped))

    return Lexicon(categories=categories, concepts=concepts, policy=policy)


def serialize_lexicon(lex: Lexicon) -> str:
    """Render a lexicon back to its TSV form (deterministic row order)."""
    lines: list[str] = []
    for cat_id in sorted(lex.categories):
        cat = lex.categories[cat_id]
        lines.append(f"CAT\t{cat.id}\t{cat.display_name}")
    for concept_id in sorted(lex.concepts):
        c = lex.concepts[concept_id]
        for syn in c.synonyms:
            lines.append(f"SYN\t{c.concept_id}\t{c.preferred_term}\t{c.category_id}\t{syn}")
    return "\n".join(lines) + "\n"
