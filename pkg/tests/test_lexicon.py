import time

import pytest

from symscribe.lexicon import (
    Category,
    Concept,
    DanglingCategory,
    DuplicateSynonym,
    EmptyLexicon,
    Lexicon,
    MalformedRow,
    NormalizationPolicy,
    load_lexicon,
    normalize,
    serialize_lexicon,
    validate_lexicon,
)


def test_demo_counts_echo_input(tiny_lexicon):
    assert tiny_lexicon.category_count == 3
    assert tiny_lexicon.concept_count == 5
    assert tiny_lexicon.synonym_count == 12


def test_dangling_category_rejected(tmp_path):
    path = tmp_path / "bad.tsv"
    path.write_text("CAT\tc1\tOne\nSYN\tK1\tpain\txyz\tpain\n", encoding="utf-8")
    with pytest.raises(DanglingCategory, match="xyz"):
        load_lexicon(path)


def test_duplicate_synonym_names_both_concepts(tmp_path):
    path = tmp_path / "dup.tsv"
    path.write_text(
        "CAT\tc1\tOne\nSYN\tK1\tpain\tc1\tpain\nSYN\tK2\tache\tc1\tpain\n",
        encoding="utf-8",
    )
    with pytest.raises(DuplicateSynonym) as excinfo:
        load_lexicon(path)
    assert "K1" in str(excinfo.value) and "K2" in str(excinfo.value)


def test_malformed_row(tmp_path):
    path = tmp_path / "malformed.tsv"
    path.write_text("CAT\tc1\tOne\nSYN\tK1\tpain\tc1\n", encoding="utf-8")
    with pytest.raises(MalformedRow, match="5 columns"):
        load_lexicon(path)


def test_empty_lexicon(tmp_path):
    path = tmp_path / "empty.tsv"
    path.write_text("# nothing here\n", encoding="utf-8")
    with pytest.raises(EmptyLexicon):
        load_lexicon(path)
    path.write_text("CAT\tc1\tOne\n", encoding="utf-8")
    with pytest.raises(EmptyLexicon):
        load_lexicon(path)


def test_lookup_normalization(tiny_lexicon):
    assert tiny_lexicon.lookup("Fatigue") == ("K1", "c1")
    assert tiny_lexicon.lookup("  head   pain ") == ("K2", "c2")
    assert tiny_lexicon.lookup("unrelated-token") is None


def test_every_synonym_resolves_and_nothing_else(tiny_lexicon):
    for normed, concept_id, category_id in tiny_lexicon.iter_synonyms():
        assert tiny_lexicon.lookup(normed) == (concept_id, category_id)
    assert tiny_lexicon.lookup("not a synonym") is None


def test_validate_on_loaded_lexicon_is_empty(tiny_lexicon, demo_lexicon):
    assert validate_lexicon(tiny_lexicon) == []
    assert validate_lexicon(demo_lexicon) == []


def test_validate_reports_duplicate_and_empty_synonym():
    policy = NormalizationPolicy()
    lex = Lexicon(
        categories={"c1": Category("c1", "One")},
        concepts={
            "K1": Concept("K1", "pain", "c1", ("pain",)),
            "K2": Concept("K2", "ache", "c1", ("ache", "pain", "")),
        },
        policy=policy,
    )
    diags = validate_lexicon(lex)
    codes = {d.code for d in diags}
    assert "DuplicateSynonym" in codes
    assert "EmptySynonym" in codes
    dup = next(d for d in diags if d.code == "DuplicateSynonym")
    assert "K1" in dup.message and "K2" in dup.message


def test_validate_dangling_category_diagnostic():
    lex = Lexicon(
        categories={"c1": Category("c1", "One")},
        concepts={"K1": Concept("K1", "pain", "zzz", ("pain",))},
        policy=NormalizationPolicy(),
    )
    diags = validate_lexicon(lex)
    assert any(d.code == "DanglingCategory" for d in diags)


def test_preferred_term_folded_into_synonyms(tmp_path):
    path = tmp_path / "fold.tsv"
    path.write_text("CAT\tc1\tOne\nSYN\tK1\tFatigue\tc1\ttiredness\n", encoding="utf-8")
    lex = load_lexicon(path)
    assert lex.lookup("fatigue") == ("K1", "c1")
    assert lex.synonym_count == 2


def test_round_trip_identity(tiny_lexicon, tmp_path, demo_lexicon):
    for lex in (tiny_lexicon, demo_lexicon):
        path = tmp_path / "roundtrip.tsv"
        path.write_text(serialize_lexicon(lex), encoding="utf-8")
        again = load_lexicon(path, lex.policy)
        assert again.categories == lex.categories
        assert again.concepts == lex.concepts
        assert again.policy == lex.policy


def test_normalize_policy_toggles():
    on = NormalizationPolicy()
    assert normalize("  Shortness   OF Breath ", on) == "shortness of breath"
    no_fold = NormalizationPolicy(case_fold=False)
    assert normalize("Chest  Pain", no_fold) == "Chest Pain"
    no_collapse = NormalizationPolicy(collapse_whitespace=False)
    assert normalize("chest  pain", no_collapse) == "chest  pain"


def _paper_scale_lexicon_text() -> str:
    lines = [f"CAT\tcat{i:02d}\tCategory {i}" for i in range(25)]
    for j in range(798):
        term = f"symptom {j:03d}"
        lines.append(f"SYN\tC{j:07d}\t{term}\tcat{j % 25:02d}\t{term}")
        lines.append(f"SYN\tC{j:07d}\t{term}\tcat{j % 25:02d}\tvariant {term}")
    return "\n".join(lines) + "\n"


def test_paper_scale_shape(tmp_path):
    path = tmp_path / "paper_scale.tsv"
    path.write_text(_paper_scale_lexicon_text(), encoding="utf-8")
    start = time.perf_counter()
    lex = load_lexicon(path)
    elapsed = time.perf_counter() - start
    assert lex.category_count == 25
    assert lex.concept_count == 798
    assert elapsed < 1.0
