import random

import pytest

from symscribe.assertion import BinaryAssertion
from symscribe.metrics import (
    EmptyInput,
    EmptyReference,
    LabeledPair,
    LengthMismatch,
    SubsetViolation,
    bootstrap,
    cohens_kappa,
    pooled_recall,
    score,
)

P = BinaryAssertion.POSITIVE
N = BinaryAssertion.NON_POSITIVE


def make_pairs(spec: list[tuple[BinaryAssertion, BinaryAssertion]], notes: int = 1) -> list[LabeledPair]:
    """spec is a list of (predicted, gold); pairs are spread over `notes` notes."""
    pairs = []
    for i, (pred, gold) in enumerate(spec):
        pairs.append(
            LabeledPair(note_id=f"note{i % notes}", start=i * 10, end=i * 10 + 5, predicted=pred, gold=gold)
        )
    return pairs


class TestScore:
    def test_formula_case(self):
        # TP=3, FP=1, FN=1, TN=5
        spec = [(P, P)] * 3 + [(P, N)] + [(N, P)] + [(N, N)] * 5
        report = score(make_pairs(spec))
        assert report.precision == pytest.approx(0.75)
        assert report.recall == pytest.approx(0.75)
        assert report.f1 == pytest.approx(0.75)
        assert (report.tp, report.fp, report.fn, report.tn) == (3, 1, 1, 5)

    def test_all_correct(self):
        report = score(make_pairs([(P, P), (N, N), (P, P), (N, N)]))
        assert report.precision == report.recall == report.f1 == 1.0
        assert report.weighted_f1 == 1.0
        assert report.balanced_accuracy == 1.0

    def test_degenerate_all_positive_versus_all_negative_gold(self):
        report = score(make_pairs([(P, N)] * 4))
        assert report.precision == 0.0
        assert report.recall == 0.0
        assert report.f1 == 0.0
        assert report.balanced_accuracy == pytest.approx(0.5)

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            score([])

    def test_permutation_invariance(self):
        spec = [(P, P), (P, N), (N, P), (N, N), (P, P)]
        pairs = make_pairs(spec, notes=2)
        shuffled = pairs[:]
        random.Random(3).shuffle(shuffled)
        assert score(pairs) == score(shuffled)

    def test_weighted_f1_between_class_f1s(self):
        rng = random.Random(7)
        for _ in range(200):
            spec = [(rng.choice([P, N]), rng.choice([P, N])) for _ in range(rng.randint(2, 30))]
            report = score(make_pairs(spec))
            tp, fp, fn, tn = report.tp, report.fp, report.fn, report.tn
            f1_pos = report.f1
            p_n = tn / (tn + fn) if tn + fn else 0.0
            r_n = tn / (tn + fp) if tn + fp else 0.0
            f1_neg = 2 * p_n * r_n / (p_n + r_n) if p_n + r_n else 0.0
            lo, hi = min(f1_pos, f1_neg), max(f1_pos, f1_neg)
            assert lo - 1e-12 <= report.weighted_f1 <= hi + 1e-12


class TestBootstrap:
    def test_all_correct_collapses(self):
        pairs = make_pairs([(P, P), (N, N)] * 10, notes=5)
        report = bootstrap(pairs, iterations=100, seed=1)
        for stat in report.stats.values():
            assert stat.mean == 1.0
            assert stat.sd == 0.0
            assert stat.ci_low == 1.0
            assert stat.ci_high == 1.0

    def test_single_iteration_ci_is_point(self):
        pairs = make_pairs([(P, P), (P, N), (N, N)], notes=3)
        report = bootstrap(pairs, iterations=1, seed=9)
        for name, stat in report.stats.items():
            assert stat.ci_low == stat.ci_high == stat.mean == report.samples[name][0]

    def test_fixed_seed_bit_identical(self):
        pairs = make_pairs([(P, P), (P, N), (N, P), (N, N)] * 5, notes=7)
        first = bootstrap(pairs, iterations=100, seed=42)
        second = bootstrap(pairs, iterations=100, seed=42)
        assert first == second

    def test_different_seed_differs(self):
        pairs = make_pairs([(P, P), (P, N), (N, P), (N, N)] * 5, notes=7)
        assert bootstrap(pairs, iterations=50, seed=1) != bootstrap(pairs, iterations=50, seed=2)

    def test_ci_brackets_mean(self):
        pairs = make_pairs([(P, P), (P, N), (N, P), (N, N), (P, P)] * 4, notes=6)
        report = bootstrap(pairs, iterations=200, seed=11)
        for stat in report.stats.values():
            assert stat.ci_low <= stat.mean <= stat.ci_high

    def test_large_iteration_mean_converges_to_point_estimate(self):
        rng = random.Random(5)
        spec = [(rng.choice([P, N]), rng.choice([P, N])) for _ in range(40)]
        pairs = make_pairs(spec, notes=10)
        point = score(pairs).as_dict()
        report = bootstrap(pairs, iterations=10_000, seed=3)
        for name, stat in report.stats.items():
            assert abs(stat.mean - point[name]) <= 0.02, name

    def test_empty_input(self):
        with pytest.raises(EmptyInput):
            bootstrap([], iterations=10, seed=0)


class TestKappa:
    def test_identical_vectors(self):
        assert cohens_kappa(["p", "p", "n"], ["p", "p", "n"]) == 1.0

    def test_hand_computed_half(self):
        a = ["P", "P", "N", "N"]
        b = ["P", "N", "N", "N"]
        assert cohens_kappa(a, b) == pytest.approx(0.5, abs=1e-12)

    def test_independent_split_zero(self):
        a = ["P", "N", "P", "N"]
        b = ["P", "P", "N", "N"]
        assert cohens_kappa(a, b) == pytest.approx(0.0, abs=1e-12)

    def test_symmetry(self):
        rng = random.Random(13)
        for _ in range(100):
            n = rng.randint(1, 30)
            a = [rng.choice("xyz") for _ in range(n)]
            b = [rng.choice("xyz") for _ in range(n)]
            assert cohens_kappa(a, b) == pytest.approx(cohens_kappa(b, a), abs=1e-15)

    def test_length_mismatch(self):
        with pytest.raises(LengthMismatch):
            cohens_kappa(["a"], ["a", "b"])

    def test_multiclass_labels(self):
        a = ["present", "absent", "past", "present"]
        b = ["present", "absent", "past", "present"]
        assert cohens_kappa(a, b) == 1.0


class TestPooledRecall:
    def test_paper_arithmetic(self):
        union = {f"m{i}" for i in range(706)}
        system = {f"m{i}" for i in range(640)}
        assert pooled_recall(system, union) == pytest.approx(0.9065, abs=1e-4)

    def test_other_system_arithmetic(self):
        union = {f"m{i}" for i in range(706)}
        system = {f"m{i}" for i in range(180)}
        assert pooled_recall(system, union) == pytest.approx(0.2549, abs=1e-4)

    def test_equal_sets(self):
        keys = {("n", 1, 2), ("n", 3, 4)}
        assert pooled_recall(keys, set(keys)) == 1.0

    def test_empty_reference(self):
        with pytest.raises(EmptyReference):
            pooled_recall(set(), set())

    def test_subset_violation(self):
        with pytest.raises(SubsetViolation):
            pooled_recall({"a"}, {"b"})
