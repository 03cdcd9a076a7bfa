import json
import subprocess
import sys

import pytest
from click.testing import CliRunner

from symscribe import PIPELINE_VERSION
from symscribe.cli import cli


@pytest.fixture()
def runner():
    return CliRunner()


class TestVersionAndHelp:
    def test_version_matches_pipeline_version(self, runner):
        result = runner.invoke(cli, ["--version"])
        assert result.exit_code == 0
        assert result.output.strip() == PIPELINE_VERSION

    def test_help_on_every_subcommand(self, runner):
        for args in (["--help"], ["extract", "--help"], ["eval", "--help"],
                     ["prevalence", "--help"], ["serve", "--help"], ["selftest", "--help"],
                     ["lexicon", "check", "--help"]):
            result = runner.invoke(cli, args)
            assert result.exit_code == 0, args

    def test_unknown_flag_rejected(self, runner):
        result = runner.invoke(cli, ["extract", "--bogus"])
        assert result.exit_code == 1


class TestLexiconCheck:
    def test_valid_silent_zero(self, runner, demo_lexicon_path):
        result = runner.invoke(cli, ["lexicon", "check", str(demo_lexicon_path)])
        assert result.exit_code == 0
        assert result.stdout == ""

    def test_invalid_prints_and_fails(self, runner, tmp_path):
        bad = tmp_path / "bad.tsv"
        bad.write_text("CAT\tc1\tOne\nSYN\tK1\tpain\tzzz\tpain\n", encoding="utf-8")
        result = runner.invoke(cli, ["lexicon", "check", str(bad)])
        assert result.exit_code == 1
        assert "zzz" in result.stderr

    def test_missing_file(self, runner, tmp_path):
        result = runner.invoke(cli, ["lexicon", "check", str(tmp_path / "nope.tsv")])
        assert result.exit_code == 1
        assert "nope.tsv" in result.stderr


class TestExtract:
    def test_missing_input_names_path(self, runner, tmp_path):
        missing = tmp_path / "ghost.csv"
        result = runner.invoke(cli, ["extract", "--in", str(missing), "--out", str(tmp_path / "o")])
        assert result.exit_code == 1
        assert "ghost.csv" in result.stderr

    def test_end_to_end(self, runner, notes_csv_path, tmp_path):
        out = tmp_path / "run"
        result = runner.invoke(cli, ["extract", "--in", str(notes_csv_path), "--out", str(out)])
        assert result.exit_code == 0, result.output + result.stderr
        summary = json.loads(result.stdout)
        assert summary["notes_processed"] == 3
        assert (out / "mentions.jsonl").is_file()

    def test_dry_run_writes_nothing(self, runner, notes_csv_path, tmp_path):
        out = tmp_path / "dryrun"
        result = runner.invoke(cli, ["extract", "--in", str(notes_csv_path), "--out", str(out), "--dry-run"])
        assert result.exit_code == 0
        assert not out.exists()


class TestEvalCommand:
    def _gold_from_run(self, run_dir, tmp_path, flip_first=False):
        from symscribe.docmodel import read_outputs

        lines = []
        flipped = False
        for output in read_outputs(run_dir / "mentions.jsonl"):
            for mention, result in output.mentions:
                binary = result.binary.value
                if flip_first and not flipped:
                    binary = "non_positive" if binary == "positive" else "positive"
                    flipped = True
                lines.append(json.dumps({
                    "note_id": output.note_id,
                    "start": mention.span.start,
                    "end": mention.span.end,
                    "binary": binary,
                }))
        gold_path = tmp_path / "gold.jsonl"
        gold_path.write_text("\n".join(lines) + "\n", encoding="utf-8")
        return gold_path

    def test_eval_end_to_end(self, runner, demo_run, tmp_path):
        run_dir, _ = demo_run
        gold = self._gold_from_run(run_dir, tmp_path, flip_first=True)
        out = tmp_path / "evalout"
        result = runner.invoke(cli, [
            "eval", "--pred", str(run_dir / "mentions.jsonl"), "--gold", str(gold),
            "--bootstrap", "50", "--seed", "7", "--out", str(out),
        ])
        assert result.exit_code == 0, result.stderr
        report = json.loads(result.stdout)
        assert report["pairs"] > 0
        assert 0 <= report["point"]["f1"] < 1.0
        on_disk = json.loads((out / "eval_report.json").read_text(encoding="utf-8"))
        assert on_disk == report

    def test_eval_deterministic_under_seed(self, runner, demo_run, tmp_path):
        run_dir, _ = demo_run
        gold = self._gold_from_run(run_dir, tmp_path)
        args = ["eval", "--pred", str(run_dir / "mentions.jsonl"), "--gold", str(gold),
                "--bootstrap", "30", "--seed", "11", "--out", str(tmp_path / "e1")]
        first = runner.invoke(cli, args)
        second = runner.invoke(cli, args)
        assert first.stdout == second.stdout


class TestPrevalenceCommand:
    def test_report_files_and_figures(self, runner, demo_run, tmp_path):
        run_dir, _ = demo_run
        out = tmp_path / "report"
        result = runner.invoke(cli, [
            "prevalence", "--mentions", str(run_dir / "mentions.jsonl"),
            "--out", str(out), "--permutations", "200",
        ])
        assert result.exit_code == 0, result.stderr
        for name in ("counts.csv", "site_corr_pos.csv", "site_corr_neg.csv",
                     "category_corr_pos.csv", "summary.json"):
            assert (out / name).is_file(), name
        for name in ("counts_positive.png", "counts_negative.png", "site_corr_pos.png",
                     "site_corr_neg.png", "category_corr_pos.png"):
            assert (out / name).is_file(), name

    def test_no_figures_flag(self, runner, demo_run, tmp_path):
        run_dir, _ = demo_run
        out = tmp_path / "nofig"
        result = runner.invoke(cli, [
            "prevalence", "--mentions", str(run_dir / "mentions.jsonl"),
            "--out", str(out), "--permutations", "100", "--no-figures",
        ])
        assert result.exit_code == 0
        assert (out / "counts.csv").is_file()
        assert not list(out.glob("*.png"))

    def test_infeasible_matrix_skipped_not_fatal(self, runner, demo_run, tmp_path):
        # Collapsing all notes onto two sites starves the category matrix
        # (needs >= 3 sites); the report must still be written.
        run_dir, _ = demo_run
        sites = tmp_path / "sites.csv"
        sites.write_text("note_id,site_id\nn1,s1\nn2,s1\nn3,s2\n", encoding="utf-8")
        out = tmp_path / "twosites"
        result = runner.invoke(cli, [
            "prevalence", "--mentions", str(run_dir / "mentions.jsonl"),
            "--sites", str(sites), "--out", str(out), "--permutations", "100", "--no-figures",
        ])
        assert result.exit_code == 0, result.stderr
        assert (out / "counts.csv").is_file()
        assert (out / "site_corr_pos.csv").is_file()
        assert not (out / "category_corr_pos.csv").exists()
        summary = json.loads((out / "summary.json").read_text(encoding="utf-8"))
        assert summary["category_correlations_positive"] is None

    def test_sites_override_unknown_note(self, runner, demo_run, tmp_path):
        run_dir, _ = demo_run
        sites = tmp_path / "sites.csv"
        sites.write_text("note_id,site_id\nn1,siteX\n", encoding="utf-8")
        result = runner.invoke(cli, [
            "prevalence", "--mentions", str(run_dir / "mentions.jsonl"),
            "--sites", str(sites), "--out", str(tmp_path / "r"),
        ])
        assert result.exit_code == 1
        assert "site mapping" in result.stderr


class TestSelftest:
    def test_selftest_passes(self, runner):
        result = runner.invoke(cli, ["selftest", "--ner-cases", "20", "--spearman-cases", "40"])
        assert result.exit_code == 0, result.output
        assert "ner-oracle" in result.output
        assert "assertion-golden" in result.output
        assert " 0 failed" in result.output


def test_module_entry_point_runs():
    proc = subprocess.run(
        [sys.executable, "-m", "symscribe", "--version"],
        capture_output=True, text=True, timeout=60,
    )
    assert proc.returncode == 0
    assert proc.stdout.strip() == PIPELINE_VERSION
