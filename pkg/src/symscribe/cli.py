"""Command-line entry point: lexicon check, extract, eval, prevalence, serve,
selftest.

Exit codes: 0 success, 1 validation failure (bad arguments, missing files,
lexicon diagnostics, failed selftest), 2 runtime error.
"""

from __future__ import annotations

import csv
import json
import sys
from pathlib import Path

import click

from . import PIPELINE_VERSION
from .assertion import BinaryAssertion
from .lexicon import load_lexicon, validate_lexicon, LexiconError
from .metrics import LabeledPair, bootstrap as run_bootstrap, score as run_score
from .pipeline import PipelineConfig, StartupError, run as run_pipeline
from .prevalence import (
    InsufficientData,
    UnknownSite,
    build_table,
    pairwise_category_correlations,
    pairwise_site_correlations,
    write_counts_csv,
    write_matrix_csv,
    write_summary_json,
)
from .docmodel import read_outputs

# Argv problems are validation failures, same exit class as bad file inputs.
click.exceptions.UsageError.exit_code = 1


@click.group()
@click.version_option(version=PIPELINE_VERSION, message="%(version)s")
def cli() -> None:
    """Symptom-mention extraction, assertion, evaluation, and review tools."""


# ---------------------------------------------------------------------------
# lexicon check

@cli.group()
def lexicon() -> None:
    """Lexicon utilities."""


@lexicon.command("check")
@click.argument("path", type=click.Path(path_type=Path))
@click.option("--dry-run", is_flag=True, help="Validate arguments only.")
def lexicon_check(path: Path, dry_run: bool) -> None:
    """Validate a lexicon TSV file; print diagnostics and exit 1 if any."""
    if not path.is_file():
        raise click.ClickException(f"lexicon file not found: {path}")
    if dry_run:
        click.echo(f"would check {path}", err=True)
        return
    try:
        lex = load_lexicon(path)
    except LexiconError as exc:
        click.echo(str(exc), err=True)
        sys.exit(1)
    diagnostics = validate_lexicon(lex)
    for diag in diagnostics:
        click.echo(str(diag), err=True)
    if diagnostics:
        sys.exit(1)


# ---------------------------------------------------------------------------
# extract

@cli.command()
@click.option("--config", "config_path", type=click.Path(path_type=Path), help="Pipeline config file (TOML key/value).")
@click.option("--in", "input_path", required=True, type=click.Path(path_type=Path), help="Notes file (CSV or JSONL).")
@click.option("--out", "output_dir", type=click.Path(path_type=Path), help="Run output directory.")
@click.option("--format", "input_format", type=click.Choice(["csv", "jsonl"]), default=None, help="Input format (default: by extension).")
@click.option("--lexicon", "lexicon_path", type=click.Path(path_type=Path), help="Lexicon TSV (default: bundled demo).")
@click.option("--section-rules", type=click.Path(path_type=Path), help="Section title list, one per line.")
@click.option("--abbrev-list", type=click.Path(path_type=Path), help="Abbreviation list, one per line.")
@click.option("--assertion-rules", type=click.Path(path_type=Path), help="Assertion trigger rule TSV.")
@click.option("--remote-url", help="Remote assertion classifier base URL.")
@click.option("--workers", type=int, default=None, help="Worker count (default 1).")
@click.option("--seed", type=int, default=None)
@click.option("--dry-run", is_flag=True, help="Validate configuration without writing anything.")
def extract(
    config_path: Path | None,
    input_path: Path,
    output_dir: Path | None,
    input_format: str | None,
    lexicon_path: Path | None,
    section_rules: Path | None,
    abbrev_list: Path | None,
    assertion_rules: Path | None,
    remote_url: str | None,
    workers: int | None,
    seed: int | None,
    dry_run: bool,
) -> None:
    """Run the extraction pipeline over a notes file."""
    if not input_path.is_file():
        raise click.ClickException(f"input notes file not found: {input_path}")
    if config_path is not None and not config_path.is_file():
        raise click.ClickException(f"config file not found: {config_path}")
    try:
        config = PipelineConfig.from_file(config_path) if config_path else PipelineConfig()
        if lexicon_path is not None:
            config.lexicon_path = lexicon_path
        if section_rules is not None:
            config.section_rules_path = section_rules
        if abbrev_list is not None:
            config.abbrev_list_path = abbrev_list
        if assertion_rules is not None:
            config.assertion_rules_path = assertion_rules
        if remote_url is not None:
            config.remote_url = remote_url
        if workers is not None:
            if workers < 1:
                raise click.ClickException("--workers must be >= 1")
            config.workers = workers
        if seed is not None:
            config.seed = seed
        if output_dir is not None:
            config.output_dir = output_dir
        for label, p in (("lexicon", config.lexicon_path), ("section rules", config.section_rules_path),
                         ("abbreviation list", config.abbrev_list_path), ("assertion rules", config.assertion_rules_path)):
            if p is not None and not Path(p).is_file():
                raise click.ClickException(f"{label} file not found: {p}")
        if dry_run:
            click.echo(f"would extract {input_path} -> {config.output_dir} (workers={config.workers})", err=True)
            return
        summary = run_pipeline(config, input_path, input_format)
    except StartupError as exc:
        raise click.ClickException(str(exc)) from exc
    except LexiconError as exc:
        raise click.ClickException(f"lexicon rejected: {exc}") from exc
    click.echo(json.dumps(summary.as_dict(), indent=2))


# ---------------------------------------------------------------------------
# eval

def _load_gold(path: Path) -> dict[tuple[str, int, int], BinaryAssertion]:
    gold: dict[tuple[str, int, int], BinaryAssertion] = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
                key = (obj["note_id"], int(obj["start"]), int(obj["end"]))
                gold[key] = BinaryAssertion(obj["binary"])
            except (ValueError, KeyError, TypeError) as exc:
                raise click.ClickException(f"{path}:{lineno}: bad gold record: {exc}") from exc
    return gold


@cli.command("eval")
@click.option("--pred", "pred_path", required=True, type=click.Path(path_type=Path), help="Pipeline mentions.jsonl.")
@click.option("--gold", "gold_path", required=True, type=click.Path(path_type=Path), help="Gold JSONL (note_id/start/end/binary).")
@click.option("--bootstrap", "iterations", type=int, default=100, show_default=True, help="Bootstrap iterations.")
@click.option("--seed", type=int, default=7, show_default=True)
@click.option("--out", "out_dir", type=click.Path(path_type=Path), default=Path("."), show_default=True)
@click.option("--figures", is_flag=True, help="Render bootstrap distribution figures next to the report.")
@click.option("--dry-run", is_flag=True)
def eval_cmd(pred_path: Path, gold_path: Path, iterations: int, seed: int, out_dir: Path, figures: bool, dry_run: bool) -> None:
    """Score predictions against a gold set, with note-level bootstrap."""
    for label, p in (("predictions", pred_path), ("gold", gold_path)):
        if not p.is_file():
            raise click.ClickException(f"{label} file not found: {p}")
    if iterations < 1:
        raise click.ClickException("--bootstrap must be >= 1")
    if dry_run:
        click.echo(f"would evaluate {pred_path} against {gold_path}", err=True)
        return
    gold = _load_gold(gold_path)
    predicted: dict[tuple[str, int, int], BinaryAssertion] = {}
    for output in read_outputs(pred_path):
        for mention, result in output.mentions:
            predicted[(output.note_id, mention.span.start, mention.span.end)] = result.binary
    pairs = [
        LabeledPair(note_id=key[0], start=key[1], end=key[2], predicted=predicted[key], gold=label)
        for key, label in gold.items()
        if key in predicted
    ]
    if not pairs:
        raise click.ClickException("no gold mentions matched the predictions")
    point = run_score(pairs)
    boot = run_bootstrap(pairs, iterations=iterations, seed=seed)
    report = {
        "pairs": len(pairs),
        "gold_unmatched": len(gold) - len(pairs),
        "pred_unmatched": len(predicted) - len(pairs),
        "point": point.as_dict(),
        "bootstrap": boot.as_dict(),
    }
    out_dir.mkdir(parents=True, exist_ok=True)
    (out_dir / "eval_report.json").write_text(json.dumps(report, indent=2) + "\n", encoding="utf-8")
    if figures:
        from .report import render_bootstrap_figure

        render_bootstrap_figure(boot, out_dir / "bootstrap_metrics.png")
    click.echo(json.dumps(report, indent=2))


# ---------------------------------------------------------------------------
# prevalence

@cli.command()
@click.option("--mentions", "mentions_path", required=True, type=click.Path(path_type=Path), help="Pipeline mentions.jsonl.")
@click.option("--sites", "sites_path", type=click.Path(path_type=Path), help="Optional note_id,site_id CSV override.")
@click.option("--out", "out_dir", required=True, type=click.Path(path_type=Path), help="Report directory.")
@click.option("--permutations", type=int, default=10_000, show_default=True)
@click.option("--seed", type=int, default=0, show_default=True)
@click.option("--figures/--no-figures", default=True, show_default=True, help="Render PNG figures beside the CSVs.")
@click.option("--dry-run", is_flag=True)
def prevalence(
    mentions_path: Path,
    sites_path: Path | None,
    out_dir: Path,
    permutations: int,
    seed: int,
    figures: bool,
    dry_run: bool,
) -> None:
    """Build the site-by-category prevalence report with rank correlations."""
    if not mentions_path.is_file():
        raise click.ClickException(f"mentions file not found: {mentions_path}")
    site_of = None
    if sites_path is not None:
        if not sites_path.is_file():
            raise click.ClickException(f"sites file not found: {sites_path}")
        site_of = {}
        with open(sites_path, newline="", encoding="utf-8") as fh:
            reader = csv.DictReader(fh)
            if not reader.fieldnames or "note_id" not in reader.fieldnames or "site_id" not in reader.fieldnames:
                raise click.ClickException(f"{sites_path}: needs note_id and site_id columns")
            for row in reader:
                site_of[row["note_id"]] = row["site_id"]
    if dry_run:
        click.echo(f"would build prevalence report from {mentions_path} into {out_dir}", err=True)
        return
    try:
        table = build_table(read_outputs(mentions_path), site_of)
    except UnknownSite as exc:
        raise click.ClickException(str(exc)) from exc

    def attempt(label, fn):
        try:
            return fn()
        except InsufficientData as exc:
            click.echo(f"skipping {label}: {exc}", err=True)
            return None

    site_pos = attempt("site correlations (positive)",
                       lambda: pairwise_site_correlations(table, "positive", seed=seed, permutations=permutations))
    site_neg = attempt("site correlations (negative)",
                       lambda: pairwise_site_correlations(table, "negative", seed=seed, permutations=permutations))
    cat_result = attempt("category correlations (positive)",
                         lambda: pairwise_category_correlations(table, "positive", seed=seed, permutations=permutations))
    cat_pos, totals = cat_result if cat_result else (None, None)

    out_dir.mkdir(parents=True, exist_ok=True)
    write_counts_csv(table, out_dir / "counts.csv")
    for matrix, name in ((site_pos, "site_corr_pos.csv"), (site_neg, "site_corr_neg.csv"), (cat_pos, "category_corr_pos.csv")):
        if matrix is not None:
            write_matrix_csv(matrix, out_dir / name)
    write_summary_json(table, site_pos, site_neg, cat_pos, totals, out_dir / "summary.json")
    if figures:
        from .report import render_correlation_heatmap, render_counts_figure

        render_counts_figure(table, "positive", out_dir / "counts_positive.png")
        render_counts_figure(table, "negative", out_dir / "counts_negative.png")
        if site_pos is not None:
            render_correlation_heatmap(site_pos, out_dir / "site_corr_pos.png", "Site correlations (positive mentions)")
        if site_neg is not None:
            render_correlation_heatmap(site_neg, out_dir / "site_corr_neg.png", "Site correlations (negative mentions)")
        if cat_pos is not None:
            render_correlation_heatmap(
                cat_pos, out_dir / "category_corr_pos.png", "Category correlations (positive mentions)", totals=totals
            )
    click.echo(f"prevalence report written to {out_dir}", err=True)


# ---------------------------------------------------------------------------
# serve

@cli.command()
@click.option("--port", type=int, default=8680, show_default=True)
@click.option("--data-dir", type=click.Path(path_type=Path), envvar="SYMSCRIBE_DATA", help="Session storage directory (env SYMSCRIBE_DATA).")
@click.option("--frontend", "frontend_dir", type=click.Path(path_type=Path), help="Static assets directory for the review UI.")
@click.option("--dry-run", is_flag=True)
def serve(port: int, data_dir: Path | None, frontend_dir: Path | None, dry_run: bool) -> None:
    """Run the annotation review service."""
    if frontend_dir is not None and not frontend_dir.is_dir():
        raise click.ClickException(f"frontend directory not found: {frontend_dir}")
    if dry_run:
        click.echo(f"would serve on port {port} with data in {data_dir or 'annotation_data'}", err=True)
        return
    from .annotate import serve as serve_http

    serve_http(port=port, data_dir=data_dir, frontend_dir=frontend_dir)


# ---------------------------------------------------------------------------
# selftest

@cli.command()
@click.option("--ner-cases", type=int, default=100, show_default=True)
@click.option("--spearman-cases", type=int, default=200, show_default=True)
@click.option("--dry-run", is_flag=True)
def selftest(ner_cases: int, spearman_cases: int, dry_run: bool) -> None:
    """Run the embedded oracle suites and print pass/fail counts."""
    if dry_run:
        click.echo("would run suites: ner-oracle, spearman-oracle, assertion-golden", err=True)
        return
    from .selftest import run_all

    results = run_all(ner_cases=ner_cases, spearman_cases=spearman_cases)
    any_failed = False
    for result in results:
        click.echo(f"{result.name}: {result.passed} passed, {result.failed} failed")
        for line in result.detail[:5]:
            click.echo(f"  {line}", err=True)
        any_failed = any_failed or not result.ok
    if any_failed:
        sys.exit(1)


def main(argv: list[str] | None = None) -> None:
    try:
        cli.main(args=argv, prog_name="symscribe")
    except SystemExit:
        raise
    except Exception as exc:  # runtime failures exit 2, per the CLI contract
        click.echo(f"symscribe: error: {exc}", err=True)
        sys.exit(2)


if __name__ == "__main__":
    main()
