"""Operator command line: ingest, gen, lint, eval, serve.

Exit codes: 0 ok, 1 lint errors or contract violation, 2 usage error,
3 provider failure. Failures print a message, never a traceback.
"""

from __future__ import annotations

import json
import sys
from pathlib import Path

import click

from .core import ComplexityCategory, PromptCondition, ProviderProfile
from .evalharness import (
    EvalError,
    aggregate_all,
    compare_models,
    correct_answer_rates,
    distribution,
    read_annotations,
    read_categories,
    render_aggregates_csv,
    render_report,
)
from .gateway import GatewayError, LlmGateway, load_fixtures
from .lint import LintConfig, lint_quiz
from .pipeline import QuizPipeline
from .quizparse import parse_quiz_block
from .store import BenchmarkManifest, Store, StoreError, import_manifest

EXIT_OK = 0
EXIT_FAILURE = 1
EXIT_USAGE = 2
EXIT_PROVIDER = 3


def load_provider_config(path: str) -> dict[str, ProviderProfile]:
    """Read profile_id -> ProviderProfile from a JSON or TOML mapping file."""
    text = Path(path).read_text(encoding="utf-8")
    if path.endswith(".toml"):
        try:
            import tomllib  # type: ignore[import-not-found]
        except ModuleNotFoundError:
            import tomli as tomllib
        data = tomllib.loads(text)
    else:
        data = json.loads(text)
    profiles = {}
    for profile_id, cfg in data.items():
        cfg = dict(cfg)
        cfg.setdefault("profile_id", profile_id)
        profiles[profile_id] = ProviderProfile.from_dict(cfg)
    return profiles


def _fail(message: str, code: int = EXIT_FAILURE) -> "NoReturn":  # noqa: F821
    click.echo(f"error: {message}", err=True)
    sys.exit(code)


@click.group()
def main() -> None:
    """Image-to-Arabic-quiz pipeline operations."""


@main.command()
@click.option("--manifest", "manifest_path", required=True, type=click.Path(exists=True), help="CSV or JSONL image manifest.")
@click.option("--store", "store_dir", default="./store", show_default=True, help="Store directory.")
def ingest(manifest_path: str, store_dir: str) -> None:
    """Import a benchmark image manifest into the store."""
    try:
        store = Store(store_dir)
        report = import_manifest(store, BenchmarkManifest.load(manifest_path))
    except (StoreError, ValueError, OSError) as exc:
        _fail(str(exc))
    for category in ComplexityCategory:
        click.echo(f"{category.value:<10} {report.by_category.get(category.value, 0)}")
    click.echo(f"{'total':<10} {report.total}")
    if report.failures:
        click.echo(f"failures: {len(report.failures)}", err=True)
        for failure in report.failures:
            click.echo(f"  {failure['locator']}: {failure['error']}", err=True)


@main.command()
@click.option("--filter", "complexity_filter", default=None, help="Restrict to one complexity, e.g. complexity=simple.")
@click.option("--vision", "vision_ids", multiple=True, required=True, help="Vision profile id (repeatable).")
@click.option("--quiz", "quiz_ids", multiple=True, required=True, help="Quiz profile id (repeatable).")
@click.option("--condition", type=click.Choice(["prompted", "bare", "both"]), default="both", show_default=True)
@click.option("--n", "n_questions", type=int, default=2, show_default=True, help="Questions per generation call.")
@click.option("--provider-config", "provider_config", required=True, type=click.Path(exists=True), help="JSON/TOML provider profiles.")
@click.option("--fixtures", "fixtures_path", default=None, type=click.Path(exists=True), help="Mock fixture JSONL for offline runs.")
@click.option("--store", "store_dir", default="./store", show_default=True, help="Store directory.")
def gen(
    complexity_filter: str | None,
    vision_ids: tuple[str, ...],
    quiz_ids: tuple[str, ...],
    condition: str,
    n_questions: int,
    provider_config: str,
    fixtures_path: str | None,
    store_dir: str,
) -> None:
    """Batch-generate descriptions and quiz drafts over stored images."""
    complexity = None
    if complexity_filter:
        value = complexity_filter.split("=", 1)[-1].strip()
        try:
            complexity = ComplexityCategory(value)
        except ValueError:
            _fail(f"unknown complexity {value!r}", EXIT_USAGE)
    try:
        profiles = load_provider_config(provider_config)
        vision_profiles = [profiles[p] for p in vision_ids]
        quiz_profiles = [profiles[p] for p in quiz_ids]
    except KeyError as exc:
        _fail(f"profile {exc.args[0]!r} not in {provider_config}", EXIT_USAGE)
    except (ValueError, OSError) as exc:
        _fail(str(exc))
    conditions = {
        "prompted": [PromptCondition.PROMPTED],
        "bare": [PromptCondition.BARE],
        "both": [PromptCondition.PROMPTED, PromptCondition.BARE],
    }[condition]

    fixtures = load_fixtures(fixtures_path) if fixtures_path else {}
    gateway = LlmGateway(fixtures=fixtures)
    try:
        store = Store(store_dir)
        pipeline = QuizPipeline(store, gateway)
        stats = pipeline.batch_generate(
            vision_profiles=vision_profiles,
            quiz_profiles=quiz_profiles,
            conditions=conditions,
            n_questions=n_questions,
            complexity=complexity,
        )
    except StoreError as exc:
        _fail(str(exc))
    except GatewayError as exc:
        _fail(str(exc), EXIT_PROVIDER)
    click.echo(f"descriptions: {stats.descriptions_created} (new: {stats.descriptions_new}, failed: {stats.description_failures})")
    click.echo(f"quizzes: {stats.quizzes_created} (new: {stats.quizzes_new}, failed: {stats.quiz_failures}, lint-rejected: {stats.rejected_count})")
    for category, counts in sorted(stats.per_category.items()):
        click.echo(f"  {category}: descriptions={counts['descriptions']} quizzes={counts['quizzes']}")
    if stats.description_failures or stats.quiz_failures:
        sys.exit(EXIT_PROVIDER)


@main.command("lint")
@click.option("--in", "source", default="store", show_default=True, help="'store' or a raw quiz-text file.")
@click.option("--lexicon", "lexicon_path", default=None, type=click.Path(exists=True), help="Optional word-list file.")
@click.option("--store", "store_dir", default="./store", show_default=True, help="Store directory (with --in store).")
def lint_cmd(source: str, lexicon_path: str | None, store_dir: str) -> None:
    """Lint stored quizzes (or a raw text file of quiz blocks); exit 1 on errors."""
    cfg = LintConfig(lexicon_path=lexicon_path)
    reports = []
    try:
        if source == "store":
            store = Store(store_dir, create=False)
            for quiz in sorted(store.list("quiz"), key=lambda q: q.id):
                reports.append(lint_quiz(quiz, cfg))
        else:
            text = Path(source).read_text(encoding="utf-8")
            outcome = parse_quiz_block(text)
            for diag in outcome.diagnostics:
                click.echo(f"parse: line {diag.line_no}: {diag.code} {diag.message}")
            for draft in outcome.quizzes:
                quiz = draft.to_quiz(
                    id=f"draft-{draft.ordinal}", image_id="-", description_id="-", model_id="-"
                )
                reports.append(lint_quiz(quiz, cfg, declared_text=draft.declared_correct_text))
    except (StoreError, OSError) as exc:
        _fail(str(exc))
    errors = 0
    for report in reports:
        status = "pass" if report.passed else "FAIL"
        click.echo(f"{report.quiz_id}: {status}")
        for finding in report.findings:
            click.echo(f"  [{finding.severity.value}] {finding.code} {finding.option_label or '-'} {finding.detail}")
            if finding.severity.value == "error":
                errors += 1
    click.echo(f"quizzes: {len(reports)}, error findings: {errors}")
    if errors:
        sys.exit(EXIT_FAILURE)


@main.group()
def eval() -> None:
    """Annotation import and report generation."""


def _ensure_out(out_dir: str) -> Path:
    path = Path(out_dir)
    path.mkdir(parents=True, exist_ok=True)
    return path


@eval.command("import")
@click.option("--annotations", "annotations_path", required=True, type=click.Path(exists=True), help="CSV or JSONL annotation file.")
@click.option("--store", "store_dir", default="./store", show_default=True)
def eval_import(annotations_path: str, store_dir: str) -> None:
    """Load an annotation file into the store."""
    try:
        store = Store(store_dir)
        records = read_annotations(annotations_path)
        stored = 0
        for record in records:
            existing = store.list("annotation", id=record.id)
            if not existing:
                store.put(record)
                stored += 1
    except (EvalError, StoreError, ValueError, OSError) as exc:
        _fail(str(exc))
    click.echo(f"annotations: {len(records)} read, {stored} stored")


@eval.command("aggregate")
@click.option("--store", "store_dir", default="./store", show_default=True)
@click.option("--out", "out_dir", default="./reports", show_default=True)
def eval_aggregate(store_dir: str, out_dir: str) -> None:
    """Deviation-filtered mean score per annotated subject."""
    try:
        store = Store(store_dir, create=False)
        aggregates = aggregate_all(store.list("annotation"))
    except (EvalError, StoreError) as exc:
        _fail(str(exc))
    out = _ensure_out(out_dir) / "aggregates.csv"
    out.write_text(render_aggregates_csv(aggregates), encoding="utf-8")
    flagged = sum(1 for a in aggregates.values() if a.needs_adjudication)
    click.echo(f"subjects: {len(aggregates)}, needs adjudication: {flagged}")
    click.echo(f"wrote {out}")


def _quiz_categories(store: Store) -> dict[str, ComplexityCategory]:
    categories: dict[str, ComplexityCategory] = {}
    images = {img.id: img.complexity for img in store.list("image")}
    for quiz in store.list("quiz"):
        if quiz.image_id in images:
            categories[quiz.id] = images[quiz.image_id]
    return categories


@eval.command("rates")
@click.option("--store", "store_dir", default="./store", show_default=True)
@click.option("--annotations", "annotations_path", default=None, type=click.Path(exists=True), help="Annotation file (defaults to stored annotations).")
@click.option("--categories", "categories_path", default=None, type=click.Path(exists=True), help="subject_id,complexity CSV when quizzes are not stored.")
@click.option("--out", "out_dir", default="./reports", show_default=True)
def eval_rates(store_dir: str, annotations_path: str | None, categories_path: str | None, out_dir: str) -> None:
    """Correct-answer rate per image category and globally."""
    try:
        if annotations_path:
            records = read_annotations(annotations_path)
        else:
            records = Store(store_dir, create=False).list("annotation")
        if categories_path:
            categories = read_categories(categories_path)
        else:
            categories = _quiz_categories(Store(store_dir, create=False))
        report = correct_answer_rates(records, categories)
    except (EvalError, StoreError, ValueError, OSError) as exc:
        _fail(str(exc))
    out = _ensure_out(out_dir)
    (out / "rates.md").write_text(render_report(report, "md"), encoding="utf-8")
    (out / "rates.csv").write_text(render_report(report, "csv"), encoding="utf-8")
    for category, cell in sorted(report.per_category.items(), key=lambda kv: [c.value for c in ComplexityCategory].index(kv[0])):
        click.echo(f"{category.capitalize():<10} {cell.rate_percent:.2f}")
    click.echo(f"{'Global':<10} {report.global_rate.rate_percent:.2f}")
    click.echo(f"wrote {out / 'rates.md'} and {out / 'rates.csv'}")


def _grouped_aggregates(store: Store, subject: str, with_condition: bool = False):
    """Aggregate stored annotations, grouped (model, category); description
    groups optionally gain the prompt condition as a third element."""
    images = {img.id: img.complexity for img in store.list("image")}
    subjects: dict[str, tuple] = {}
    if subject == "description":
        for desc in store.list("description"):
            if desc.image_id in images:
                key = (desc.model_id, images[desc.image_id].value)
                if with_condition:
                    key += (desc.condition.value,)
                subjects[desc.id] = key
    else:
        for quiz in store.list("quiz"):
            if quiz.image_id in images:
                subjects[quiz.id] = (quiz.model_id, images[quiz.image_id].value)
    aggregates = aggregate_all(
        [r for r in store.list("annotation") if r.subject_id in subjects]
    )
    grouped: dict[tuple, list] = {}
    for sid, agg in aggregates.items():
        grouped.setdefault(subjects[sid], []).append(agg)
    return grouped


@eval.command("compare")
@click.option("--a", "model_a", required=True, help="First model id.")
@click.option("--b", "model_b", required=True, help="Second model id.")
@click.option("--subject", type=click.Choice(["description", "quiz"]), default="quiz", show_default=True)
@click.option("--store", "store_dir", default="./store", show_default=True)
@click.option("--out", "out_dir", default="./reports", show_default=True)
def eval_compare(model_a: str, model_b: str, subject: str, store_dir: str, out_dir: str) -> None:
    """Per-category mean comparison of two models (absolute and relative)."""
    try:
        store = Store(store_dir, create=False)
        report = compare_models(_grouped_aggregates(store, subject), model_a, model_b)
    except (EvalError, StoreError) as exc:
        _fail(str(exc))
    out = _ensure_out(out_dir)
    (out / "compare.md").write_text(render_report(report, "md"), encoding="utf-8")
    (out / "compare.csv").write_text(render_report(report, "csv"), encoding="utf-8")
    click.echo(render_report(report, "md"), nl=False)
    click.echo(f"wrote {out / 'compare.md'} and {out / 'compare.csv'}")


@eval.command("dist")
@click.option("--bins", "bins_raw", default="0,2,4,6,8,10", show_default=True, help="Comma-separated bin edges.")
@click.option("--subject", type=click.Choice(["description", "quiz"]), default="description", show_default=True)
@click.option("--store", "store_dir", default="./store", show_default=True)
@click.option("--out", "out_dir", default="./reports", show_default=True)
def eval_dist(bins_raw: str, subject: str, store_dir: str, out_dir: str) -> None:
    """Score-distribution histogram per model/category (and prompt condition
    for descriptions)."""
    try:
        bins = [float(b) for b in bins_raw.split(",")]
        store = Store(store_dir, create=False)
        grouped = _grouped_aggregates(store, subject, with_condition=subject == "description")
        scores_by_group = {
            "/".join(key): [a.mean for a in aggs if a.mean is not None]
            for key, aggs in grouped.items()
        }
        report = distribution(scores_by_group, bins)
    except (EvalError, StoreError, ValueError) as exc:
        _fail(str(exc))
    out = _ensure_out(out_dir)
    (out / f"dist_{subject}.md").write_text(render_report(report, "md"), encoding="utf-8")
    (out / f"dist_{subject}.csv").write_text(render_report(report, "csv"), encoding="utf-8")
    click.echo(render_report(report, "md"), nl=False)
    click.echo(f"wrote {out / f'dist_{subject}.md'} and {out / f'dist_{subject}.csv'}")


@main.command()
@click.option("--port", type=int, default=None, help="Listen port (default: ARABIQ_PORT or 8000).")
@click.option("--store", "store_dir", default="./store", show_default=True)
@click.option("--provider-config", "provider_config", required=True, type=click.Path(exists=True))
@click.option("--fixtures", "fixtures_path", default=None, type=click.Path(exists=True), help="Mock fixture JSONL.")
@click.option("--lexicon", "lexicon_path", default=None, type=click.Path(exists=True))
@click.option("--reports", "reports_dir", default="./reports", show_default=True)
@click.option("--host", default="127.0.0.1", show_default=True)
def serve(
    port: int | None,
    store_dir: str,
    provider_config: str,
    fixtures_path: str | None,
    lexicon_path: str | None,
    reports_dir: str,
    host: str,
) -> None:
    """Run the learner-facing HTTP API."""
    import os

    import uvicorn

    from .api import PORT_ENV, create_app

    if port is None:
        port = int(os.environ.get(PORT_ENV, "8000"))
    try:
        profiles = load_provider_config(provider_config)
        fixtures = load_fixtures(fixtures_path) if fixtures_path else {}
        store = Store(store_dir)
    except (StoreError, ValueError, OSError) as exc:
        _fail(str(exc))
    app = create_app(
        store,
        LlmGateway(fixtures=fixtures),
        profiles,
        lint_cfg=LintConfig(lexicon_path=lexicon_path),
        reports_dir=reports_dir,
    )
    uvicorn.run(app, host=host, port=port, log_level="warning")


if __name__ == "__main__":
    main()
