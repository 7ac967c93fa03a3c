"""Command surface for the two-stage annotation workflow.

Settings resolve as flags over config file over environment. The resolved
configuration is digested into the run store; resuming a store with a
different configuration is refused. One process owns a store at a time via
``store/.lock``.

Exit codes: 0 success, 1 validation error, 2 integrity error, 64 usage.
"""

from __future__ import annotations

import json
import os
import sys
from contextlib import contextmanager
from dataclasses import asdict, dataclass
from pathlib import Path

import click
from filelock import FileLock, Timeout

from . import __version__
from .audit import (
    FpDetectionResult,
    critic_agreement,
    error_rate_table,
    load_batch,
    load_judgments,
    sample_positives,
    write_batch,
)
from .codebook import Codebook, load_codebook
from .corpus import Corpus, Phase, filter_high_content, ingest, load_gold
from .evaluation import compare_stages, corrected_eval, direct_eval
from .exceptions import IntegrityError, ValidationError
from .gateway import (
    DecodingConfig,
    FailureInjection,
    OpenAIChatProvider,
    Provider,
    make_scripted_provider,
)
from .pipeline import (
    finalize,
    plan_stage_one,
    plan_stage_two,
    run_negative_critique,
    run_stage_one,
    run_stage_two,
)
from .reports import (
    critic_class_rates,
    error_rates_to_json,
    fp_detection_to_json,
    render_error_rates,
    render_fp_detection,
    render_stage_comparison,
    render_validation,
    stage_comparison_to_json,
    validation_to_json,
)
from .store import RunStore, config_digest_of, make_tick_clock, system_clock

DEFAULT_MIN_CHARS = 500
DEFAULT_CONCURRENCY = 8
DEFAULT_MODEL = "gpt-4o-2024-08-06"

ENDPOINT_ENV = "CRITIC_LOOP_ENDPOINT"
MODEL_ENV = "CRITIC_LOOP_MODEL"


@dataclass(frozen=True)
class RunConfig:
    corpus: str
    codebook: str
    endpoint: str | None
    model_id: str
    temperature: float
    top_p: float
    max_output_tokens: int
    concurrency: int
    seed: int
    min_chars: int
    mock_script: str | None

    def digest(self) -> str:
        return config_digest_of(asdict(self))

    def decoding(self) -> DecodingConfig:
        return DecodingConfig(
            model_id=self.model_id,
            temperature=self.temperature,
            top_p=self.top_p,
            max_output_tokens=self.max_output_tokens,
        )


def _load_config_file(path: str | None) -> dict:
    if not path:
        return {}
    try:
        payload = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise ValidationError(f"cannot read config file {path}: {exc}") from exc
    if not isinstance(payload, dict):
        raise ValidationError(f"config file {path} must hold a JSON object")
    return payload


def resolve_config(flags: dict, config_path: str | None) -> RunConfig:
    """Flags override the config file, which overrides the environment."""
    file_values = _load_config_file(config_path)
    env_values = {
        "endpoint": os.environ.get(ENDPOINT_ENV),
        "model": os.environ.get(MODEL_ENV),
    }

    def pick(name: str, default=None):
        if flags.get(name) is not None:
            return flags[name]
        if file_values.get(name) is not None:
            return file_values[name]
        if env_values.get(name) is not None:
            return env_values[name]
        return default

    corpus = pick("corpus")
    codebook = pick("codebook")
    if not corpus or not codebook:
        raise ValidationError("both --corpus and --codebook are required")
    return RunConfig(
        corpus=str(corpus),
        codebook=str(codebook),
        endpoint=pick("endpoint"),
        model_id=str(pick("model", DEFAULT_MODEL)),
        temperature=float(pick("temperature", 0.0)),
        top_p=float(pick("top_p", 1.0)),
        max_output_tokens=int(pick("max_tokens", 1024)),
        concurrency=int(pick("concurrency", DEFAULT_CONCURRENCY)),
        seed=int(pick("seed", 0)),
        min_chars=int(pick("min_chars", DEFAULT_MIN_CHARS)),
        mock_script=pick("mock_script"),
    )


def load_script_file(path: str | Path):
    """Scripted responses plus failure plan from a JSONL file."""
    script = {}
    plan = []
    for lineno, line in enumerate(Path(path).read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        record = json.loads(line)
        if "failure" in record:
            f = record["failure"]
            plan.append(
                FailureInjection(
                    call_index=f["call_index"],
                    kind=f["kind"],
                    text=f.get("text", FailureInjection.__dataclass_fields__["text"].default),
                )
            )
            continue
        for required in ("passage_id", "code_id", "stage", "text"):
            if required not in record:
                raise ValidationError(f"{path} line {lineno}: missing field {required!r}")
        script[(record["passage_id"], record["code_id"], record["stage"])] = record["text"]
    return script, plan


def _provider_and_clock(cfg: RunConfig) -> tuple[Provider, object]:
    if cfg.mock_script:
        script, plan = load_script_file(cfg.mock_script)
        return make_scripted_provider(script, plan), make_tick_clock()
    if not cfg.endpoint:
        raise ValidationError("provide --endpoint for live runs or --mock-script for replay")
    return OpenAIChatProvider(endpoint=cfg.endpoint), system_clock


def _load_inputs(cfg: RunConfig) -> tuple[Corpus, Codebook]:
    corpus = filter_high_content(ingest(cfg.corpus), cfg.min_chars)
    cb = load_codebook(cfg.codebook)
    return corpus, cb


@contextmanager
def _store_lock(store_dir: str):
    path = Path(store_dir)
    path.mkdir(parents=True, exist_ok=True)
    lock = FileLock(path / ".lock")
    try:
        with lock.acquire(timeout=0):
            yield
    except Timeout:
        raise ValidationError(f"another process owns the store at {store_dir}") from None


def _open_store(cfg: RunConfig, store_dir: str, clock) -> RunStore:
    return RunStore.open(store_dir, cfg.digest(), clock=clock)


def _echo_excluded(excluded) -> None:
    if excluded:
        click.echo(f"excluded {len(excluded)} failed key(s): {excluded[:5]}{'...' if len(excluded) > 5 else ''}")


def _write_json(path: str | None, payload: dict) -> None:
    if path:
        Path(path).write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")
        click.echo(f"wrote {path}")


def _code_titles(cb: Codebook) -> dict[str, str]:
    return {c.code_id: c.title for c in cb.codes}


_run_options = [
    click.option("--corpus", "corpus_path", type=click.Path(), help="Corpus JSONL file."),
    click.option("--codebook", "codebook_path", type=click.Path(), help="Codebook JSON file."),
    click.option("--store", "store_dir", required=True, type=click.Path(), help="Run store directory."),
    click.option("--config", "config_path", type=click.Path(), help="JSON config file."),
    click.option("--endpoint", help="OpenAI-compatible base URL."),
    click.option("--model", help=f"Model id (default {DEFAULT_MODEL})."),
    click.option("--temperature", type=float, help="Sampling temperature (default 0)."),
    click.option("--top-p", "top_p", type=float, help="Nucleus sampling mass (default 1)."),
    click.option("--max-tokens", "max_tokens", type=int, help="Completion token cap."),
    click.option("--concurrency", type=int, help=f"In-flight call bound (default {DEFAULT_CONCURRENCY})."),
    click.option("--seed", type=int, help="Seed for sampled passes."),
    click.option("--min-chars", "min_chars", type=int, help=f"High-content threshold (default {DEFAULT_MIN_CHARS})."),
    click.option("--mock-script", "mock_script", type=click.Path(), help="Scripted provider JSONL."),
]


def run_options(fn):
    for option in reversed(_run_options):
        fn = option(fn)
    return fn


def _resolve(kwargs) -> RunConfig:
    flags = {
        "corpus": kwargs.get("corpus_path"),
        "codebook": kwargs.get("codebook_path"),
        "endpoint": kwargs.get("endpoint"),
        "model": kwargs.get("model"),
        "temperature": kwargs.get("temperature"),
        "top_p": kwargs.get("top_p"),
        "max_tokens": kwargs.get("max_tokens"),
        "concurrency": kwargs.get("concurrency"),
        "seed": kwargs.get("seed"),
        "min_chars": kwargs.get("min_chars"),
        "mock_script": kwargs.get("mock_script"),
    }
    return resolve_config(flags, kwargs.get("config_path"))


@click.group()
@click.version_option(version=__version__, prog_name="critic-loop")
def cli() -> None:
    """Two-stage LLM annotation with a self-reflective critic."""


@cli.command()
@run_options
@click.option("--dry-run", is_flag=True, help="Print planned call counts; no network.")
def annotate(dry_run: bool, store_dir: str, **kwargs) -> None:
    """Stage one: label every (passage, code) pair."""
    cfg = _resolve(kwargs)
    corpus, cb = _load_inputs(cfg)
    if dry_run:
        digest = cfg.digest()
        if (Path(store_dir) / "run.json").exists():
            store = RunStore.open(store_dir, digest)
            pending = len(plan_stage_one(corpus, cb, store))
        else:
            pending = len(corpus) * len(cb.codes)
        click.echo(f"annotate would issue {pending} call(s) over {len(corpus)} passages x {len(cb.codes)} codes")
        return
    provider, clock = _provider_and_clock(cfg)
    with _store_lock(store_dir):
        store = _open_store(cfg, store_dir, clock)
        run_stage_one(corpus, cb, provider, store, cfg.decoding(), concurrency=cfg.concurrency)
    click.echo(
        f"stage one complete: {len(store.annotations)} annotation(s), "
        f"{len(store.positives())} positive(s), {store.call_count('s1')} call(s)"
    )


@cli.command()
@run_options
@click.option("--dry-run", is_flag=True, help="Print planned call counts; no network.")
def critique(dry_run: bool, store_dir: str, **kwargs) -> None:
    """Stage two: critique the stage-one predicted positives."""
    cfg = _resolve(kwargs)
    corpus, cb = _load_inputs(cfg)
    if dry_run:
        if (Path(store_dir) / "run.json").exists():
            store = RunStore.open(store_dir, cfg.digest())
            pending = len(plan_stage_two(store, corpus, cb))
        else:
            pending = 0
        click.echo(f"critique would issue {pending} call(s)")
        return
    provider, clock = _provider_and_clock(cfg)
    with _store_lock(store_dir):
        store = _open_store(cfg, store_dir, clock)
        run_stage_two(store, corpus, cb, provider, cfg.decoding(), concurrency=cfg.concurrency)
    click.echo(
        f"stage two complete: {len(store.verdicts)} verdict(s), {store.call_count('s2')} call(s)"
    )


@cli.command("critique-negatives")
@run_options
@click.option("--sample", "sample_n", type=int, help="Per-code sample size of negatives.")
def critique_negatives(store_dir: str, sample_n: int | None, **kwargs) -> None:
    """Optional pass: critique stage-one negatives with the flipped rule."""
    cfg = _resolve(kwargs)
    corpus, cb = _load_inputs(cfg)
    provider, clock = _provider_and_clock(cfg)
    with _store_lock(store_dir):
        store = _open_store(cfg, store_dir, clock)
        run_negative_critique(
            store, corpus, cb, provider, cfg.decoding(),
            sample_n=sample_n, seed=cfg.seed, concurrency=cfg.concurrency,
        )
    click.echo(f"negative critique complete: {store.call_count('negative_critique')} call(s)")


@cli.command("finalize")
@click.option("--store", "store_dir", required=True, type=click.Path())
def finalize_cmd(store_dir: str) -> None:
    """Assemble final labels from annotations and verdicts."""
    with _store_lock(store_dir):
        store = RunStore.open_existing(store_dir)
        labels, excluded = finalize(store)
    positives = sum(l.label for l in labels)
    click.echo(f"finalized {len(labels)} label(s), {positives} positive(s)")
    _echo_excluded(excluded)


@cli.group()
def audit() -> None:
    """Audit stage-one positives: sample, serve, tabulate."""


@audit.command("sample")
@click.option("--store", "store_dir", required=True, type=click.Path())
@click.option("--code", "code_id", required=True)
@click.option("--n", "n", required=True, type=int)
@click.option("--seed", required=True, type=int)
@click.option("--out", "out_path", required=True, type=click.Path())
def audit_sample(store_dir: str, code_id: str, n: int, seed: int, out_path: str) -> None:
    """Draw a seeded audit batch from one code's positive pool."""
    store = RunStore.open_existing(store_dir)
    batch = sample_positives(store, code_id, n, seed)
    write_batch(batch, out_path)
    click.echo(f"wrote batch {batch.batch_id} with {len(batch.items)} item(s) to {out_path}")


@audit.command("serve")
@click.option("--store", "store_dir", required=True, type=click.Path())
@click.option("--corpus", "corpus_path", required=True, type=click.Path())
@click.option("--codebook", "codebook_path", required=True, type=click.Path())
@click.option("--batches", "batches_dir", required=True, type=click.Path())
@click.option("--judgments", "judgments_path", required=True, type=click.Path())
@click.option("--host", default="127.0.0.1")
@click.option("--port", default=8700, type=int)
@click.option("--token", default=None, help="Static bearer token.")
@click.option("--cors-origin", "cors_origins", multiple=True, help="Allowed UI origin(s).")
@click.option("--ui-dir", "ui_dir", type=click.Path(), help="Static SPA directory to mount at /.")
def audit_serve(
    store_dir: str,
    corpus_path: str,
    codebook_path: str,
    batches_dir: str,
    judgments_path: str,
    host: str,
    port: int,
    token: str | None,
    cors_origins: tuple[str, ...],
    ui_dir: str | None,
) -> None:
    """Serve the adjudication HTTP API (and optionally the UI)."""
    import uvicorn

    from .audit import JudgmentJournal
    from .service import AuditService, create_app

    RunStore.open_existing(store_dir)  # fail fast on a bad store path
    batches = {}
    for path in sorted(Path(batches_dir).glob("*.json")):
        batch = load_batch(path)
        batches[batch.batch_id] = batch
    if not batches:
        raise ValidationError(f"no batch files found in {batches_dir}")
    service = AuditService(
        batches=batches,
        journal=JudgmentJournal(judgments_path),
        codebook=load_codebook(codebook_path),
        corpus=ingest(corpus_path),
    )
    app = create_app(service, cors_origins=list(cors_origins) or None, token=token)
    if ui_dir:
        from fastapi.staticfiles import StaticFiles

        app.mount("/", StaticFiles(directory=ui_dir, html=True), name="ui")
    click.echo(f"serving {len(batches)} batch(es) on http://{host}:{port}")
    uvicorn.run(app, host=host, port=port, log_level="warning")


@audit.command("table")
@click.option("--judgments", "judgments_path", required=True, type=click.Path())
@click.option("--codebook", "codebook_path", type=click.Path())
@click.option("--json", "json_path", type=click.Path(), help="Also write JSON to this file.")
def audit_table(judgments_path: str, codebook_path: str | None, json_path: str | None) -> None:
    """Per-code error-rate table from a judgment journal."""
    judgments = load_judgments(judgments_path)
    if not judgments:
        raise ValidationError(f"no judgments in {judgments_path}")
    rows = error_rate_table(judgments)
    titles = _code_titles(load_codebook(codebook_path)) if codebook_path else None
    click.echo(render_error_rates(rows, titles=titles), nl=False)
    _write_json(json_path, error_rates_to_json(rows))


@cli.command("eval")
@click.option("--phase", required=True, type=click.Choice(["enriched", "natural"]))
@click.option("--stage", required=True, type=click.Choice(["s1", "s2"]))
@click.option("--gold", "gold_path", required=True, type=click.Path())
@click.option("--store", "store_dir", required=True, type=click.Path())
@click.option("--codebook", "codebook_path", required=True, type=click.Path())
@click.option("--ppv-pool", "ppv_pool_path", type=click.Path(), help="Audited positives JSONL.")
@click.option("--corpus-size", "corpus_size", type=int, help="Scale rates to expected counts for a corpus of this size.")
@click.option("--json", "json_path", type=click.Path(), help="Write metrics JSON to this file.")
def eval_cmd(
    phase: str,
    stage: str,
    gold_path: str,
    store_dir: str,
    codebook_path: str,
    ppv_pool_path: str | None,
    corpus_size: int | None,
    json_path: str | None,
) -> None:
    """Score a stage against a gold set, directly or prevalence-corrected."""
    cb = load_codebook(codebook_path)
    store = RunStore.open_existing(store_dir)
    gold = load_gold(gold_path, Phase(phase), codebook=cb)
    titles = _code_titles(cb)
    if phase == "enriched":
        rows, excluded = direct_eval(store, gold, cb, stage)
        click.echo(render_validation(rows, titles=titles), nl=False)
        _echo_excluded(excluded)
        _write_json(json_path, validation_to_json(rows))
        return
    judgments = load_judgments(ppv_pool_path) if ppv_pool_path else []
    rows, excluded = corrected_eval(store, gold, cb, stage, judgments)
    validation_rows = [
        (
            r.code_id,
            f"prevalence={r.estimates.prevalence:.4f} rate={r.estimates.positive_rate:.4f} "
            f"ppv={r.estimates.ppv:.4f} pool={r.pool_size}"
            + (" [clamped]" if r.reconstruction.clamped else ""),
            r.metrics,
        )
        for r in rows
    ]
    for code_id, summary, metrics in validation_rows:
        click.echo(f"{titles.get(code_id, code_id)}: {summary}")
        click.echo(
            f"  kappa={metrics.kappa:.4f} precision={metrics.precision:.4f} "
            f"recall={metrics.recall:.4f} f1={metrics.f1:.4f}"
        )
    _echo_excluded(excluded)
    row_dicts = []
    for r in rows:
        d = r.to_dict()
        if corpus_size:
            d["expected_counts"] = r.reconstruction.expected_counts(corpus_size)
        row_dicts.append(d)
    _write_json(json_path, {"table": "corrected_eval", "rows": row_dicts})


@cli.command("compare")
@click.option("--gold", "gold_path", required=True, type=click.Path())
@click.option("--store", "store_dir", required=True, type=click.Path())
@click.option("--codebook", "codebook_path", required=True, type=click.Path())
@click.option("--ppv-pool", "ppv_pool_path", type=click.Path())
@click.option("--json", "json_path", type=click.Path())
def compare_cmd(
    gold_path: str,
    store_dir: str,
    codebook_path: str,
    ppv_pool_path: str | None,
    json_path: str | None,
) -> None:
    """Stage-one vs stage-two corrected metrics on the natural gold set."""
    cb = load_codebook(codebook_path)
    store = RunStore.open_existing(store_dir)
    gold = load_gold(gold_path, Phase.NATURAL, codebook=cb)
    judgments = load_judgments(ppv_pool_path) if ppv_pool_path else []
    rows = compare_stages(store, gold, cb, judgments)
    click.echo(render_stage_comparison(rows, titles=_code_titles(cb)), nl=False)
    _write_json(json_path, stage_comparison_to_json(rows))


@cli.command("report")
@click.option("--store", "store_dir", required=True, type=click.Path())
@click.option("--codebook", "codebook_path", required=True, type=click.Path())
@click.option("--judgments", "judgments_path", type=click.Path())
@click.option("--gold-enriched", "gold_enriched_path", type=click.Path())
@click.option("--gold-natural", "gold_natural_path", type=click.Path())
@click.option("--ppv-pool", "ppv_pool_path", type=click.Path())
@click.option("--json", "json_path", type=click.Path())
def report_cmd(
    store_dir: str,
    codebook_path: str,
    judgments_path: str | None,
    gold_enriched_path: str | None,
    gold_natural_path: str | None,
    ppv_pool_path: str | None,
    json_path: str | None,
) -> None:
    """Emit every table the available artifacts support."""
    cb = load_codebook(codebook_path)
    store = RunStore.open_existing(store_dir)
    titles = _code_titles(cb)
    payload: dict = {}

    if judgments_path:
        judgments = load_judgments(judgments_path)
        rows = error_rate_table(judgments)
        by_code: dict[str, list] = {}
        for j in judgments:
            by_code.setdefault(j.code_id, []).append(j)
        llm_rates = {}
        fp_rows: list[tuple[str, float, FpDetectionResult | None]] = []
        for row in rows:
            result = None
            try:
                result = critic_agreement(by_code[row.code_id], store.verdicts.values())
                llm_rates[row.code_id] = critic_class_rates(result)
            except IntegrityError:
                pass  # code not critiqued in this store
            fp_rows.append((row.code_id, row.total_rate, result))
        click.echo("Audit error rates\n" + render_error_rates(rows, llm_rates, titles=titles))
        click.echo("Critic FP detection\n" + render_fp_detection(fp_rows, titles=titles))
        payload["error_rates"] = error_rates_to_json(rows, llm_rates)
        payload["fp_detection"] = fp_detection_to_json(fp_rows)

    if gold_enriched_path:
        gold = load_gold(gold_enriched_path, Phase.ENRICHED, codebook=cb)
        rows, excluded = direct_eval(store, gold, cb, "s1")
        click.echo("Stage-one validation (enriched gold)\n" + render_validation(rows, titles=titles))
        _echo_excluded(excluded)
        payload["validation"] = validation_to_json(rows)

    if gold_natural_path:
        gold = load_gold(gold_natural_path, Phase.NATURAL, codebook=cb)
        judgments = load_judgments(ppv_pool_path) if ppv_pool_path else []
        rows = compare_stages(store, gold, cb, judgments)
        click.echo("Stage comparison (natural gold)\n" + render_stage_comparison(rows, titles=titles))
        payload["comparison"] = stage_comparison_to_json(rows)

    if not payload:
        click.echo("nothing to report: pass --judgments and/or gold files")
    _write_json(json_path, payload)


def main(argv: list[str] | None = None) -> None:
    try:
        cli.main(args=argv, standalone_mode=False)
    except click.UsageError as exc:
        exc.show()
        sys.exit(64)
    except click.ClickException as exc:
        exc.show()
        sys.exit(1)
    except click.Abort:
        sys.exit(1)
    except ValidationError as exc:
        click.echo(f"error: {exc}", err=True)
        sys.exit(1)
    except OSError as exc:
        click.echo(f"i/o error: {exc}", err=True)
        sys.exit(1)
    except IntegrityError as exc:
        click.echo(f"integrity error: {exc}", err=True)
        sys.exit(2)


if __name__ == "__main__":
    main()
