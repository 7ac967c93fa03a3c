"""Two-stage annotation orchestration.

Stage one annotates every (passage, code) pair with an independent per-code
prompt. Stage two critiques only the stage-one positives, so its call count
is the stage-one positive count by construction. An optional negative-
critique pass reviews stage-one negatives under the flipped sufficiency
rule and can promote them.

Work items run concurrently up to ``concurrency`` in-flight calls, but
results are appended to the store in submission order, so identical inputs
yield byte-identical journals. A response that fails to parse gets one
re-ask with an appended format reminder; a second failure marks the key
failed rather than defaulting it to negative.
"""

from __future__ import annotations

from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field

from .codebook import Codebook
from .corpus import Corpus
from .exceptions import (
    IntegrityError,
    PermanentProviderError,
    ResponseParseError,
    ResponseSchemaError,
    TransientProviderError,
)
from .gateway import CompletionRequest, DecodingConfig, Provider
from .prompts import (
    DEFAULT_TEMPLATES,
    CritiqueMode,
    Decision,
    PromptText,
    TemplateSet,
    parse_annotation_response,
    parse_critique_response,
    render_critic,
    render_stage_one,
)
from .sampling import seeded_sample
from .store import (
    NEGATIVE,
    S1,
    S2,
    CallRecord,
    CritiqueVerdict,
    FailureRecord,
    FinalLabel,
    Key,
    Provenance,
    RunStore,
    StageOneAnnotation,
    request_digest,
)

REASK_SUFFIX = "\n\nRespond with only the JSON object."


@dataclass
class AskOutcome:
    """What one key's provider conversation produced."""

    calls: list[tuple[str, int, float]] = field(default_factory=list)  # digest, attempts, latency
    value: object | None = None
    reason: str = ""
    detail: str = ""


def _ask_and_parse(provider: Provider, prompt: PromptText, config: DecodingConfig, parser) -> AskOutcome:
    """One logical ask with a single re-ask on malformed output."""
    outcome = AskOutcome()
    attempt_prompts = [prompt]
    for index, current in enumerate(attempt_prompts):
        request = CompletionRequest(prompt=current, config=config)
        digest = request_digest(current.text, "")
        try:
            result = provider.complete(request)
        except (TransientProviderError, PermanentProviderError) as exc:
            outcome.calls.append((digest, getattr(exc, "attempts", provider.retry.attempts), 0.0))
            outcome.reason = "provider_error"
            outcome.detail = str(exc)
            return outcome
        outcome.calls.append((digest, result.attempt_count, result.latency))
        try:
            outcome.value = parser(result.raw_text)
            return outcome
        except (ResponseParseError, ResponseSchemaError) as exc:
            outcome.reason = "parse_error"
            outcome.detail = str(exc)
            if index == 0:
                attempt_prompts.append(
                    PromptText(
                        text=current.text + REASK_SUFFIX,
                        stage=current.stage,
                        code_id=current.code_id,
                        passage_id=current.passage_id,
                    )
                )
    return outcome


def _run_items(provider, items, work, on_success, stage, store, concurrency):
    """Run work items concurrently; drain and journal in submission order."""
    with ThreadPoolExecutor(max_workers=max(1, concurrency)) as pool:
        futures = [(item, pool.submit(work, item)) for item in items]
        for item, future in futures:
            passage_id, code_id = item[0].id, item[1].code_id
            outcome = future.result()
            for digest, attempts, latency in outcome.calls:
                store.append_call(
                    CallRecord(
                        stage=stage,
                        passage_id=passage_id,
                        code_id=code_id,
                        request_digest=digest,
                        attempt_count=attempts,
                        latency=latency,
                    )
                )
            if outcome.value is not None:
                on_success(item, outcome.value)
            else:
                store.append_failure(
                    FailureRecord(
                        stage=stage,
                        passage_id=passage_id,
                        code_id=code_id,
                        reason=outcome.reason,
                        detail=outcome.detail,
                        created_at=store.clock(),
                    )
                )


def plan_stage_one(corpus: Corpus, cb: Codebook, store: RunStore) -> list[tuple]:
    """Pending (passage, code) pairs; completed keys are skipped, failed retried."""
    return [
        (p, c)
        for p in corpus
        for c in cb.codes
        if (p.id, c.code_id) not in store.annotations
    ]


def run_stage_one(
    corpus: Corpus,
    cb: Codebook,
    provider: Provider,
    store: RunStore,
    config: DecodingConfig,
    concurrency: int = 8,
    templates: TemplateSet = DEFAULT_TEMPLATES,
) -> RunStore:
    pending = plan_stage_one(corpus, cb, store)

    def work(item):
        passage, code = item
        prompt = render_stage_one(code, passage, version=cb.version, templates=templates)
        return _ask_and_parse(provider, prompt, config, parse_annotation_response)

    def on_success(item, response):
        passage, code = item
        store.append_annotation(
            StageOneAnnotation(
                passage_id=passage.id,
                code_id=code.code_id,
                label=response.label,
                rationale=response.rationale,
                model_id=config.model_id,
                config_digest=store.config_digest,
                created_at=store.clock(),
            )
        )

    _run_items(provider, pending, work, on_success, S1, store, concurrency)
    return store


def stage_one_complete(store: RunStore, corpus: Corpus, cb: Codebook) -> bool:
    """Every (passage, code) key is annotated or recorded as failed."""
    failed = store.failed_keys()
    for p in corpus:
        for c in cb.codes:
            key = (p.id, c.code_id)
            if key not in store.annotations and key not in failed:
                return False
    return True


def _require_stage_one(store: RunStore, corpus: Corpus, cb: Codebook) -> None:
    if not stage_one_complete(store, corpus, cb):
        raise IntegrityError("stage one is not complete for this corpus and codebook")


def _critique_items(store, corpus, cb, annotations, mode):
    items = []
    for ann in annotations:
        if store.verdict_for(ann.passage_id, ann.code_id, mode) is not None:
            continue
        items.append((corpus.get(ann.passage_id), cb.code(ann.code_id), ann))
    return items


def _run_critique(store, corpus, cb, provider, config, annotations, mode, stage, concurrency, templates):
    pending = _critique_items(store, corpus, cb, annotations, mode)

    def work(item):
        passage, code, ann = item
        prompt = render_critic(code, passage, ann, mode=mode, version=cb.version, templates=templates)
        return _ask_and_parse(provider, prompt, config, parse_critique_response)

    def on_success(item, response):
        passage, code, _ = item
        store.append_verdict(
            CritiqueVerdict(
                passage_id=passage.id,
                code_id=code.code_id,
                decision=response.decision,
                error_classes=response.error_classes,
                analysis=response.analysis,
                mode=mode,
            )
        )

    _run_items(provider, pending, work, on_success, stage, store, concurrency)


def plan_stage_two(store: RunStore, corpus: Corpus, cb: Codebook) -> list[tuple]:
    return _critique_items(store, corpus, cb, store.positives(), CritiqueMode.POSITIVE)


def run_stage_two(
    store: RunStore,
    corpus: Corpus,
    cb: Codebook,
    provider: Provider,
    config: DecodingConfig,
    concurrency: int = 8,
    templates: TemplateSet = DEFAULT_TEMPLATES,
) -> RunStore:
    """Critique every stage-one positive; stage-one negatives cost nothing."""
    _require_stage_one(store, corpus, cb)
    _run_critique(
        store, corpus, cb, provider, config,
        store.positives(), CritiqueMode.POSITIVE, S2, concurrency, templates,
    )
    return store


def run_negative_critique(
    store: RunStore,
    corpus: Corpus,
    cb: Codebook,
    provider: Provider,
    config: DecodingConfig,
    sample_n: int | None = None,
    seed: int = 0,
    concurrency: int = 8,
    templates: TemplateSet = DEFAULT_TEMPLATES,
) -> RunStore:
    """Critique stage-one negatives under the flipped sufficiency rule.

    ``sample_n`` limits the pass to a seeded sample per code; a veto here
    promotes the key to positive at finalize time.
    """
    _require_stage_one(store, corpus, cb)
    selected = []
    for code in cb.codes:
        pool = sorted(store.negatives(code.code_id), key=lambda a: a.passage_id)
        if sample_n is not None and sample_n < len(pool):
            pool = seeded_sample(pool, sample_n, seed)
        selected.extend(pool)
    _run_critique(
        store, corpus, cb, provider, config,
        selected, CritiqueMode.NEGATIVE, NEGATIVE, concurrency, templates,
    )
    return store


def finalize(store: RunStore) -> tuple[list[FinalLabel], list[Key]]:
    """Assemble final labels; failed keys are excluded and returned.

    Stage-one negatives stay negative unless a negative-critique verdict
    promoted them; positives follow the critic's confirm/veto.
    """
    failed = store.failed_keys()
    labels: list[FinalLabel] = []
    excluded: list[Key] = sorted(failed)
    for key, ann in store.annotations.items():
        if key in failed:
            continue
        if ann.label:
            verdict = store.verdict_for(ann.passage_id, ann.code_id, CritiqueMode.POSITIVE)
            if verdict is None:
                raise IntegrityError(f"stage-one positive {key} has no critique verdict")
            if verdict.decision is Decision.CONFIRM:
                labels.append(FinalLabel(*key, label=True, provenance=Provenance.S2_CONFIRMED))
            else:
                labels.append(FinalLabel(*key, label=False, provenance=Provenance.S2_VETOED))
        else:
            verdict = store.verdict_for(ann.passage_id, ann.code_id, CritiqueMode.NEGATIVE)
            if verdict is not None and verdict.decision is Decision.VETO:
                labels.append(FinalLabel(*key, label=True, provenance=Provenance.S2_PROMOTED))
            else:
                labels.append(FinalLabel(*key, label=False, provenance=Provenance.S1_NEGATIVE))
    for label in labels:
        store.append_final(label)
    return labels, excluded
