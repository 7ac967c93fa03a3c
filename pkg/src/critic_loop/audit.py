"""Human audit of stage-one predicted positives.

A batch is a seeded, uniform, without-replacement sample from one code's
positive pool. Raters judge whether each passage truly satisfies the code
definition, tagging invalid items with one or both error classes
(relevance_argument / incorrect_interpretation). Judgments live in an
append-only journal; re-submission by the same rater overwrites the
effective judgment while history is retained.

The same batches double as the critic's validation set: ``critic_agreement``
scores the critic's vetoes against human validity with "human says invalid"
as the positive class.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable, Mapping

from .exceptions import IntegrityError, ValidationError
from .metrics import AgreementMetrics, basic_metrics, confusion
from .prompts import ERROR_CLASSES, INCORRECT_INTERPRETATION, RELEVANCE_ARGUMENT, Decision
from .sampling import seeded_sample
from .store import RunStore

BASIS_OF_JUDGMENT_NOTICE = (
    "Judge from the passage against the code definition. The model rationale "
    "is shown only to help locate candidate spans and classify errors; it is "
    "not evidence."
)

_RATE_EPSILON = 1e-9


@dataclass(frozen=True)
class AuditItem:
    passage_id: str
    rationale: str


@dataclass(frozen=True)
class AuditBatch:
    batch_id: str
    code_id: str
    items: tuple[AuditItem, ...]
    seed: int
    sampled_from: str

    def passage_ids(self) -> list[str]:
        return [i.passage_id for i in self.items]


@dataclass(frozen=True)
class AuditJudgment:
    batch_id: str
    passage_id: str
    code_id: str
    valid: bool
    error_classes: frozenset[str] = frozenset()
    notes: str = ""
    rater_id: str = "default"
    created_at: str = ""

    def __post_init__(self) -> None:
        unknown = self.error_classes - ERROR_CLASSES
        if unknown:
            raise ValidationError(f"unknown error classes: {sorted(unknown)}")
        if self.valid and self.error_classes:
            raise ValidationError("a valid judgment must not carry error classes")
        if not self.valid and not self.error_classes:
            raise ValidationError("an invalid judgment requires at least one error class")


@dataclass(frozen=True)
class ErrorRateRow:
    """Per-code error rates over judged items.

    Classes may co-occur on one judgment, so the total (union) rate is
    bounded by max(md, mi) below and min(1, md + mi) above.
    """

    code_id: str
    md_rate: float
    mi_rate: float
    total_rate: float
    n: int

    def __post_init__(self) -> None:
        for name in ("md_rate", "mi_rate", "total_rate"):
            rate = getattr(self, name)
            if not 0.0 <= rate <= 1.0:
                raise ValidationError(f"{name} out of [0, 1]: {rate}")
        low = max(self.md_rate, self.mi_rate)
        high = min(1.0, self.md_rate + self.mi_rate)
        if not (low - _RATE_EPSILON <= self.total_rate <= high + _RATE_EPSILON):
            raise ValidationError(
                f"total_rate {self.total_rate} outside [{low}, {high}] for {self.code_id}"
            )


def sample_positives(store: RunStore, code_id: str, n: int, seed: int) -> AuditBatch:
    """Seeded uniform sample (without replacement) of a code's positive pool.

    A pool smaller than ``n`` is returned whole, with a warning.
    """
    if n <= 0:
        raise ValidationError("sample size must be positive")
    pool = sorted(store.positives(code_id), key=lambda a: a.passage_id)
    if not pool:
        raise ValidationError(f"no stage-one positives for code {code_id!r}")
    if len(pool) < n:
        warnings.warn(
            f"positive pool for {code_id!r} has only {len(pool)} items; "
            f"returning all of them",
            stacklevel=2,
        )
        chosen = pool
    else:
        chosen = seeded_sample(pool, n, seed)
    items = tuple(AuditItem(passage_id=a.passage_id, rationale=a.rationale) for a in chosen)
    return AuditBatch(
        batch_id=f"{code_id}-seed{seed}-n{n}",
        code_id=code_id,
        items=items,
        seed=seed,
        sampled_from=store.run_id,
    )


def batch_to_dict(batch: AuditBatch) -> dict:
    return {
        "batch_id": batch.batch_id,
        "code_id": batch.code_id,
        "seed": batch.seed,
        "sampled_from": batch.sampled_from,
        "items": [{"passage_id": i.passage_id, "rationale": i.rationale} for i in batch.items],
    }


def write_batch(batch: AuditBatch, path: str | Path) -> None:
    Path(path).write_text(
        json.dumps(batch_to_dict(batch), indent=2, ensure_ascii=False, sort_keys=True) + "\n",
        encoding="utf-8",
    )


def load_batch(path: str | Path) -> AuditBatch:
    payload = json.loads(Path(path).read_text(encoding="utf-8"))
    return AuditBatch(
        batch_id=payload["batch_id"],
        code_id=payload["code_id"],
        seed=payload["seed"],
        sampled_from=payload["sampled_from"],
        items=tuple(AuditItem(**i) for i in payload["items"]),
    )


class JudgmentJournal:
    """Append-only judgment log; the effective view keeps the latest
    judgment per (batch, passage, rater)."""

    def __init__(self, path: str | Path) -> None:
        self.path = Path(path)
        self._entries: list[AuditJudgment] = []
        if self.path.exists():
            for line in self.path.read_text(encoding="utf-8").splitlines():
                if line.strip():
                    self._entries.append(_judgment_from_dict(json.loads(line)))

    def append(self, judgment: AuditJudgment) -> None:
        self._entries.append(judgment)
        self.path.parent.mkdir(parents=True, exist_ok=True)
        with self.path.open("a", encoding="utf-8") as fh:
            fh.write(json.dumps(judgment_to_dict(judgment), sort_keys=True, ensure_ascii=False) + "\n")

    def entries(self) -> list[AuditJudgment]:
        return list(self._entries)

    def effective(self) -> dict[tuple[str, str, str], AuditJudgment]:
        out: dict[tuple[str, str, str], AuditJudgment] = {}
        for j in self._entries:
            out[(j.batch_id, j.passage_id, j.rater_id)] = j
        return out

    def history(self, batch_id: str, passage_id: str, rater_id: str) -> list[AuditJudgment]:
        return [
            j
            for j in self._entries
            if (j.batch_id, j.passage_id, j.rater_id) == (batch_id, passage_id, rater_id)
        ]


def judgment_to_dict(j: AuditJudgment) -> dict:
    return {
        "batch_id": j.batch_id,
        "passage_id": j.passage_id,
        "code_id": j.code_id,
        "valid": j.valid,
        "error_classes": sorted(j.error_classes),
        "notes": j.notes,
        "rater_id": j.rater_id,
        "created_at": j.created_at,
    }


def _judgment_from_dict(record: dict) -> AuditJudgment:
    return AuditJudgment(
        batch_id=record["batch_id"],
        passage_id=record["passage_id"],
        code_id=record["code_id"],
        valid=record["valid"],
        error_classes=frozenset(record.get("error_classes", ())),
        notes=record.get("notes", ""),
        rater_id=record.get("rater_id", "default"),
        created_at=record.get("created_at", ""),
    )


def load_judgments(path: str | Path) -> list[AuditJudgment]:
    """Effective judgments from a journal file (latest per batch/passage/rater)."""
    return list(JudgmentJournal(path).effective().values())


def record_judgment(journal: JudgmentJournal, batch: AuditBatch, judgment: AuditJudgment) -> AuditJudgment:
    """Validate a judgment against its batch and journal it."""
    if judgment.batch_id != batch.batch_id:
        raise ValidationError(f"judgment batch {judgment.batch_id!r} != {batch.batch_id!r}")
    if judgment.code_id != batch.code_id:
        raise ValidationError(f"judgment code {judgment.code_id!r} != {batch.code_id!r}")
    if judgment.passage_id not in batch.passage_ids():
        raise ValidationError(f"passage {judgment.passage_id!r} is not in batch {batch.batch_id!r}")
    journal.append(judgment)
    return judgment


def error_rate_table(judgments: Iterable[AuditJudgment]) -> list[ErrorRateRow]:
    """Per-code MD/MI/total rates; total is the invalid (union) fraction."""
    by_code: dict[str, list[AuditJudgment]] = {}
    for j in judgments:
        by_code.setdefault(j.code_id, []).append(j)
    rows = []
    for code_id in sorted(by_code):
        group = by_code[code_id]
        n = len(group)
        md = sum(RELEVANCE_ARGUMENT in j.error_classes for j in group)
        mi = sum(INCORRECT_INTERPRETATION in j.error_classes for j in group)
        invalid = sum(not j.valid for j in group)
        rows.append(
            ErrorRateRow(
                code_id=code_id,
                md_rate=md / n,
                mi_rate=mi / n,
                total_rate=invalid / n,
                n=n,
            )
        )
    return rows


@dataclass(frozen=True)
class FpDetectionResult:
    """Critic-vs-human agreement on the false-positive detection task."""

    code_id: str
    n: int
    human_fp_rate: float
    critic_fp_rate: float
    metrics: AgreementMetrics
    critic_class_rates: Mapping[str, float] = field(default_factory=dict)


def critic_agreement(judgments: Iterable[AuditJudgment], verdicts: Iterable) -> FpDetectionResult:
    """Score critic vetoes against human validity over one code's audit.

    "Human says invalid" is the positive class and "critic vetoes" the
    prediction; every judged item must have a verdict.
    """
    judgments = list(judgments)
    if not judgments:
        raise ValidationError("no judgments to score")
    codes = {j.code_id for j in judgments}
    if len(codes) > 1:
        raise ValidationError(f"judgments span multiple codes: {sorted(codes)}")
    code_id = codes.pop()

    verdict_by_key = {}
    for v in verdicts:
        verdict_by_key[(v.passage_id, v.code_id)] = v

    universe = set()
    gold = set()
    predicted = set()
    vetoed_md = 0
    vetoed_mi = 0
    for j in judgments:
        key = (j.passage_id, j.code_id)
        verdict = verdict_by_key.get(key)
        if verdict is None:
            raise IntegrityError(f"judged item {key} has no critique verdict")
        universe.add(key)
        if not j.valid:
            gold.add(key)
        if verdict.decision is Decision.VETO:
            predicted.add(key)
            vetoed_md += RELEVANCE_ARGUMENT in verdict.error_classes
            vetoed_mi += INCORRECT_INTERPRETATION in verdict.error_classes
    n = len(universe)
    counts = confusion(gold, predicted, universe)
    return FpDetectionResult(
        code_id=code_id,
        n=n,
        human_fp_rate=len(gold) / n,
        critic_fp_rate=len(predicted) / n,
        metrics=basic_metrics(counts),
        critic_class_rates={
            RELEVANCE_ARGUMENT: vetoed_md / n,
            INCORRECT_INTERPRETATION: vetoed_mi / n,
        },
    )
