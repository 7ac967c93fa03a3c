"""Append-only run store: journaled annotations, verdicts, finals, failures.

One directory per run:

    run.json        config digest and run id
    s1.jsonl        stage-one annotations
    s2.jsonl        critique verdicts (both modes)
    final.jsonl     final labels
    failures.jsonl  keys that failed a stage (and why)
    calls.jsonl     one row per logical provider call

Journals are append-only; re-running a completed key is a no-op. A failure
record is superseded once the same key later succeeds at the same stage, so
resuming a run retries failed keys without rewriting history. All
timestamps are UTC ISO-8601.
"""

from __future__ import annotations

import hashlib
import json
from dataclasses import dataclass
from datetime import datetime, timedelta, timezone
from enum import Enum
from pathlib import Path
from typing import Callable, Iterator

from .exceptions import IntegrityError, ValidationError
from .prompts import CritiqueMode, Decision

Clock = Callable[[], str]

S1 = "s1"
S2 = "s2"
NEGATIVE = "negative_critique"
_STAGES = (S1, S2, NEGATIVE)


def system_clock() -> str:
    return datetime.now(timezone.utc).strftime("%Y-%m-%dT%H:%M:%SZ")


def make_tick_clock(start: str = "2025-01-01T00:00:00Z", step_seconds: int = 1) -> Clock:
    """Deterministic clock for scripted runs: advances one step per call."""
    base = datetime.strptime(start, "%Y-%m-%dT%H:%M:%SZ").replace(tzinfo=timezone.utc)
    state = {"n": 0}

    def tick() -> str:
        stamp = base + timedelta(seconds=state["n"] * step_seconds)
        state["n"] += 1
        return stamp.strftime("%Y-%m-%dT%H:%M:%SZ")

    return tick


class Provenance(str, Enum):
    S1_NEGATIVE = "s1_negative"
    S2_CONFIRMED = "s2_confirmed"
    S2_VETOED = "s2_vetoed"
    S2_PROMOTED = "s2_promoted"


@dataclass(frozen=True)
class StageOneAnnotation:
    passage_id: str
    code_id: str
    label: bool
    rationale: str
    model_id: str
    config_digest: str
    created_at: str

    def __post_init__(self) -> None:
        if self.label and not self.rationale.strip():
            raise ValidationError(
                f"positive annotation ({self.passage_id}, {self.code_id}) lacks a rationale"
            )


@dataclass(frozen=True)
class CritiqueVerdict:
    passage_id: str
    code_id: str
    decision: Decision
    error_classes: frozenset[str]
    analysis: str
    mode: CritiqueMode

    def __post_init__(self) -> None:
        if self.decision is Decision.VETO and not self.error_classes:
            raise ValidationError(
                f"veto without error classes for ({self.passage_id}, {self.code_id})"
            )


@dataclass(frozen=True)
class FinalLabel:
    passage_id: str
    code_id: str
    label: bool
    provenance: Provenance


@dataclass(frozen=True)
class FailureRecord:
    stage: str
    passage_id: str
    code_id: str
    reason: str
    detail: str
    created_at: str


@dataclass(frozen=True)
class CallRecord:
    stage: str
    passage_id: str
    code_id: str
    request_digest: str
    attempt_count: int
    latency: float


def _dumps(record: dict) -> str:
    return json.dumps(record, sort_keys=True, ensure_ascii=False)


def request_digest(prompt_text: str, config_digest: str) -> str:
    return hashlib.sha256(f"{config_digest}\n{prompt_text}".encode("utf-8")).hexdigest()[:16]


def config_digest_of(config: dict) -> str:
    return hashlib.sha256(_dumps(config).encode("utf-8")).hexdigest()


Key = tuple[str, str]


class RunStore:
    """Journal-backed state for one pipeline run."""

    def __init__(self, root: str | Path, run_id: str, config_digest: str, clock: Clock) -> None:
        self.root = Path(root)
        self.run_id = run_id
        self.config_digest = config_digest
        self.clock = clock
        self.annotations: dict[Key, StageOneAnnotation] = {}
        self.verdicts: dict[tuple[str, str, str], CritiqueVerdict] = {}
        self.final_labels: dict[Key, FinalLabel] = {}
        self.failures: list[FailureRecord] = []
        self.calls: list[CallRecord] = []

    # -- lifecycle ---------------------------------------------------------

    @classmethod
    def open(cls, root: str | Path, config_digest: str, clock: Clock = system_clock) -> "RunStore":
        """Create a new store, or resume an existing one with the same digest."""
        root = Path(root)
        meta_path = root / "run.json"
        if meta_path.exists():
            meta = json.loads(meta_path.read_text(encoding="utf-8"))
            if meta["config_digest"] != config_digest:
                raise IntegrityError(
                    f"store at {root} was created with a different configuration "
                    f"(digest {meta['config_digest'][:12]}... != {config_digest[:12]}...)"
                )
            store = cls(root, meta["run_id"], config_digest, clock)
            store._load()
            return store
        root.mkdir(parents=True, exist_ok=True)
        run_id = f"run-{config_digest[:12]}"
        meta = {"config_digest": config_digest, "created_at": clock(), "run_id": run_id}
        meta_path.write_text(_dumps(meta) + "\n", encoding="utf-8")
        return cls(root, run_id, config_digest, clock)

    @classmethod
    def open_existing(cls, root: str | Path, clock: Clock = system_clock) -> "RunStore":
        """Open an existing store without knowing its configuration."""
        root = Path(root)
        meta_path = root / "run.json"
        if not meta_path.exists():
            raise ValidationError(f"no run store at {root}")
        meta = json.loads(meta_path.read_text(encoding="utf-8"))
        store = cls(root, meta["run_id"], meta["config_digest"], clock)
        store._load()
        return store

    def _lines(self, name: str) -> Iterator[dict]:
        path = self.root / name
        if not path.exists():
            return
        for line in path.read_text(encoding="utf-8").splitlines():
            if line.strip():
                yield json.loads(line)

    def _load(self) -> None:
        for r in self._lines("s1.jsonl"):
            ann = StageOneAnnotation(**r)
            self.annotations[(ann.passage_id, ann.code_id)] = ann
        for r in self._lines("s2.jsonl"):
            verdict = CritiqueVerdict(
                passage_id=r["passage_id"],
                code_id=r["code_id"],
                decision=Decision(r["decision"]),
                error_classes=frozenset(r["error_classes"]),
                analysis=r["analysis"],
                mode=CritiqueMode(r["mode"]),
            )
            self.verdicts[(verdict.passage_id, verdict.code_id, verdict.mode.value)] = verdict
        for r in self._lines("final.jsonl"):
            label = FinalLabel(
                passage_id=r["passage_id"],
                code_id=r["code_id"],
                label=r["label"],
                provenance=Provenance(r["provenance"]),
            )
            self.final_labels[(label.passage_id, label.code_id)] = label
        for r in self._lines("failures.jsonl"):
            self.failures.append(FailureRecord(**r))
        for r in self._lines("calls.jsonl"):
            self.calls.append(CallRecord(**r))

    def _append(self, name: str, record: dict) -> None:
        with (self.root / name).open("a", encoding="utf-8") as fh:
            fh.write(_dumps(record) + "\n")

    # -- appends -----------------------------------------------------------

    def append_annotation(self, ann: StageOneAnnotation) -> bool:
        key = (ann.passage_id, ann.code_id)
        existing = self.annotations.get(key)
        if existing is not None:
            if existing == ann:
                return False
            raise IntegrityError(f"conflicting annotation for key {key}")
        self.annotations[key] = ann
        self._append(
            "s1.jsonl",
            {
                "passage_id": ann.passage_id,
                "code_id": ann.code_id,
                "label": ann.label,
                "rationale": ann.rationale,
                "model_id": ann.model_id,
                "config_digest": ann.config_digest,
                "created_at": ann.created_at,
            },
        )
        return True

    def append_verdict(self, verdict: CritiqueVerdict) -> bool:
        key = (verdict.passage_id, verdict.code_id, verdict.mode.value)
        existing = self.verdicts.get(key)
        if existing is not None:
            if existing == verdict:
                return False
            raise IntegrityError(f"conflicting verdict for key {key}")
        if verdict.mode is CritiqueMode.POSITIVE:
            ann = self.annotations.get((verdict.passage_id, verdict.code_id))
            if ann is None or not ann.label:
                raise IntegrityError(
                    f"positive-critique verdict for a key without a positive annotation: "
                    f"({verdict.passage_id}, {verdict.code_id})"
                )
        self.verdicts[key] = verdict
        self._append(
            "s2.jsonl",
            {
                "passage_id": verdict.passage_id,
                "code_id": verdict.code_id,
                "decision": verdict.decision.value,
                "error_classes": sorted(verdict.error_classes),
                "analysis": verdict.analysis,
                "mode": verdict.mode.value,
            },
        )
        return True

    def append_final(self, label: FinalLabel) -> bool:
        key = (label.passage_id, label.code_id)
        existing = self.final_labels.get(key)
        if existing is not None:
            if existing == label:
                return False
            raise IntegrityError(f"conflicting final label for key {key}")
        self.final_labels[key] = label
        self._append(
            "final.jsonl",
            {
                "passage_id": label.passage_id,
                "code_id": label.code_id,
                "label": label.label,
                "provenance": label.provenance.value,
            },
        )
        return True

    def append_failure(self, failure: FailureRecord) -> None:
        if failure.stage not in _STAGES:
            raise ValidationError(f"unknown stage {failure.stage!r}")
        self.failures.append(failure)
        self._append(
            "failures.jsonl",
            {
                "stage": failure.stage,
                "passage_id": failure.passage_id,
                "code_id": failure.code_id,
                "reason": failure.reason,
                "detail": failure.detail,
                "created_at": failure.created_at,
            },
        )

    def append_call(self, call: CallRecord) -> None:
        self.calls.append(call)
        self._append(
            "calls.jsonl",
            {
                "stage": call.stage,
                "passage_id": call.passage_id,
                "code_id": call.code_id,
                "request_digest": call.request_digest,
                "attempt_count": call.attempt_count,
                "latency": call.latency,
            },
        )

    # -- queries -----------------------------------------------------------

    def call_count(self, stage: str) -> int:
        """Raw provider calls for a stage, retries included."""
        return sum(c.attempt_count for c in self.calls if c.stage == stage)

    def positives(self, code_id: str | None = None) -> list[StageOneAnnotation]:
        return [
            a
            for a in self.annotations.values()
            if a.label and (code_id is None or a.code_id == code_id)
        ]

    def negatives(self, code_id: str | None = None) -> list[StageOneAnnotation]:
        return [
            a
            for a in self.annotations.values()
            if not a.label and (code_id is None or a.code_id == code_id)
        ]

    def verdict_for(self, passage_id: str, code_id: str, mode: CritiqueMode) -> CritiqueVerdict | None:
        return self.verdicts.get((passage_id, code_id, mode.value))

    def effective_failures(self) -> dict[tuple[str, str, str], FailureRecord]:
        """Failures not superseded by a later success at the same stage."""
        out: dict[tuple[str, str, str], FailureRecord] = {}
        for f in self.failures:
            key = (f.passage_id, f.code_id)
            if f.stage == S1 and key in self.annotations:
                continue
            if f.stage == S2 and (*key, CritiqueMode.POSITIVE.value) in self.verdicts:
                continue
            if f.stage == NEGATIVE and (*key, CritiqueMode.NEGATIVE.value) in self.verdicts:
                continue
            out[(f.stage, f.passage_id, f.code_id)] = f
        return out

    def failed_keys(self) -> set[Key]:
        return {(f.passage_id, f.code_id) for f in self.effective_failures().values()}
