"""Evaluation flows over a run store and gold-standard label sets.

Direct evaluation scores a stage against enriched gold on the shared
passage universe. Corrected evaluation targets naturalistic deployment:
prevalence and the stage's positive rate come from the natural sample,
while PPV pools the natural sample's adjudicated positives with audited
predicted positives (unweighted), then the normalized confusion matrix is
reconstructed from the three rates. Keys that failed in the run are
excluded from denominators and reported, never silently counted.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Iterable, Sequence

from .audit import AuditJudgment
from .codebook import Codebook
from .corpus import GoldLabel
from .exceptions import IntegrityError
from .metrics import (
    AgreementMetrics,
    ComparisonRow,
    PrevalenceEstimates,
    ReconstructedConfusion,
    basic_metrics,
    confusion,
    corrected_metrics,
    estimate_prevalence,
    pooled_ppv,
    reconstruct,
    stage_comparison,
)
from .prompts import CritiqueMode, Decision
from .reports import ValidationRow
from .store import RunStore

S1 = "s1"
S2 = "s2"


def _stage_label(store: RunStore, stage: str, passage_id: str, code_id: str) -> bool | None:
    """The stage's label for a key, or None when the key is absent."""
    if stage == S1:
        ann = store.annotations.get((passage_id, code_id))
        return None if ann is None else ann.label
    final = store.final_labels.get((passage_id, code_id))
    return None if final is None else final.label


def _gold_by_code(gold: Iterable[GoldLabel]) -> dict[str, list[GoldLabel]]:
    out: dict[str, list[GoldLabel]] = {}
    for g in gold:
        out.setdefault(g.code_id, []).append(g)
    return out


def direct_eval(
    store: RunStore,
    gold: Sequence[GoldLabel],
    cb: Codebook,
    stage: str,
) -> tuple[list[ValidationRow], list[tuple[str, str]]]:
    """Score a stage directly against gold labels on their universe."""
    failed = store.failed_keys()
    by_code = _gold_by_code(gold)
    rows: list[ValidationRow] = []
    excluded: list[tuple[str, str]] = []
    for code_id in cb.code_ids():
        code_gold = by_code.get(code_id)
        if not code_gold:
            continue
        universe: set = set()
        gold_pos: set = set()
        pred_pos: set = set()
        for g in code_gold:
            key = (g.passage_id, g.code_id)
            if key in failed:
                excluded.append(key)
                continue
            label = _stage_label(store, stage, g.passage_id, g.code_id)
            if label is None:
                raise IntegrityError(f"stage {stage} has no label for gold key {key}")
            universe.add(key)
            if g.label:
                gold_pos.add(key)
            if label:
                pred_pos.add(key)
        if not universe:
            continue
        counts = confusion(gold_pos, pred_pos, universe)
        rows.append(
            ValidationRow(
                code_id=code_id,
                gold_rate=len(gold_pos) / len(universe),
                predicted_rate=len(pred_pos) / len(universe),
                metrics=basic_metrics(counts),
            )
        )
    return rows, excluded


@dataclass(frozen=True)
class CorrectedEval:
    code_id: str
    estimates: PrevalenceEstimates
    reconstruction: ReconstructedConfusion
    metrics: AgreementMetrics
    pool_size: int

    def to_dict(self) -> dict:
        return {
            "code_id": self.code_id,
            "prevalence": self.estimates.prevalence,
            "positive_rate": self.estimates.positive_rate,
            "ppv": self.estimates.ppv,
            "stage": self.estimates.stage,
            "pool_size": self.pool_size,
            "clamped": self.reconstruction.clamped,
            "reconstruction": {
                "tp": self.reconstruction.tp,
                "fp": self.reconstruction.fp,
                "fn": self.reconstruction.fn,
                "tn": self.reconstruction.tn,
            },
            "metrics": self.metrics.to_dict(),
        }


def _audited_validities(
    store: RunStore,
    judgments: Iterable[AuditJudgment],
    code_id: str,
    stage: str,
) -> list[bool]:
    """Validity booleans the audit contributes to a stage's PPV pool.

    Audited items are stage-one positives; for the second stage only the
    critic-confirmed ones remain predicted positive.
    """
    out = []
    for j in judgments:
        if j.code_id != code_id:
            continue
        if stage == S2:
            verdict = store.verdict_for(j.passage_id, j.code_id, CritiqueMode.POSITIVE)
            if verdict is None:
                raise IntegrityError(
                    f"audited item ({j.passage_id}, {j.code_id}) has no critique verdict"
                )
            if verdict.decision is not Decision.CONFIRM:
                continue
        out.append(j.valid)
    return out


def corrected_eval(
    store: RunStore,
    gold: Sequence[GoldLabel],
    cb: Codebook,
    stage: str,
    ppv_judgments: Sequence[AuditJudgment] = (),
) -> tuple[list[CorrectedEval], list[tuple[str, str]]]:
    """Prevalence-corrected metrics per code from the natural sample."""
    failed = store.failed_keys()
    by_code = _gold_by_code(gold)
    rows: list[CorrectedEval] = []
    excluded: list[tuple[str, str]] = []
    for code_id in cb.code_ids():
        code_gold = [g for g in by_code.get(code_id, ())]
        if not code_gold:
            continue
        usable: list[GoldLabel] = []
        for g in code_gold:
            key = (g.passage_id, g.code_id)
            if key in failed:
                excluded.append(key)
            else:
                usable.append(g)
        if not usable:
            continue
        prevalence = estimate_prevalence(usable, code_id)
        natural_validities: list[bool] = []
        positives = 0
        for g in usable:
            label = _stage_label(store, stage, g.passage_id, g.code_id)
            if label is None:
                raise IntegrityError(
                    f"stage {stage} has no label for gold key ({g.passage_id}, {code_id})"
                )
            if label:
                positives += 1
                natural_validities.append(g.label)
        positive_rate = positives / len(usable)
        audited = _audited_validities(store, ppv_judgments, code_id, stage)
        pool = [*natural_validities, *audited]
        if positive_rate == 0.0 and not pool:
            # nothing predicted positive anywhere: PPV is vacuous
            ppv = 0.0
        else:
            ppv = pooled_ppv(natural_validities, audited)
        estimates = PrevalenceEstimates(
            prevalence=prevalence, positive_rate=positive_rate, ppv=ppv, stage=stage
        )
        reconstruction = reconstruct(estimates)
        rows.append(
            CorrectedEval(
                code_id=code_id,
                estimates=estimates,
                reconstruction=reconstruction,
                metrics=corrected_metrics(reconstruction, estimates),
                pool_size=len(pool),
            )
        )
    return rows, excluded


def compare_stages(
    store: RunStore,
    gold: Sequence[GoldLabel],
    cb: Codebook,
    ppv_judgments: Sequence[AuditJudgment] = (),
) -> list[ComparisonRow]:
    """Stage-one vs stage-two corrected metrics, code by code."""
    s1_rows, _ = corrected_eval(store, gold, cb, S1, ppv_judgments)
    s2_rows, _ = corrected_eval(store, gold, cb, S2, ppv_judgments)
    s2_by_code = {r.code_id: r for r in s2_rows}
    rows = []
    for r1 in s1_rows:
        r2 = s2_by_code.get(r1.code_id)
        if r2 is None:
            continue
        rows.append(
            stage_comparison(
                code_id=r1.code_id,
                s1=r1.metrics,
                s2=r2.metrics,
                gold_rate=r1.estimates.prevalence,
            )
        )
    return rows
