"""Aligned-text and JSON report emission.

Four table shapes cover the workflow: per-code audit error rates, critic
false-positive detection agreement, stage-one validation against enriched
gold, and the stage-one/stage-two comparison under empirical prevalence.
Error rates and agreement tables print at 2 decimals; the stage comparison
prints at 4. Fractions are carried at full precision everywhere else;
undefined cells print as ``--``.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Mapping, Sequence

from .audit import ErrorRateRow, FpDetectionResult
from .metrics import AgreementMetrics, ComparisonRow
from .prompts import INCORRECT_INTERPRETATION, RELEVANCE_ARGUMENT

MISSING = "--"


def _fmt(value: float | None, decimals: int, signed: bool = False) -> str:
    if value is None or (isinstance(value, float) and math.isnan(value)):
        return MISSING
    spec = f"{{:+.{decimals}f}}" if signed else f"{{:.{decimals}f}}"
    return spec.format(value)


def _render(headers: list[str], rows: list[list[str]]) -> str:
    widths = [len(h) for h in headers]
    for row in rows:
        for i, cell in enumerate(row):
            widths[i] = max(widths[i], len(cell))
    def line(cells):
        return "  ".join(cell.ljust(widths[i]) for i, cell in enumerate(cells)).rstrip()
    rule = "  ".join("-" * w for w in widths)
    return "\n".join([line(headers), rule] + [line(r) for r in rows]) + "\n"


def _title(code_id: str, titles: Mapping[str, str] | None) -> str:
    return titles.get(code_id, code_id) if titles else code_id


# -- audit error rates -------------------------------------------------------

def render_error_rates(
    human: Sequence[ErrorRateRow],
    llm: Mapping[str, tuple[float, float, float]] | None = None,
    titles: Mapping[str, str] | None = None,
) -> str:
    """Per-code MD/MI/total rates, with critic columns when available."""
    headers = ["Code", "MD", "MI", "Total", "MD (critic)", "MI (critic)", "Total (critic)", "N"]
    rows = []
    for r in human:
        critic = (llm or {}).get(r.code_id)
        rows.append(
            [
                _title(r.code_id, titles),
                _fmt(r.md_rate, 2),
                _fmt(r.mi_rate, 2),
                _fmt(r.total_rate, 2),
                _fmt(critic[0] if critic else None, 2),
                _fmt(critic[1] if critic else None, 2),
                _fmt(critic[2] if critic else None, 2),
                str(r.n),
            ]
        )
    return _render(headers, rows)


def error_rates_to_json(
    human: Sequence[ErrorRateRow],
    llm: Mapping[str, tuple[float, float, float]] | None = None,
) -> dict:
    rows = []
    for r in human:
        critic = (llm or {}).get(r.code_id)
        rows.append(
            {
                "code_id": r.code_id,
                "md_rate": r.md_rate,
                "mi_rate": r.mi_rate,
                "total_rate": r.total_rate,
                "n": r.n,
                "critic": None
                if critic is None
                else {"md_rate": critic[0], "mi_rate": critic[1], "total_rate": critic[2]},
            }
        )
    return {"table": "error_rates", "rows": rows}


def critic_class_rates(result: FpDetectionResult) -> tuple[float, float, float]:
    """(md, mi, total) rates of the critic's vetoes for the table above."""
    return (
        result.critic_class_rates.get(RELEVANCE_ARGUMENT, 0.0),
        result.critic_class_rates.get(INCORRECT_INTERPRETATION, 0.0),
        result.critic_fp_rate,
    )


# -- critic FP-detection agreement -------------------------------------------

def render_fp_detection(
    rows: Sequence[tuple[str, float, FpDetectionResult | None]],
    titles: Mapping[str, str] | None = None,
) -> str:
    """Agreement of critic vetoes with human invalidity, per code.

    ``rows`` pairs each code with its human detected-FP rate and, for
    critiqued codes, the scored result.
    """
    headers = ["Code", "FP (human)", "FP (critic)", "Kappa", "Precision", "Recall", "F1"]
    body = []
    for code_id, human_rate, result in rows:
        m = result.metrics if result else None
        body.append(
            [
                _title(code_id, titles),
                _fmt(human_rate, 2),
                _fmt(result.critic_fp_rate if result else None, 2),
                _fmt(m.kappa if m else None, 2),
                _fmt(m.precision if m else None, 2),
                _fmt(m.recall if m else None, 2),
                _fmt(m.f1 if m else None, 2),
            ]
        )
    return _render(headers, body)


def fp_detection_to_json(rows: Sequence[tuple[str, float, FpDetectionResult | None]]) -> dict:
    out = []
    for code_id, human_rate, result in rows:
        entry: dict = {"code_id": code_id, "human_fp_rate": human_rate}
        if result is not None:
            entry["critic_fp_rate"] = result.critic_fp_rate
            entry["n"] = result.n
            entry["metrics"] = result.metrics.to_dict()
        out.append(entry)
    return {"table": "fp_detection", "rows": out}


# -- validation against enriched gold ----------------------------------------

@dataclass(frozen=True)
class ValidationRow:
    code_id: str
    gold_rate: float
    predicted_rate: float
    metrics: AgreementMetrics


def render_validation(rows: Sequence[ValidationRow], titles: Mapping[str, str] | None = None) -> str:
    headers = ["Code", "Gold rate", "Model rate", "Kappa", "Precision", "Recall", "F1"]
    body = [
        [
            _title(r.code_id, titles),
            _fmt(r.gold_rate, 2),
            _fmt(r.predicted_rate, 2),
            _fmt(r.metrics.kappa, 2),
            _fmt(r.metrics.precision, 2),
            _fmt(r.metrics.recall, 2),
            _fmt(r.metrics.f1, 2),
        ]
        for r in rows
    ]
    return _render(headers, body)


def validation_to_json(rows: Sequence[ValidationRow]) -> dict:
    return {
        "table": "validation",
        "rows": [
            {
                "code_id": r.code_id,
                "gold_rate": r.gold_rate,
                "predicted_rate": r.predicted_rate,
                "metrics": r.metrics.to_dict(),
            }
            for r in rows
        ],
    }


# -- stage comparison under empirical prevalence ------------------------------

def render_stage_comparison(rows: Sequence[ComparisonRow], titles: Mapping[str, str] | None = None) -> str:
    headers = [
        "Code",
        "Gold", "S1", "S2",
        "Kappa S1", "Kappa S2", "dKappa",
        "F1 S1", "F1 S2", "dF1",
    ]
    body = [
        [
            _title(r.code_id, titles),
            _fmt(r.gold_rate, 4),
            _fmt(r.s1_rate, 4),
            _fmt(r.s2_rate, 4),
            _fmt(r.s1_kappa, 4),
            _fmt(r.s2_kappa, 4),
            _fmt(r.delta_kappa, 4, signed=True),
            _fmt(r.s1_f1, 4),
            _fmt(r.s2_f1, 4),
            _fmt(r.delta_f1, 4, signed=True),
        ]
        for r in rows
    ]
    return _render(headers, body)


def stage_comparison_to_json(rows: Sequence[ComparisonRow]) -> dict:
    return {"table": "stage_comparison", "rows": [r.to_dict() for r in rows]}
