"""Packaged audit fixture: a synthetic 60-item-per-code judgment set whose
per-code error rates and critic-agreement numbers match the published
benchmark for this workflow.

The counts below are over 60 items per code. ``md``/``mi`` count judgments
carrying each error class, ``overlap`` the judgments carrying both; the
invalid total is their union. ``vetoes`` is how many of the 60 the critic
vetoed: ``true_vetoes`` of them human-invalid, the rest human-valid. Codes
with no critic row were never critiqued.
"""

from __future__ import annotations

from dataclasses import dataclass

from .audit import AuditJudgment
from .prompts import (
    INCORRECT_INTERPRETATION,
    RELEVANCE_ARGUMENT,
    CritiqueMode,
    Decision,
)
from .store import CritiqueVerdict

FIXTURE_BATCH_SIZE = 60
FIXTURE_RATER = "auditor-1"
_CREATED_AT = "2025-01-01T00:00:00Z"


@dataclass(frozen=True)
class _HumanCounts:
    md: int
    mi: int
    overlap: int

    @property
    def invalid(self) -> int:
        return self.md + self.mi - self.overlap


@dataclass(frozen=True)
class _CriticCounts:
    vetoes: int
    true_vetoes: int  # vetoes that land on human-invalid items
    md: int           # vetoes tagged relevance_argument
    mi: int           # vetoes tagged incorrect_interpretation


HUMAN_AUDIT_COUNTS: dict[str, _HumanCounts] = {
    "community_vitality": _HumanCounts(md=3, mi=5, overlap=1),
    "corporate_involvement": _HumanCounts(md=4, mi=1, overlap=0),
    "cultural_alignment": _HumanCounts(md=7, mi=12, overlap=3),
    "mentor_engagement": _HumanCounts(md=4, mi=31, overlap=3),
    "policy_compliance": _HumanCounts(md=10, mi=6, overlap=4),
    "technical_and_market": _HumanCounts(md=2, mi=27, overlap=1),
}

CRITIC_COUNTS: dict[str, _CriticCounts] = {
    "cultural_alignment": _CriticCounts(vetoes=15, true_vetoes=12, md=9, mi=6),
    "mentor_engagement": _CriticCounts(vetoes=34, true_vetoes=27, md=1, mi=33),
    "policy_compliance": _CriticCounts(vetoes=7, true_vetoes=7, md=5, mi=2),
    "technical_and_market": _CriticCounts(vetoes=23, true_vetoes=21, md=0, mi=23),
}


def fixture_batch_id(code_id: str) -> str:
    return f"fixture-{code_id}"


def fixture_passage_id(code_id: str, index: int) -> str:
    return f"{code_id}-p{index:03d}"


def _item_classes(counts: _HumanCounts, index: int) -> frozenset[str]:
    """Lay invalid items out first: md-only, then both, then mi-only."""
    md_only = counts.md - counts.overlap
    if index < md_only:
        return frozenset({RELEVANCE_ARGUMENT})
    if index < counts.md:
        return frozenset({RELEVANCE_ARGUMENT, INCORRECT_INTERPRETATION})
    if index < counts.invalid:
        return frozenset({INCORRECT_INTERPRETATION})
    return frozenset()


def human_audit_judgments(code_id: str) -> list[AuditJudgment]:
    """The fixture's 60 human judgments for one code."""
    counts = HUMAN_AUDIT_COUNTS[code_id]
    judgments = []
    for index in range(FIXTURE_BATCH_SIZE):
        classes = _item_classes(counts, index)
        judgments.append(
            AuditJudgment(
                batch_id=fixture_batch_id(code_id),
                passage_id=fixture_passage_id(code_id, index),
                code_id=code_id,
                valid=not classes,
                error_classes=classes,
                rater_id=FIXTURE_RATER,
                created_at=_CREATED_AT,
            )
        )
    return judgments


def all_human_audit_judgments() -> list[AuditJudgment]:
    out = []
    for code_id in HUMAN_AUDIT_COUNTS:
        out.extend(human_audit_judgments(code_id))
    return out


def critic_verdicts(code_id: str) -> list[CritiqueVerdict]:
    """Fixture critic verdicts over the same 60 items.

    True vetoes land on the first invalid items, false vetoes on the first
    valid items; veto error classes fill relevance_argument first.
    """
    if code_id not in CRITIC_COUNTS:
        raise KeyError(f"code {code_id!r} was not critiqued in the fixture")
    human = HUMAN_AUDIT_COUNTS[code_id]
    critic = CRITIC_COUNTS[code_id]
    false_vetoes = critic.vetoes - critic.true_vetoes

    vetoed_indices = list(range(critic.true_vetoes))
    vetoed_indices += list(range(human.invalid, human.invalid + false_vetoes))
    vetoed = set(vetoed_indices)

    verdicts = []
    veto_rank = 0
    for index in range(FIXTURE_BATCH_SIZE):
        if index in vetoed:
            classes = (
                frozenset({RELEVANCE_ARGUMENT})
                if veto_rank < critic.md
                else frozenset({INCORRECT_INTERPRETATION})
            )
            veto_rank += 1
            decision = Decision.VETO
        else:
            classes = frozenset()
            decision = Decision.CONFIRM
        verdicts.append(
            CritiqueVerdict(
                passage_id=fixture_passage_id(code_id, index),
                code_id=code_id,
                decision=decision,
                error_classes=classes,
                analysis="fixture verdict",
                mode=CritiqueMode.POSITIVE,
            )
        )
    return verdicts
