"""Prompt assembly and structured-response parsing.

Templates are plain UTF-8 files with ``{{placeholder}}`` slots, shipped
under ``critic_loop/templates`` and overridable by directory so prompt
iteration never requires a rebuild. Substitution is a single pass over the
template: substituted values are never re-scanned for placeholders.

The critic prompt stacks three layers: task framing, a decision policy
(error taxonomy, application specifications with the sufficiency rule, and
the code's addendum when present), and the input/output contract. The
negative-critique variant flips the sufficiency rule: a stage-one negative
is overturned when any valid justification exists in the passage.

This module is pure; retry policy lives with the pipeline.
"""

from __future__ import annotations

import json
import re
from dataclasses import dataclass
from enum import Enum
from importlib import resources
from pathlib import Path

from .codebook import CodeDefinition
from .corpus import Passage
from .exceptions import ResponseParseError, ResponseSchemaError, ValidationError

RELEVANCE_ARGUMENT = "relevance_argument"
INCORRECT_INTERPRETATION = "incorrect_interpretation"
ERROR_CLASSES = frozenset({RELEVANCE_ARGUMENT, INCORRECT_INTERPRETATION})

_PLACEHOLDER = re.compile(r"\{\{(\w+)\}\}")


class Stage(str, Enum):
    STAGE_ONE = "stage_one"
    STAGE_TWO = "stage_two"


class CritiqueMode(str, Enum):
    POSITIVE = "positive_critique"
    NEGATIVE = "negative_critique"


class Decision(str, Enum):
    CONFIRM = "confirm"
    VETO = "veto"


@dataclass(frozen=True)
class PromptText:
    text: str
    stage: Stage
    code_id: str
    passage_id: str


@dataclass(frozen=True)
class AnnotationResponse:
    label: bool
    rationale: str


@dataclass(frozen=True)
class CritiqueResponse:
    decision: Decision
    error_classes: frozenset[str]
    analysis: str


@dataclass(frozen=True)
class TemplateSet:
    """Resolves named, versioned templates from a directory.

    ``directory=None`` uses the packaged templates.
    """

    directory: Path | None = None
    version: str = "v1"

    def load(self, name: str) -> str:
        filename = f"{name}_{self.version}.txt"
        if self.directory is not None:
            path = Path(self.directory) / filename
            if not path.exists():
                raise ValidationError(f"template not found: {path}")
            return path.read_text(encoding="utf-8")
        ref = resources.files("critic_loop").joinpath("templates").joinpath(filename)
        if not ref.is_file():
            raise ValidationError(f"packaged template not found: {filename}")
        return ref.read_text("utf-8")


DEFAULT_TEMPLATES = TemplateSet()


def fill_template(template: str, values: dict[str, str]) -> str:
    """Substitute each ``{{name}}`` occurrence exactly once."""

    def sub(match: re.Match) -> str:
        name = match.group(1)
        if name not in values:
            raise ValidationError(f"template references unknown placeholder {{{{{name}}}}}")
        return values[name]

    return _PLACEHOLDER.sub(sub, template)


def _bulleted(header: str, items: tuple[str, ...]) -> str:
    if not items:
        return ""
    lines = "\n".join(f"- {item}" for item in items)
    return f"{header}\n{lines}\n"


def _code_values(code: CodeDefinition, passage: Passage, version: str) -> dict[str, str]:
    return {
        "code_title": code.title,
        "codebook_version": version,
        "definition": code.definition,
        "factors_block": _bulleted("Factors:", code.factors),
        "exclusions_block": _bulleted("Exclusions:", code.exclusions),
        "passage_id": passage.id,
        "passage": passage.body,
    }


def render_stage_one(
    code: CodeDefinition,
    passage: Passage,
    version: str = "",
    templates: TemplateSet = DEFAULT_TEMPLATES,
) -> PromptText:
    """First-pass annotation prompt: definition, factors, exclusions, passage."""
    text = fill_template(templates.load("stage_one"), _code_values(code, passage, version))
    return PromptText(text=text, stage=Stage.STAGE_ONE, code_id=code.code_id, passage_id=passage.id)


def render_critic(
    code: CodeDefinition,
    passage: Passage,
    annotation,
    mode: CritiqueMode = CritiqueMode.POSITIVE,
    version: str = "",
    templates: TemplateSet = DEFAULT_TEMPLATES,
) -> PromptText:
    """Critique prompt over a first-pass annotation.

    Positive mode reviews predicted positives under the sufficiency rule;
    negative mode reviews predicted negatives under the flipped rule.
    """
    if mode is CritiqueMode.POSITIVE and not annotation.label:
        raise ValidationError(
            f"positive critique requires a positive annotation for "
            f"({passage.id}, {code.code_id})"
        )
    if mode is CritiqueMode.NEGATIVE and annotation.label:
        raise ValidationError(
            f"negative critique requires a negative annotation for "
            f"({passage.id}, {code.code_id})"
        )
    values = _code_values(code, passage, version)
    values["rationale"] = annotation.rationale
    if code.critic_addendum:
        values["addendum_block"] = f"\nCode-specific addendum:\n{code.critic_addendum}\n"
    else:
        values["addendum_block"] = ""
    name = "critic_positive" if mode is CritiqueMode.POSITIVE else "critic_negative"
    text = fill_template(templates.load(name), values)
    return PromptText(text=text, stage=Stage.STAGE_TWO, code_id=code.code_id, passage_id=passage.id)


def extract_first_json_object(raw: str) -> dict:
    """Return the first syntactically complete JSON object in ``raw``.

    Surrounding prose is ignored; models often wrap the object in
    commentary.
    """
    decoder = json.JSONDecoder()
    index = raw.find("{")
    while index != -1:
        try:
            value, _ = decoder.raw_decode(raw, index)
        except json.JSONDecodeError:
            index = raw.find("{", index + 1)
            continue
        if isinstance(value, dict):
            return value
        index = raw.find("{", index + 1)
    raise ResponseParseError("no JSON object found in response")


def parse_annotation_response(raw: str) -> AnnotationResponse:
    """Parse the stage-one contract: ``label`` boolean plus ``rationale``."""
    obj = extract_first_json_object(raw)
    label = obj.get("label")
    if not isinstance(label, bool):
        raise ResponseSchemaError("annotation response must carry a boolean 'label'")
    rationale = obj.get("rationale", "")
    if not isinstance(rationale, str):
        raise ResponseSchemaError("'rationale' must be a string")
    if label and not rationale.strip():
        raise ResponseSchemaError("a positive label requires a nonempty rationale")
    return AnnotationResponse(label=label, rationale=rationale)


def parse_critique_response(raw: str) -> CritiqueResponse:
    """Parse the critique contract and enforce decision/error consistency."""
    obj = extract_first_json_object(raw)
    decision_token = obj.get("decision")
    try:
        decision = Decision(decision_token)
    except ValueError:
        raise ResponseSchemaError(f"unknown decision {decision_token!r}") from None
    errors_field = obj.get("errors", [])
    if not isinstance(errors_field, list):
        raise ResponseSchemaError("'errors' must be a list of error-class tokens")
    error_classes = frozenset(errors_field)
    unknown = error_classes - ERROR_CLASSES
    if unknown:
        raise ResponseSchemaError(f"unknown error classes: {sorted(unknown)}")
    if decision is Decision.VETO and not error_classes:
        raise ResponseSchemaError("a veto requires at least one error class")
    if decision is Decision.CONFIRM and error_classes:
        raise ResponseSchemaError("a confirm must not carry error classes")
    analysis = obj.get("analysis", "")
    if not isinstance(analysis, str):
        raise ResponseSchemaError("'analysis' must be a string")
    return CritiqueResponse(decision=decision, error_classes=error_classes, analysis=analysis)
