"""Codebooks adapted for LLM annotation.

Each code carries a definition, sufficiency factors, exclusion clauses, and
an optional critic addendum -- a short per-code clause the second-stage
critic applies against that code's recurrent failure mode. Addenda live in
the codebook, not the prompt templates, so revising a code never requires a
code change.

The package ships a six-code fixture for Apache Software Foundation project
evaluation discussions (``load_default_codebook``). Its ``policy_compliance``
code also circulates under the longer title "Incubator/Apache Policy
Compliance"; the fixture uses the short title with the same id.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

from .exceptions import ValidationError

_FIXTURE_RESOURCE = "asf_codebook.json"


@dataclass(frozen=True)
class CodeDefinition:
    code_id: str
    title: str
    definition: str
    factors: tuple[str, ...] = ()
    exclusions: tuple[str, ...] = ()
    critic_addendum: str | None = None


@dataclass(frozen=True)
class Codebook:
    version: str
    codes: tuple[CodeDefinition, ...]

    def code(self, code_id: str) -> CodeDefinition:
        for c in self.codes:
            if c.code_id == code_id:
                return c
        raise KeyError(code_id)

    def code_ids(self) -> list[str]:
        return [c.code_id for c in self.codes]


def validate_codebook(cb: Codebook) -> list[str]:
    """Report invariant violations; an empty list means the codebook is valid."""
    violations: list[str] = []
    if not cb.codes:
        violations.append("codebook has no codes")
    if not cb.version:
        violations.append("codebook version is empty")
    seen: set[str] = set()
    for c in cb.codes:
        if not c.code_id:
            violations.append("a code has an empty code_id")
            continue
        if c.code_id in seen:
            violations.append(f"duplicate code_id {c.code_id!r}")
        seen.add(c.code_id)
        if not c.definition.strip():
            violations.append(f"code {c.code_id!r} has an empty definition")
        if c.critic_addendum is not None and not c.critic_addendum.strip():
            violations.append(f"code {c.code_id!r} has a blank critic addendum")
    return violations


def _code_from_record(record: dict, where: str) -> CodeDefinition:
    for required in ("code_id", "title", "definition"):
        if required not in record:
            raise ValidationError(f"{where}: code record missing field {required!r}")
    return CodeDefinition(
        code_id=record["code_id"],
        title=record["title"],
        definition=record["definition"],
        factors=tuple(record.get("factors", ())),
        exclusions=tuple(record.get("exclusions", ())),
        critic_addendum=record.get("critic_addendum"),
    )


def parse_codebook(text: str, where: str = "codebook") -> Codebook:
    """Parse and validate codebook JSON; raises on any violation."""
    try:
        payload = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ValidationError(f"{where}: invalid JSON ({exc.msg})") from exc
    if not isinstance(payload, dict) or "codes" not in payload:
        raise ValidationError(f"{where}: expected an object with a 'codes' array")
    cb = Codebook(
        version=str(payload.get("version", "")),
        codes=tuple(_code_from_record(r, where) for r in payload["codes"]),
    )
    violations = validate_codebook(cb)
    if violations:
        raise ValidationError(f"{where}: " + "; ".join(violations))
    return cb


def load_codebook(path: str | Path) -> Codebook:
    path = Path(path)
    return parse_codebook(path.read_text(encoding="utf-8"), where=path.name)


def dumps_codebook(cb: Codebook) -> str:
    """Canonical serialization; ``load_codebook`` round-trips it byte-for-byte."""
    codes = []
    for c in cb.codes:
        record: dict = {
            "code_id": c.code_id,
            "title": c.title,
            "definition": c.definition,
            "factors": list(c.factors),
            "exclusions": list(c.exclusions),
        }
        if c.critic_addendum is not None:
            record["critic_addendum"] = c.critic_addendum
        codes.append(record)
    return json.dumps({"version": cb.version, "codes": codes}, indent=2, ensure_ascii=False) + "\n"


def dump_codebook(cb: Codebook, path: str | Path) -> None:
    Path(path).write_text(dumps_codebook(cb), encoding="utf-8")


def default_codebook_text() -> str:
    """Raw bytes of the shipped six-code fixture, as text."""
    return (
        resources.files("critic_loop").joinpath("data").joinpath(_FIXTURE_RESOURCE).read_text("utf-8")
    )


def load_default_codebook() -> Codebook:
    return parse_codebook(default_codebook_text(), where=_FIXTURE_RESOURCE)
