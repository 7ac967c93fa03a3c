"""Passage corpora and gold-standard label sets.

Corpus files are UTF-8 line-delimited JSON, one passage per line with at
least ``id`` and ``body``. Gold files carry one ``(passage_id, code_id,
label)`` row per line and are tagged with an evaluation phase at load time.
Both collections are immutable after load.
"""

from __future__ import annotations

import json
import warnings
from dataclasses import dataclass, field
from enum import Enum
from pathlib import Path
from typing import Iterator

from .exceptions import ValidationError


class Phase(str, Enum):
    """Evaluation phase a gold label belongs to."""

    ENRICHED = "enriched"
    AUDIT = "audit"
    NATURAL = "natural"


@dataclass(frozen=True)
class Passage:
    id: str
    body: str
    source: str | None = None
    metadata: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        if not self.id:
            raise ValidationError("passage id must be nonempty")
        if not self.body:
            raise ValidationError(f"passage {self.id!r} has an empty body")

    @property
    def char_count(self) -> int:
        return len(self.body)


@dataclass(frozen=True)
class Corpus:
    name: str
    passages: tuple[Passage, ...]

    def __post_init__(self) -> None:
        seen: set[str] = set()
        for p in self.passages:
            if p.id in seen:
                raise ValidationError(f"duplicate passage id {p.id!r}")
            seen.add(p.id)

    def __len__(self) -> int:
        return len(self.passages)

    def __iter__(self) -> Iterator[Passage]:
        return iter(self.passages)

    def get(self, passage_id: str) -> Passage:
        for p in self.passages:
            if p.id == passage_id:
                return p
        raise KeyError(passage_id)

    def ids(self) -> list[str]:
        return [p.id for p in self.passages]


@dataclass(frozen=True)
class GoldLabel:
    passage_id: str
    code_id: str
    label: bool
    phase: Phase


def ingest(path: str | Path) -> Corpus:
    """Load a corpus file, rejecting bad lines by number.

    Duplicate ids and missing required fields name the offending line;
    records keep file order.
    """
    path = Path(path)
    text = path.read_text(encoding="utf-8")
    passages: list[Passage] = []
    seen: set[str] = set()
    for lineno, line in enumerate(text.splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path.name} line {lineno}: invalid JSON ({exc.msg})") from exc
        for required in ("id", "body"):
            if required not in record or not isinstance(record[required], str) or not record[required]:
                raise ValidationError(f"{path.name} line {lineno}: missing or empty field {required!r}")
        if record["id"] in seen:
            raise ValidationError(f"{path.name} line {lineno}: duplicate passage id {record['id']!r}")
        seen.add(record["id"])
        metadata = record.get("metadata") or {}
        if not isinstance(metadata, dict) or any(
            not isinstance(v, str) for v in metadata.values()
        ):
            raise ValidationError(f"{path.name} line {lineno}: metadata must map strings to strings")
        passages.append(
            Passage(
                id=record["id"],
                body=record["body"],
                source=record.get("source"),
                metadata=dict(metadata),
            )
        )
    if not passages:
        warnings.warn(f"corpus file {path} contained no passages", stacklevel=2)
    return Corpus(name=path.stem, passages=tuple(passages))


def write_corpus(corpus: Corpus, path: str | Path) -> None:
    """Serialize a corpus back to line-delimited JSON (ingest round-trips)."""
    path = Path(path)
    with path.open("w", encoding="utf-8") as fh:
        for p in corpus.passages:
            record: dict = {"id": p.id, "body": p.body}
            if p.source is not None:
                record["source"] = p.source
            if p.metadata:
                record["metadata"] = p.metadata
            fh.write(json.dumps(record, sort_keys=True) + "\n")


def filter_high_content(corpus: Corpus, min_chars: int) -> Corpus:
    """Keep passages with at least ``min_chars`` characters, order preserved."""
    kept = tuple(p for p in corpus.passages if p.char_count >= min_chars)
    if not kept and corpus.passages:
        warnings.warn(
            f"min_chars={min_chars} removed every passage from {corpus.name!r}",
            stacklevel=2,
        )
    return Corpus(name=corpus.name, passages=kept)


def load_gold(path: str | Path, phase: Phase, codebook=None) -> list[GoldLabel]:
    """Load a gold file and tag every row with ``phase``.

    A codebook, when supplied, restricts code ids to known ones.
    """
    path = Path(path)
    known_codes = {c.code_id for c in codebook.codes} if codebook is not None else None
    labels: list[GoldLabel] = []
    seen: set[tuple[str, str]] = set()
    for lineno, line in enumerate(path.read_text(encoding="utf-8").splitlines(), start=1):
        if not line.strip():
            continue
        try:
            record = json.loads(line)
        except json.JSONDecodeError as exc:
            raise ValidationError(f"{path.name} line {lineno}: invalid JSON ({exc.msg})") from exc
        for required in ("passage_id", "code_id", "label"):
            if required not in record:
                raise ValidationError(f"{path.name} line {lineno}: missing field {required!r}")
        if not isinstance(record["label"], bool):
            raise ValidationError(f"{path.name} line {lineno}: label must be a boolean")
        key = (record["passage_id"], record["code_id"])
        if key in seen:
            raise ValidationError(f"{path.name} line {lineno}: duplicate gold key {key!r}")
        seen.add(key)
        if known_codes is not None and record["code_id"] not in known_codes:
            raise ValidationError(f"{path.name} line {lineno}: unknown code id {record['code_id']!r}")
        labels.append(
            GoldLabel(
                passage_id=record["passage_id"],
                code_id=record["code_id"],
                label=record["label"],
                phase=phase,
            )
        )
    return labels
