"""Readers for knowledge-base triple dumps, entity labels, and event seed lists.

All inputs are flat UTF-8 TSV files:

* triples:  ``subject<TAB>property<TAB>object``
* labels:   ``entity_id<TAB>label``
* seeds:    ``event_id<TAB>label[<TAB>popularity[<TAB>date-ISO8601]]``

Loaded indexes are immutable and safe to share between threads.
"""

from __future__ import annotations

import logging
from dataclasses import dataclass, field
from datetime import date
from pathlib import Path
from typing import Iterable

log = logging.getLogger(__name__)


class IngestError(Exception):
    """Fatal input problem: unreadable file or a dump with no usable line."""


@dataclass(frozen=True)
class TripleRecord:
    subject: str
    property: str
    object: str


@dataclass(frozen=True)
class EventSeed:
    event_id: str
    label: str
    popularity: int | None = None
    date: date | None = None


@dataclass(frozen=True)
class TripleIndex:
    """Triples indexed by (subject, property); lookups never fail."""

    by_subject_property: dict[tuple[str, str], tuple[str, ...]]
    labels: dict[str, str] = field(default_factory=dict)
    skipped_lines: int = 0

    def objects(self, subject: str, prop: str) -> tuple[str, ...]:
        return self.by_subject_property.get((subject, prop), ())

    def label(self, entity_id: str) -> str:
        return self.labels.get(entity_id, entity_id)

    def triple_count(self) -> int:
        return sum(len(v) for v in self.by_subject_property.values())

    def with_labels(self, labels: dict[str, str]) -> "TripleIndex":
        return TripleIndex(self.by_subject_property, dict(labels), self.skipped_lines)


def _read_lines(path: str | Path) -> list[str]:
    try:
        text = Path(path).read_text(encoding="utf-8")
    except OSError as exc:
        raise IngestError(f"cannot read {path}: {exc}") from exc
    return text.splitlines()


def load_triples(path: str | Path, allowed_properties: Iterable[str]) -> TripleIndex:
    """Load a triple dump, keeping only triples whose property is allowed.

    Lines that do not have exactly three non-empty tab-separated columns are
    counted and reported; a non-empty file with no well-formed line at all is
    fatal. Duplicate triples collapse to one entry.
    """
    allowed = set(allowed_properties)
    lines = _read_lines(path)
    seen: dict[tuple[str, str], set[str]] = {}
    malformed = 0
    filtered = 0
    wellformed = 0
    for raw in lines:
        if not raw.strip():
            continue
        parts = raw.rstrip("\n").split("\t")
        if len(parts) != 3 or not all(p.strip() for p in parts):
            malformed += 1
            continue
        wellformed += 1
        subject, prop, obj = (p.strip() for p in parts)
        if prop not in allowed:
            filtered += 1
            continue
        seen.setdefault((subject, prop), set()).add(obj)
    nonempty = wellformed + malformed
    if nonempty and wellformed == 0:
        raise IngestError(f"{path}: all {malformed} lines malformed")
    if malformed:
        log.warning("%s: skipped %d malformed line(s)", path, malformed)
    index = {key: tuple(sorted(objs)) for key, objs in seen.items()}
    log.info(
        "%s: %d triple(s) kept, %d filtered by property, %d malformed",
        path, sum(len(v) for v in index.values()), filtered, malformed,
    )
    return TripleIndex(index, {}, malformed)


def load_labels(path: str | Path) -> dict[str, str]:
    """Load an ``entity_id<TAB>label`` file; first label per entity wins."""
    lines = _read_lines(path)
    labels: dict[str, str] = {}
    malformed = 0
    wellformed = 0
    for raw in lines:
        if not raw.strip():
            continue
        parts = raw.rstrip("\n").split("\t")
        if len(parts) < 2 or not parts[0].strip() or not parts[1].strip():
            malformed += 1
            continue
        wellformed += 1
        labels.setdefault(parts[0].strip(), parts[1].strip())
    if wellformed + malformed and wellformed == 0:
        raise IngestError(f"{path}: all {malformed} lines malformed")
    if malformed:
        log.warning("%s: skipped %d malformed label line(s)", path, malformed)
    return labels


def load_event_seeds(path: str | Path) -> list[EventSeed]:
    """Load event seeds; duplicates by event id collapse keeping the first."""
    lines = _read_lines(path)
    seeds: list[EventSeed] = []
    seen: set[str] = set()
    malformed = 0
    wellformed = 0
    for raw in lines:
        if not raw.strip():
            continue
        parts = raw.rstrip("\n").split("\t")
        if len(parts) < 2 or not parts[0].strip() or not parts[1].strip():
            malformed += 1
            continue
        event_id = parts[0].strip()
        label = parts[1].strip()
        popularity: int | None = None
        seed_date: date | None = None
        try:
            if len(parts) > 2 and parts[2].strip():
                popularity = int(parts[2])
                if popularity < 0:
                    raise ValueError("negative popularity")
            if len(parts) > 3 and parts[3].strip():
                seed_date = date.fromisoformat(parts[3].strip())
        except ValueError:
            malformed += 1
            continue
        wellformed += 1
        if event_id in seen:
            continue
        seen.add(event_id)
        seeds.append(EventSeed(event_id, label, popularity, seed_date))
    if wellformed + malformed and wellformed == 0:
        raise IngestError(f"{path}: all {malformed} lines malformed")
    if malformed:
        log.warning("%s: skipped %d malformed seed line(s)", path, malformed)
    return seeds
