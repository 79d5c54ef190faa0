"""Quality scoring of generated event streams against a triple set.

The triple set records, per (table, column), either the observed numeric
[min, max] or the admissible subword units from real data.  Generated
events pass a syntax check (starts with a table name, columns and contents
paired, table/column known) and then a semantics check per column.
"""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional

from .corpus import Corpus
from .serializer import (
    DEFECT_NOT_TABLE_FIRST,
    DEFECT_UNPAIRED_COLUMN,
    ReconstructedEvent,
    textualize_cell,
)
from .vocab import Vocabulary, tokenize


class AuditError(ValueError):
    pass


# defect kinds, in check order
NOT_TABLE_FIRST = "not_table_first"
UNPAIRED_COLUMN = "unpaired_column"
UNKNOWN_TABLE_COLUMN = "unknown_table_column"
NUMERIC_OUT_OF_RANGE = "numeric_out_of_range"
UNKNOWN_SUBWORD = "unknown_subword"

DEFECT_KINDS = (
    NOT_TABLE_FIRST,
    UNPAIRED_COLUMN,
    UNKNOWN_TABLE_COLUMN,
    NUMERIC_OUT_OF_RANGE,
    UNKNOWN_SUBWORD,
)


@dataclass
class NumericRange:
    low: float
    high: float


@dataclass
class SubwordSet:
    units: set[str]


@dataclass
class TripleSet:
    tables: set[str]
    columns: dict[str, set[str]]  # table -> column names
    content: dict[tuple[str, str], NumericRange | SubwordSet]

    def save(self, path: Path | str) -> None:
        doc = {
            "tables": sorted(self.tables),
            "columns": {t: sorted(cols) for t, cols in self.columns.items()},
            "content": [
                {
                    "table": t,
                    "column": c,
                    **(
                        {"type": "numeric", "low": v.low, "high": v.high}
                        if isinstance(v, NumericRange)
                        else {"type": "text", "units": sorted(v.units)}
                    ),
                }
                for (t, c), v in sorted(self.content.items())
            ],
        }
        Path(path).write_text(json.dumps(doc, indent=2) + "\n")

    @classmethod
    def load(cls, path: Path | str) -> "TripleSet":
        doc = json.loads(Path(path).read_text())
        content: dict[tuple[str, str], NumericRange | SubwordSet] = {}
        for entry in doc["content"]:
            key = (entry["table"], entry["column"])
            if entry["type"] == "numeric":
                content[key] = NumericRange(entry["low"], entry["high"])
            else:
                content[key] = SubwordSet(set(entry["units"]))
        return cls(
            set(doc["tables"]),
            {t: set(cols) for t, cols in doc["columns"].items()},
            content,
        )


def _parse_decimal(text: str) -> Optional[float]:
    """Parse content text as a decimal, reassembling spaced digits first."""
    compact = text.replace(" ", "")
    if not compact:
        return None
    try:
        return float(compact)
    except ValueError:
        return None


def build_triples(real: Corpus, vocab: Vocabulary) -> TripleSet:
    """Refined triple set from a real corpus.

    A (table, column) is numeric iff every observed content parses as a
    decimal; numeric columns keep [min, max], text columns the union of
    subword units over all observed contents.
    """
    if not real.patients:
        raise AuditError("cannot build triples from an empty corpus")
    observed: dict[tuple[str, str], list[str]] = {}
    tables: set[str] = set()
    columns: dict[str, set[str]] = {}
    for p in real.patients:
        for e in p.events:
            table = e.table_name.casefold()
            tables.add(table)
            for col_name, cell in e.columns:
                col = col_name.casefold()
                columns.setdefault(table, set()).add(col)
                observed.setdefault((table, col), []).append(
                    textualize_cell(cell, real.definitions)
                )

    content: dict[tuple[str, str], NumericRange | SubwordSet] = {}
    for key, texts in observed.items():
        values = [_parse_decimal(t) for t in texts]
        if all(v is not None for v in values):
            content[key] = NumericRange(min(values), max(values))
        else:
            units: set[str] = set()
            for t in texts:
                units.update(tokenize(t, vocab))
            content[key] = SubwordSet(units)
    return TripleSet(tables, columns, content)


@dataclass
class EventVerdict:
    correct: bool
    defect: Optional[str] = None

    def __post_init__(self):
        if self.correct == (self.defect is not None):
            raise AuditError("verdict must be correct xor defect-marked")


def _structure_raw_event(event: ReconstructedEvent, triples: TripleSet) -> ReconstructedEvent:
    """Infer (table, (column, content) pairs) from a raw word list.

    Greedy longest-prefix match against the known table names, then
    alternating longest column-name matches with contents running to the
    next recognized column name.
    """
    words = list(event.words or [])
    structured = ReconstructedEvent(timegap=event.timegap)

    def match_prefix(pos: int, names: set[str]) -> Optional[str]:
        best = None
        for name in names:
            name_words = name.split()
            if words[pos:pos + len(name_words)] == name_words:
                if best is None or len(name_words) > len(best.split()):
                    best = name
        return best

    table = match_prefix(0, triples.tables) if words else None
    if table is None:
        structured.defect = NOT_TABLE_FIRST
        return structured
    structured.table = table
    pos = len(table.split())
    col_names = triples.columns.get(table, set())
    while pos < len(words):
        col = match_prefix(pos, col_names)
        if col is None:
            structured.defect = UNKNOWN_TABLE_COLUMN
            return structured
        pos += len(col.split())
        content_words: list[str] = []
        while pos < len(words) and match_prefix(pos, col_names) is None:
            content_words.append(words[pos])
            pos += 1
        if not content_words:
            structured.defect = UNPAIRED_COLUMN
            return structured
        structured.pairs.append((col, " ".join(content_words)))
    return structured


def check_event(event: ReconstructedEvent, triples: TripleSet,
                vocab: Vocabulary) -> EventVerdict:
    """Syntax then semantics check of one reconstructed event."""
    if event.defect == DEFECT_NOT_TABLE_FIRST:
        return EventVerdict(False, NOT_TABLE_FIRST)
    if event.defect == DEFECT_UNPAIRED_COLUMN:
        return EventVerdict(False, UNPAIRED_COLUMN)

    if event.words is not None:
        event = _structure_raw_event(event, triples)
        if event.defect is not None:
            return EventVerdict(False, event.defect)

    if event.table is None:
        return EventVerdict(False, NOT_TABLE_FIRST)
    table = event.table.casefold()
    if table not in triples.tables:
        return EventVerdict(False, UNKNOWN_TABLE_COLUMN)
    if not event.pairs:
        return EventVerdict(False, UNPAIRED_COLUMN)
    for col_name, content in event.pairs:
        col = col_name.casefold()
        key = (table, col)
        if col not in triples.columns.get(table, set()) or key not in triples.content:
            return EventVerdict(False, UNKNOWN_TABLE_COLUMN)
        admissible = triples.content[key]
        if isinstance(admissible, NumericRange):
            value = _parse_decimal(content)
            if value is None or not (admissible.low <= value <= admissible.high):
                return EventVerdict(False, NUMERIC_OUT_OF_RANGE)
        else:
            units = tokenize(content, vocab)
            if any(u not in admissible.units for u in units):
                return EventVerdict(False, UNKNOWN_SUBWORD)
    return EventVerdict(True)


@dataclass
class AuditReport:
    rce: Optional[float]
    rue: Optional[float]
    rcs: Optional[float]
    total_events: int
    unique_events: int
    total_samples: int
    defect_counts: dict[str, int] = field(default_factory=dict)

    def to_dict(self) -> dict:
        return {
            "rce": self.rce,
            "rue": self.rue,
            "rcs": self.rcs,
            "total_events": self.total_events,
            "unique_events": self.unique_events,
            "total_samples": self.total_samples,
            "defect_counts": self.defect_counts,
        }


def score(generated: list[list[ReconstructedEvent]], triples: TripleSet,
          vocab: Vocabulary) -> AuditReport:
    """RCE over events, RUE over deduplicated events, RCS over samples.

    A sample is correct iff all its events are; a sample with no events
    counts incorrect.  Empty denominators yield null metrics.
    """
    total_events = 0
    correct_events = 0
    unique: dict[tuple, bool] = {}
    correct_samples = 0
    defect_counts = {k: 0 for k in DEFECT_KINDS}

    for sample in generated:
        sample_ok = bool(sample)
        for event in sample:
            verdict = check_event(event, triples, vocab)
            total_events += 1
            if verdict.correct:
                correct_events += 1
            else:
                defect_counts[verdict.defect] += 1
                sample_ok = False
            unique.setdefault(event.key(), verdict.correct)
        if sample_ok:
            correct_samples += 1

    n_samples = len(generated)
    n_unique = len(unique)
    return AuditReport(
        rce=correct_events / total_events if total_events else None,
        rue=sum(unique.values()) / n_unique if n_unique else None,
        rcs=correct_samples / n_samples if n_samples else None,
        total_events=total_events,
        unique_events=n_unique,
        total_samples=n_samples,
        defect_counts=defect_counts,
    )
