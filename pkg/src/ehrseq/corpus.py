"""Synthetic EHR corpora: generation, disk I/O, and cohort splitting.

A corpus is a set of patients, each a chronologically sorted list of clinical
events drawn from a handful of tables (lab, prescription, infusion).  Cell
values are numeric, free-text, or itemized codes resolved against a
definition table.
"""

from __future__ import annotations

import json
import random
from dataclasses import dataclass, field, replace
from pathlib import Path
from typing import Optional

NUMERIC = "numeric"
TEXT = "text"
ITEMIZED = "itemized"

_CELL_KINDS = (NUMERIC, TEXT, ITEMIZED)


class CorpusError(ValueError):
    """Raised for invalid configs, malformed files, or broken invariants."""


@dataclass(frozen=True)
class CellValue:
    kind: str
    value: str

    def __post_init__(self):
        if self.kind not in _CELL_KINDS:
            raise CorpusError(f"unknown cell kind {self.kind!r}")
        if self.kind == NUMERIC:
            try:
                float(self.value)
            except ValueError:
                raise CorpusError(f"numeric cell {self.value!r} is not a finite decimal") from None


def numeric(value: str) -> CellValue:
    return CellValue(NUMERIC, value)


def text(value: str) -> CellValue:
    return CellValue(TEXT, value)


def itemized(code: str) -> CellValue:
    return CellValue(ITEMIZED, str(code))


@dataclass(frozen=True)
class EventRecord:
    """One clinical event: a table row with ordered (column, cell) pairs."""

    table_name: str
    columns: tuple[tuple[str, CellValue], ...]
    timestamp: int  # seconds since admission

    def __post_init__(self):
        if not self.table_name:
            raise CorpusError("event with empty table name")
        if not self.columns:
            raise CorpusError("event with no column pairs")
        if self.timestamp < 0:
            raise CorpusError("negative event timestamp")


@dataclass
class PatientRecord:
    patient_id: str
    events: list[EventRecord]
    labels: dict[str, int] = field(default_factory=dict)

    def __post_init__(self):
        self.events = sorted(self.events, key=lambda e: e.timestamp)


@dataclass(frozen=True)
class ColumnSpec:
    name: str
    kind: str
    # numeric columns
    low: float = 0.0
    high: float = 1.0
    decimals: int = 1
    # text columns
    choices: tuple[str, ...] = ()
    # itemized columns
    codes: tuple[str, ...] = ()


@dataclass(frozen=True)
class TableSpec:
    name: str
    columns: tuple[ColumnSpec, ...]


@dataclass
class Corpus:
    patients: list[PatientRecord]
    definitions: dict[str, str]
    schema: list[TableSpec]

    def validate(self) -> None:
        known = {t.name: {c.name: c for c in t.columns} for t in self.schema}
        for p in self.patients:
            prev = -1
            for e in p.events:
                if e.timestamp < prev:
                    raise CorpusError(f"patient {p.patient_id}: events out of order")
                prev = e.timestamp
                for col, cell in e.columns:
                    if cell.kind == ITEMIZED and cell.value not in self.definitions:
                        raise CorpusError(
                            f"patient {p.patient_id}, table {e.table_name}, column {col}: "
                            f"unresolvable itemized code {cell.value!r}"
                        )
                if e.table_name in known:
                    for col, cell in e.columns:
                        spec = known[e.table_name].get(col)
                        if spec is not None and spec.kind != cell.kind:
                            raise CorpusError(
                                f"table {e.table_name}, column {col}: cell kind {cell.kind} "
                                f"does not match declared {spec.kind}"
                            )


@dataclass(frozen=True)
class GeneratorConfig:
    seed: int
    n_patients: int
    tables: tuple[TableSpec, ...]
    definitions: dict[str, str] = field(default_factory=dict)
    events_per_patient: tuple[int, int] = (5, 12)
    observation_window_hours: int = 12

    def validate(self) -> None:
        if self.n_patients < 0:
            raise CorpusError("n_patients must be >= 0")
        if not self.tables:
            raise CorpusError("at least one table spec required")
        lo, hi = self.events_per_patient
        if lo < 5:
            raise CorpusError("events_per_patient minimum is 5 (cohort filter)")
        if hi < lo:
            raise CorpusError("events_per_patient range inverted")
        if self.observation_window_hours <= 0:
            raise CorpusError("observation window must be positive")
        for table in self.tables:
            if not table.columns:
                raise CorpusError(f"table {table.name} has no columns")
            for col in table.columns:
                if col.kind == NUMERIC and col.low > col.high:
                    raise CorpusError(f"column {table.name}.{col.name}: range min > max")
                if col.kind == TEXT and not col.choices:
                    raise CorpusError(f"column {table.name}.{col.name}: no text choices")
                if col.kind == ITEMIZED:
                    if not col.codes:
                        raise CorpusError(f"column {table.name}.{col.name}: no codes")
                    missing = [c for c in col.codes if c not in self.definitions]
                    if missing:
                        raise CorpusError(
                            f"column {table.name}.{col.name}: codes without definitions: {missing}"
                        )


_DEFAULT_DEFINITIONS = {
    "50001": "serum sodium level",
    "50002": "serum potassium level",
    "50003": "blood glucose",
    "50004": "hemoglobin concentration",
    "50005": "white blood cell count",
    "50006": "atypical lymphocytes",
    "60001": "normal saline infusion",
    "60002": "dextrose five percent",
    "60003": "lactated ringers solution",
}

_DRUGS = ("aspirin", "heparin", "insulin", "furosemide", "metoprolol", "vancomycin")
_ROUTES = ("oral", "intravenous", "subcutaneous")
_UNITS = ("meq per liter", "mg per dl", "grams per dl", "cells per microliter")


def default_config(seed: int = 0, n_patients: int = 20) -> GeneratorConfig:
    """Desk-scale three-table config: lab, prescription, infusion."""
    tables = (
        TableSpec(
            "lab",
            (
                ColumnSpec("item id", ITEMIZED, codes=tuple(c for c in _DEFAULT_DEFINITIONS if c.startswith("5"))),
                ColumnSpec("value", NUMERIC, low=0.5, high=180.0, decimals=1),
                ColumnSpec("unit", TEXT, choices=_UNITS),
            ),
        ),
        TableSpec(
            "prescription",
            (
                ColumnSpec("drug", TEXT, choices=_DRUGS),
                ColumnSpec("dose", NUMERIC, low=1.0, high=500.0, decimals=1),
                ColumnSpec("route", TEXT, choices=_ROUTES),
            ),
        ),
        TableSpec(
            "infusion",
            (
                ColumnSpec("item id", ITEMIZED, codes=tuple(c for c in _DEFAULT_DEFINITIONS if c.startswith("6"))),
                ColumnSpec("amount", NUMERIC, low=10.0, high=1000.0, decimals=1),
                ColumnSpec("rate", NUMERIC, low=5.0, high=250.0, decimals=1),
            ),
        ),
    )
    return GeneratorConfig(
        seed=seed,
        n_patients=n_patients,
        tables=tables,
        definitions=dict(_DEFAULT_DEFINITIONS),
    )


def _generate_cell(rng: random.Random, col: ColumnSpec) -> CellValue:
    if col.kind == NUMERIC:
        value = rng.uniform(col.low, col.high)
        return CellValue(NUMERIC, f"{round(value, col.decimals):.{col.decimals}f}")
    if col.kind == TEXT:
        return CellValue(TEXT, rng.choice(col.choices))
    return CellValue(ITEMIZED, rng.choice(col.codes))


def generate_corpus(config: GeneratorConfig) -> Corpus:
    """Deterministically generate a corpus from a seeded config."""
    config.validate()
    rng = random.Random(config.seed)
    window = config.observation_window_hours * 3600
    patients = []
    for i in range(config.n_patients):
        n_events = rng.randint(*config.events_per_patient)
        events = []
        for _ in range(n_events):
            table = rng.choice(config.tables)
            ts = rng.randrange(window)
            cells = tuple((c.name, _generate_cell(rng, c)) for c in table.columns)
            events.append(EventRecord(table.name, cells, ts))
        patients.append(PatientRecord(f"p{i:05d}", events, labels={"outcome": rng.randint(0, 1)}))
    corpus = Corpus(patients, dict(config.definitions), list(config.tables))
    corpus.validate()
    return corpus


def load_generator_config(path: Path | str) -> GeneratorConfig:
    raw = json.loads(Path(path).read_text())
    try:
        tables = tuple(
            TableSpec(
                t["name"],
                tuple(
                    ColumnSpec(
                        c["name"],
                        c["type"],
                        low=float(c.get("low", 0.0)),
                        high=float(c.get("high", 1.0)),
                        decimals=int(c.get("decimals", 1)),
                        choices=tuple(c.get("choices", ())),
                        codes=tuple(str(x) for x in c.get("codes", ())),
                    )
                    for c in t["columns"]
                ),
            )
            for t in raw["tables"]
        )
        config = GeneratorConfig(
            seed=int(raw.get("seed", 0)),
            n_patients=int(raw["n_patients"]),
            tables=tables,
            definitions={str(k): v for k, v in raw.get("definitions", {}).items()},
            events_per_patient=tuple(raw.get("events_per_patient", (5, 12))),
            observation_window_hours=int(raw.get("observation_window_hours", 12)),
        )
    except (KeyError, TypeError) as exc:
        raise CorpusError(f"malformed generator config {path}: {exc}") from exc
    config.validate()
    return config


def with_seed(config: GeneratorConfig, seed: int) -> GeneratorConfig:
    return replace(config, seed=seed)


# --- disk format ------------------------------------------------------------
#
# One tab-delimited file per table ("<table>.tsv"), header row:
#   patient_id  timestamp_seconds  <column names...>
# plus "definitions.tsv" (code, description) and "schema.json" declaring
# per-column types.

def save_corpus(corpus: Corpus, out_dir: Path | str) -> list[Path]:
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    written = []
    for table in corpus.schema:
        path = out / f"{table.name}.tsv"
        col_names = [c.name for c in table.columns]
        lines = ["\t".join(["patient_id", "timestamp_seconds"] + col_names)]
        for p in corpus.patients:
            for e in p.events:
                if e.table_name != table.name:
                    continue
                cells = {name: cell for name, cell in e.columns}
                row = [p.patient_id, str(e.timestamp)]
                row += [cells[name].value for name in col_names]
                lines.append("\t".join(row))
        path.write_text("\n".join(lines) + "\n")
        written.append(path)

    defs_path = out / "definitions.tsv"
    defs_path.write_text(
        "".join(f"{code}\t{desc}\n" for code, desc in sorted(corpus.definitions.items()))
    )
    written.append(defs_path)

    schema = {
        "tables": [
            {
                "name": t.name,
                "columns": [{"name": c.name, "type": c.kind} for c in t.columns],
            }
            for t in corpus.schema
        ],
        "patients": [{"id": p.patient_id, "labels": p.labels} for p in corpus.patients],
    }
    schema_path = out / "schema.json"
    schema_path.write_text(json.dumps(schema, indent=2) + "\n")
    written.append(schema_path)
    return written


def load_corpus(path: Path | str, min_events: int = 5,
                observation_window_hours: Optional[int] = 12) -> Corpus:
    """Load a corpus directory; sorts events, applies cohort filters.

    Non-monotone timestamps are sorted, not rejected.  Rows failing the
    declared column type, or itemized codes missing from the definitions
    file, are load errors naming the offending row.
    """
    root = Path(path)
    schema_path = root / "schema.json"
    if not schema_path.exists():
        raise CorpusError(f"missing schema sidecar {schema_path}")
    schema_raw = json.loads(schema_path.read_text())
    schema = [
        TableSpec(t["name"], tuple(ColumnSpec(c["name"], c["type"]) for c in t["columns"]))
        for t in schema_raw["tables"]
    ]

    definitions: dict[str, str] = {}
    defs_path = root / "definitions.tsv"
    if defs_path.exists():
        for line in defs_path.read_text().splitlines():
            if not line.strip():
                continue
            code, _, desc = line.partition("\t")
            definitions[code] = desc

    by_patient: dict[str, list[EventRecord]] = {}
    for table in schema:
        table_path = root / f"{table.name}.tsv"
        if not table_path.exists():
            raise CorpusError(f"missing table file {table_path}")
        lines = table_path.read_text().splitlines()
        if not lines:
            continue
        header = lines[0].split("\t")
        expected = ["patient_id", "timestamp_seconds"] + [c.name for c in table.columns]
        if header != expected:
            raise CorpusError(f"{table_path}: header {header} does not match schema {expected}")
        for row_no, line in enumerate(lines[1:], start=2):
            if not line.strip():
                continue
            fields = line.split("\t")
            if len(fields) != len(expected):
                raise CorpusError(f"{table_path}:{row_no}: unpaired column/cell row")
            pid, ts_raw = fields[0], fields[1]
            try:
                ts = int(ts_raw)
            except ValueError:
                raise CorpusError(f"{table_path}:{row_no}: bad timestamp {ts_raw!r}") from None
            cells = []
            for spec, value in zip(table.columns, fields[2:]):
                if spec.kind == NUMERIC:
                    try:
                        float(value)
                    except ValueError:
                        raise CorpusError(
                            f"{table_path}:{row_no}: column {spec.name!r}: "
                            f"{value!r} is not numeric"
                        ) from None
                if spec.kind == ITEMIZED and value not in definitions:
                    raise CorpusError(
                        f"{table_path}:{row_no}: column {spec.name!r}: unknown code {value!r}"
                    )
                cells.append((spec.name, CellValue(spec.kind, value)))
            by_patient.setdefault(pid, []).append(EventRecord(table.name, tuple(cells), ts))

    labels = {p["id"]: p.get("labels", {}) for p in schema_raw.get("patients", [])}
    window = observation_window_hours * 3600 if observation_window_hours else None
    patients = []
    for pid in sorted(set(by_patient) | set(labels)):
        events = sorted(by_patient.get(pid, []), key=lambda e: e.timestamp)
        if window is not None:
            events = [e for e in events if e.timestamp < window]
        if len(events) < min_events:
            continue
        patients.append(PatientRecord(pid, events, labels.get(pid, {})))
    corpus = Corpus(patients, definitions, schema)
    corpus.validate()
    return corpus


def split_cohort(corpus: Corpus, ratios: tuple[float, float, float], seed: int,
                 stratify_on: Optional[str] = None) -> tuple[Corpus, Corpus, Corpus]:
    """Partition patients into train/valid/test by largest-remainder allocation."""
    if any(r < 0 for r in ratios) or abs(sum(ratios) - 1.0) > 1e-9:
        raise CorpusError(f"ratios {ratios} must be non-negative and sum to 1")
    rng = random.Random(seed)

    if stratify_on is None:
        groups = [list(corpus.patients)]
    else:
        by_label: dict[int, list[PatientRecord]] = {}
        for p in corpus.patients:
            if stratify_on not in p.labels:
                raise CorpusError(f"patient {p.patient_id} lacks stratify label {stratify_on!r}")
            by_label.setdefault(p.labels[stratify_on], []).append(p)
        groups = [by_label[k] for k in sorted(by_label)]

    splits: tuple[list[PatientRecord], ...] = ([], [], [])
    for group in groups:
        pool = list(group)
        rng.shuffle(pool)
        counts = _largest_remainder(len(pool), ratios)
        offset = 0
        for split, count in zip(splits, counts):
            split.extend(pool[offset:offset + count])
            offset += count

    return tuple(
        Corpus(sorted(split, key=lambda p: p.patient_id), corpus.definitions, corpus.schema)
        for split in splits
    )


def _largest_remainder(total: int, ratios: tuple[float, ...]) -> list[int]:
    exact = [total * r for r in ratios]
    counts = [int(x) for x in exact]
    remainder = total - sum(counts)
    order = sorted(range(len(ratios)), key=lambda i: exact[i] - counts[i], reverse=True)
    for i in order[:remainder]:
        counts[i] += 1
    return counts
