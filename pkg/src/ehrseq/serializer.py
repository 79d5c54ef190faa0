"""Event-stream serialization into token grids and flat sequences.

Each event serializes as table name, then (column name, textualized cell)
pairs, then one quantized time-gap token.  Two parallel label channels ride
along: token-type (table/column/value/timegap/pad) and digit-place labels
for the digits of numeric cells.
"""

from __future__ import annotations

import bisect
import json
from dataclasses import dataclass, field
from enum import IntEnum
from pathlib import Path
from typing import Optional

import numpy as np

from .corpus import NUMERIC, CellValue, EventRecord, PatientRecord
from .vocab import (
    PAD_ID,
    TIMEGAP_ID0,
    N_TIMEGAP_TOKENS,
    Vocabulary,
    detokenize,
    timegap_unit,
    tokenize,
)


class SerializeError(ValueError):
    pass


class TokenType(IntEnum):
    PAD = 0
    TABLE_NAME = 1
    COLUMN_NAME = 2
    COLUMN_VALUE = 3
    TIMEGAP = 4
    START = 5
    END = 6


# Digit-place labels are small ints: 0 = non-digit, 1 = decimal point,
# PLACE_ZERO + k = digit at power-of-ten position k (k=0 units, k=-1 tenths).
DPE_NON_DIGIT = 0
DPE_DECIMAL_POINT = 1
DPE_PLACE_ZERO = 64


def dpe_place(k: int) -> int:
    label = DPE_PLACE_ZERO + k
    if label < 2:
        raise SerializeError(f"digit place {k} out of encodable range")
    return label


def dpe_is_place(label: int) -> bool:
    return label >= 2


def dpe_place_value(label: int) -> int:
    if not dpe_is_place(label):
        raise SerializeError(f"label {label} is not a digit place")
    return label - DPE_PLACE_ZERO


DEFAULT_TIMEGAP_BOUNDARIES_MIN = (1, 5, 15, 30, 60, 120, 360, 720)


def _is_pow2(x: int) -> bool:
    return x > 0 and (x & (x - 1)) == 0


@dataclass(frozen=True)
class SerializerConfig:
    n_e: int = 256
    n_tpe: int = 128
    n_t: int = 8192
    timegap_boundaries_min: tuple[int, ...] = DEFAULT_TIMEGAP_BOUNDARIES_MIN

    def __post_init__(self):
        for name, v in (("n_e", self.n_e), ("n_tpe", self.n_tpe), ("n_t", self.n_t)):
            if not _is_pow2(v):
                raise SerializeError(f"{name}={v} must be a power of two")
        b = self.timegap_boundaries_min
        if any(b[i] >= b[i + 1] for i in range(len(b) - 1)):
            raise SerializeError("timegap boundaries must be strictly increasing")
        if len(b) + 1 > N_TIMEGAP_TOKENS:
            raise SerializeError("more timegap buckets than reserved tokens")


@dataclass
class TokenStream:
    """Token ids with parallel label channels; hierarchical grid or flat sequence."""

    layout: str  # "hierarchical" | "flattened"
    tokens: np.ndarray
    type_labels: Optional[np.ndarray] = None
    dpe_labels: Optional[np.ndarray] = None
    event_boundaries: Optional[list[tuple[int, int]]] = None
    patient_id: str = ""

    def __post_init__(self):
        if self.layout not in ("hierarchical", "flattened"):
            raise SerializeError(f"unknown layout {self.layout!r}")
        for channel in (self.type_labels, self.dpe_labels):
            if channel is not None and channel.shape != self.tokens.shape:
                raise SerializeError("label channel shape does not match token channel")

    def payload_length(self) -> int:
        return int(np.count_nonzero(self.tokens != PAD_ID))


def textualize_cell(cell: CellValue, definitions: dict[str, str]) -> str:
    """Map a cell to text: code -> description, number -> spaced characters."""
    if cell.kind == NUMERIC:
        return " ".join(cell.value)
    if cell.kind == "itemized":
        if cell.value not in definitions:
            raise SerializeError(f"unknown itemized code {cell.value!r}")
        return definitions[cell.value].casefold()
    return cell.value.casefold()


def quantize_timegap(delta_seconds: int,
                     boundaries_min: tuple[int, ...] = DEFAULT_TIMEGAP_BOUNDARIES_MIN) -> str:
    """Bucket a non-negative gap into TG tokens; buckets are [b_i, b_{i+1})."""
    if delta_seconds < 0:
        raise SerializeError("negative time gap")
    minutes = delta_seconds / 60.0
    return timegap_unit(bisect.bisect_right(boundaries_min, minutes))


def _numeric_dpe_labels(value: str) -> list[int]:
    """Per-character digit-place labels for a decimal string."""
    point = value.find(".")
    int_part = value[:point] if point >= 0 else value
    n_int_digits = sum(c.isdigit() for c in int_part)
    labels = []
    seen_int = 0
    frac = 0
    past_point = False
    for c in value:
        if c == ".":
            labels.append(DPE_DECIMAL_POINT)
            past_point = True
        elif c.isdigit():
            if past_point:
                frac += 1
                labels.append(dpe_place(-frac))
            else:
                labels.append(dpe_place(n_int_digits - 1 - seen_int))
                seen_int += 1
        else:
            labels.append(DPE_NON_DIGIT)
    return labels


def serialize_event(event: EventRecord, prev_timestamp: int, vocab: Vocabulary,
                    definitions: dict[str, str],
                    config: SerializerConfig) -> tuple[list[int], list[int], list[int]]:
    """Serialize one event to (token ids, type labels, dpe labels)."""
    delta = event.timestamp - prev_timestamp
    if delta < 0:
        raise SerializeError("events not in chronological order")

    ids: list[int] = []
    types: list[int] = []
    dpes: list[int] = []

    def emit(units: list[str], label: TokenType, dpe: Optional[list[int]] = None):
        token_ids = vocab.encode(units)
        ids.extend(token_ids)
        types.extend([int(label)] * len(token_ids))
        dpes.extend(dpe if dpe is not None else [DPE_NON_DIGIT] * len(token_ids))

    emit(tokenize(event.table_name, vocab), TokenType.TABLE_NAME)
    for col_name, cell in event.columns:
        emit(tokenize(col_name, vocab), TokenType.COLUMN_NAME)
        cell_text = textualize_cell(cell, definitions)
        units = tokenize(cell_text, vocab)
        if cell.kind == NUMERIC:
            # one unit per character of the decimal string
            emit(units, TokenType.COLUMN_VALUE, _numeric_dpe_labels(cell.value))
        else:
            emit(units, TokenType.COLUMN_VALUE)
    tg = quantize_timegap(delta, config.timegap_boundaries_min)
    emit([tg], TokenType.TIMEGAP)
    return ids, types, dpes


def build_hierarchical(patient: PatientRecord, vocab: Vocabulary,
                       definitions: dict[str, str],
                       config: SerializerConfig = SerializerConfig()) -> TokenStream:
    """Serialize a patient to an n_e x n_tpe grid, one event per row.

    Rows are right-padded or truncated at n_tpe; events beyond n_e are
    dropped from the end (earliest kept).
    """
    if not patient.events:
        raise SerializeError(f"patient {patient.patient_id} has no events")
    tokens = np.full((config.n_e, config.n_tpe), PAD_ID, dtype=np.int32)
    types = np.full_like(tokens, int(TokenType.PAD))
    dpes = np.full_like(tokens, DPE_NON_DIGIT)

    prev_ts = 0  # first gap measured from admission
    for row, event in enumerate(patient.events[: config.n_e]):
        ids, tl, dl = serialize_event(event, prev_ts, vocab, definitions, config)
        prev_ts = event.timestamp
        length = min(len(ids), config.n_tpe)
        tokens[row, :length] = ids[:length]
        types[row, :length] = tl[:length]
        dpes[row, :length] = dl[:length]
    return TokenStream("hierarchical", tokens, types, dpes, patient_id=patient.patient_id)


def flatten(hier: TokenStream, n_t: int = 8192) -> TokenStream:
    """Concatenate de-padded rows chronologically, recording event boundaries."""
    if hier.layout != "hierarchical":
        raise SerializeError("flatten expects a hierarchical stream")
    pieces_t, pieces_ty, pieces_d, boundaries = [], [], [], []
    offset = 0
    for row in range(hier.tokens.shape[0]):
        mask = hier.tokens[row] != PAD_ID
        count = int(mask.sum())
        if count == 0:
            continue
        pieces_t.append(hier.tokens[row, :count])
        if hier.type_labels is not None:
            pieces_ty.append(hier.type_labels[row, :count])
        if hier.dpe_labels is not None:
            pieces_d.append(hier.dpe_labels[row, :count])
        boundaries.append((offset, offset + count))
        offset += count

    def assemble(pieces, fill):
        out = np.full(n_t, fill, dtype=np.int32)
        if pieces:
            flat = np.concatenate(pieces)[:n_t]
            out[: len(flat)] = flat
        return out

    tokens = assemble(pieces_t, PAD_ID)
    types = assemble(pieces_ty, int(TokenType.PAD)) if hier.type_labels is not None else None
    dpes = assemble(pieces_d, DPE_NON_DIGIT) if hier.dpe_labels is not None else None
    boundaries = [(s, min(e, n_t)) for s, e in boundaries if s < n_t]
    return TokenStream("flattened", tokens, types, dpes, boundaries, hier.patient_id)


DEFECT_NOT_TABLE_FIRST = "not_table_first"
DEFECT_UNPAIRED_COLUMN = "unpaired_column"


@dataclass
class ReconstructedEvent:
    """Textual view of one serialized event, possibly defect-marked.

    For label-carrying streams `table`/`pairs` are populated; for label-less
    generated streams only `words` is, and structure is inferred downstream.
    """

    table: Optional[str] = None
    pairs: list[tuple[str, str]] = field(default_factory=list)
    timegap: Optional[str] = None
    defect: Optional[str] = None
    words: Optional[list[str]] = None

    def key(self) -> tuple:
        if self.words is not None:
            return ("raw", tuple(self.words), self.timegap)
        return (self.table, tuple(self.pairs), self.timegap)


def _event_segments(stream: TokenStream):
    if stream.layout == "hierarchical":
        for row in range(stream.tokens.shape[0]):
            mask = stream.tokens[row] != PAD_ID
            count = int(mask.sum())
            if count:
                yield (
                    stream.tokens[row, :count],
                    None if stream.type_labels is None else stream.type_labels[row, :count],
                )
    else:
        if stream.event_boundaries is not None:
            for s, e in stream.event_boundaries:
                yield stream.tokens[s:e], (
                    None if stream.type_labels is None else stream.type_labels[s:e]
                )
        else:
            # no boundaries: split on timegap tokens
            tokens = stream.tokens[stream.tokens != PAD_ID]
            start = 0
            for i, tid in enumerate(tokens):
                if TIMEGAP_ID0 <= tid < TIMEGAP_ID0 + N_TIMEGAP_TOKENS:
                    yield tokens[start:i + 1], None
                    start = i + 1
            if start < len(tokens):
                yield tokens[start:], None


def _parse_labeled(units: list[str], labels: list[int]) -> ReconstructedEvent:
    runs: list[tuple[int, list[str]]] = []
    for unit, label in zip(units, labels):
        if runs and runs[-1][0] == label:
            runs[-1][1].append(unit)
        else:
            runs.append((label, [unit]))

    event = ReconstructedEvent()
    if not runs or runs[0][0] != int(TokenType.TABLE_NAME):
        event.defect = DEFECT_NOT_TABLE_FIRST
    idx = 0
    while idx < len(runs):
        label, run_units = runs[idx]
        if label == int(TokenType.TABLE_NAME):
            event.table = detokenize(run_units)
            idx += 1
        elif label == int(TokenType.COLUMN_NAME):
            if idx + 1 < len(runs) and runs[idx + 1][0] == int(TokenType.COLUMN_VALUE):
                event.pairs.append((detokenize(run_units), detokenize(runs[idx + 1][1])))
                idx += 2
            else:
                event.defect = event.defect or DEFECT_UNPAIRED_COLUMN
                idx += 1
        elif label == int(TokenType.TIMEGAP):
            event.timegap = run_units[-1]
            idx += 1
        else:
            # value without a preceding column name
            event.defect = event.defect or DEFECT_UNPAIRED_COLUMN
            idx += 1
    return event


def detokenize_events(stream: TokenStream, vocab: Vocabulary) -> list[ReconstructedEvent]:
    """Reconstruct event texts from a stream.

    Label-carrying streams parse exactly; label-less streams fall back to
    splitting on time-gap tokens and return raw word lists for the audit
    to structure against its triple set.
    """
    events = []
    for token_ids, labels in _event_segments(stream):
        units = [vocab.unit(int(t)) for t in token_ids]
        if labels is not None:
            events.append(_parse_labeled(units, [int(x) for x in labels]))
        else:
            timegap = None
            if units and vocab.is_timegap_id(int(token_ids[-1])):
                timegap = units[-1]
                units = units[:-1]
            words = detokenize(units).split(" ") if units else []
            events.append(ReconstructedEvent(timegap=timegap, words=words))
    return events


# --- persistence: one patient per JSON line --------------------------------

def save_streams(streams: list[TokenStream], path: Path | str) -> None:
    with open(path, "w") as fh:
        for s in streams:
            record = {
                "patient_id": s.patient_id,
                "layout": s.layout,
                "tokens": s.tokens.tolist(),
                "type_labels": None if s.type_labels is None else s.type_labels.tolist(),
                "dpe_labels": None if s.dpe_labels is None else s.dpe_labels.tolist(),
                "event_boundaries": s.event_boundaries,
            }
            fh.write(json.dumps(record) + "\n")


def load_streams(path: Path | str) -> list[TokenStream]:
    streams = []
    for line in Path(path).read_text().splitlines():
        if not line.strip():
            continue
        r = json.loads(line)
        streams.append(
            TokenStream(
                layout=r["layout"],
                tokens=np.asarray(r["tokens"], dtype=np.int32),
                type_labels=None if r.get("type_labels") is None
                else np.asarray(r["type_labels"], dtype=np.int32),
                dpe_labels=None if r.get("dpe_labels") is None
                else np.asarray(r["dpe_labels"], dtype=np.int32),
                event_boundaries=None if r.get("event_boundaries") is None
                else [tuple(b) for b in r["event_boundaries"]],
                patient_id=r.get("patient_id", ""),
            )
        )
    return streams
