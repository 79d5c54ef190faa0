import random

import numpy as np
import pytest

from ehrseq import corpus as C
from ehrseq import serializer as S
from ehrseq.vocab import PAD_ID, RESERVED, Vocabulary, build_vocabulary

from conftest import corpus_texts


def test_textualize_itemized():
    cell = C.itemized("51385")
    assert S.textualize_cell(cell, {"51385": "Atypical Lymphocytes"}) == "atypical lymphocytes"


def test_textualize_numeric_spaced():
    assert S.textualize_cell(C.numeric("123.1"), {}) == "1 2 3 . 1"


def test_textualize_text_casefold():
    assert S.textualize_cell(C.text("Normal Saline"), {}) == "normal saline"


def test_textualize_unknown_code():
    with pytest.raises(S.SerializeError):
        S.textualize_cell(C.itemized("9"), {})


def test_timegap_zero():
    assert S.quantize_timegap(0) == "[tg0]"


def test_timegap_ninety_seconds():
    assert S.quantize_timegap(90) == "[tg1]"


def test_timegap_left_inclusive_boundary():
    assert S.quantize_timegap(7200) == "[tg6]"  # exactly 120 min


def test_timegap_negative_rejected():
    with pytest.raises(S.SerializeError):
        S.quantize_timegap(-1)


def simple_vocab():
    return Vocabulary(RESERVED + ["lab", "value", "7", ".", "4", "2", "0", "5", "v", "t", "c"])


def test_serialize_event_numeric_tail():
    vocab = simple_vocab()
    event = C.EventRecord("lab", (("value", C.numeric("7.4")),), timestamp=0)
    ids, types, dpes = S.serialize_event(event, 0, vocab, {}, S.SerializerConfig())
    units = [vocab.unit(i) for i in ids]
    assert units == ["lab", "value", "7", ".", "4", "[tg0]"]
    assert types == [int(S.TokenType.TABLE_NAME), int(S.TokenType.COLUMN_NAME),
                     int(S.TokenType.COLUMN_VALUE), int(S.TokenType.COLUMN_VALUE),
                     int(S.TokenType.COLUMN_VALUE), int(S.TokenType.TIMEGAP)]
    assert dpes[2:5] == [S.dpe_place(0), S.DPE_DECIMAL_POINT, S.dpe_place(-1)]


def test_dpe_integer_places_descend():
    assert S._numeric_dpe_labels("205") == [S.dpe_place(2), S.dpe_place(1), S.dpe_place(0)]


def test_event_without_columns_rejected():
    with pytest.raises(C.CorpusError):
        C.EventRecord("lab", (), timestamp=0)


def grid_fixture():
    vocab = simple_vocab()
    events = [
        C.EventRecord("t", (("c", C.text("v")),), timestamp=0),
        C.EventRecord("t", (("c", C.text("v v v")),), timestamp=60),
        C.EventRecord("t", (("c", C.text("v")),), timestamp=120),
    ]
    patient = C.PatientRecord("p0", events)
    config = S.SerializerConfig(n_e=4, n_tpe=8, n_t=64)
    return vocab, patient, config


def test_build_hierarchical_pads_and_unused_rows():
    vocab, patient, config = grid_fixture()
    stream = S.build_hierarchical(patient, vocab, {}, config)
    assert stream.tokens.shape == (4, 8)
    # rows: event lengths 4, 6, 4; row 3 all pad
    lengths = (stream.tokens != PAD_ID).sum(axis=1)
    assert list(lengths) == [4, 6, 4, 0]
    assert (stream.tokens[3] == PAD_ID).all()


def test_build_hierarchical_truncates_long_event():
    vocab = simple_vocab()
    event = C.EventRecord("t", (("c", C.text(" ".join(["v"] * 10))),), timestamp=0)
    config = S.SerializerConfig(n_e=4, n_tpe=8, n_t=64)
    stream = S.build_hierarchical(C.PatientRecord("p", [event]), vocab, {}, config)
    full, _, _ = S.serialize_event(event, 0, vocab, {}, config)
    assert list(stream.tokens[0]) == full[:8]


def test_build_hierarchical_empty_patient_rejected():
    vocab, _, config = grid_fixture()
    with pytest.raises(S.SerializeError):
        S.build_hierarchical(C.PatientRecord("p", []), vocab, {}, config)


def test_flatten_boundaries_and_padding():
    vocab, patient, config = grid_fixture()
    hier = S.build_hierarchical(patient, vocab, {}, config)
    flat = S.flatten(hier, config.n_t)
    assert flat.payload_length() == 14
    assert flat.event_boundaries == [(0, 4), (4, 10), (10, 14)]
    assert (flat.tokens[14:] == PAD_ID).all()


def test_flatten_all_pad_grid():
    tokens = np.full((4, 8), PAD_ID, dtype=np.int32)
    stream = S.TokenStream("hierarchical", tokens)
    flat = S.flatten(stream, 16)
    assert flat.payload_length() == 0
    assert flat.event_boundaries == []


def test_flatten_conserves_tokens():
    vocab, patient, config = grid_fixture()
    hier = S.build_hierarchical(patient, vocab, {}, config)
    flat = S.flatten(hier, config.n_t)
    hier_payload = sorted(hier.tokens[hier.tokens != PAD_ID].tolist())
    flat_payload = sorted(flat.tokens[flat.tokens != PAD_ID].tolist())
    assert hier_payload == flat_payload
    assert flat.payload_length() <= config.n_e * config.n_tpe


def test_roundtrip_on_untruncated_patients(small_corpus, small_vocab):
    config = S.SerializerConfig()
    for patient in small_corpus.patients:
        hier = S.build_hierarchical(patient, small_vocab, small_corpus.definitions, config)
        events = S.detokenize_events(hier, small_vocab)
        assert len(events) == len(patient.events)
        for original, rebuilt in zip(patient.events, events):
            assert rebuilt.defect is None
            assert rebuilt.table == original.table_name.casefold()
            expected = [
                (col.casefold(), S.textualize_cell(cell, small_corpus.definitions))
                for col, cell in original.columns
            ]
            assert rebuilt.pairs == expected


def test_detokenize_flags_not_table_first():
    vocab, patient, config = grid_fixture()
    hier = S.build_hierarchical(patient, vocab, {}, config)
    hier.type_labels[0, 0] = int(S.TokenType.COLUMN_NAME)
    events = S.detokenize_events(hier, vocab)
    assert events[0].defect == S.DEFECT_NOT_TABLE_FIRST


def test_detokenize_flags_unpaired_truncated_column():
    vocab = simple_vocab()
    # truncation at 3 tokens cuts the column's value
    event = C.EventRecord("t", (("c", C.text("v v v v")),), timestamp=0)
    config = S.SerializerConfig(n_e=2, n_tpe=2, n_t=16)
    stream = S.build_hierarchical(C.PatientRecord("p", [event]), vocab, {}, config)
    rebuilt = S.detokenize_events(stream, vocab)[0]
    assert rebuilt.table == "t"
    assert rebuilt.defect == S.DEFECT_UNPAIRED_COLUMN


def test_detokenize_label_less_splits_on_timegap(small_corpus, small_vocab):
    patient = small_corpus.patients[0]
    hier = S.build_hierarchical(patient, small_vocab, small_corpus.definitions)
    flat = S.flatten(hier)
    bare = S.TokenStream("flattened", flat.tokens, patient_id=patient.patient_id)
    events = S.detokenize_events(bare, small_vocab)
    assert len(events) == len(patient.events)
    first = events[0]
    assert first.words is not None and first.timegap is not None
    assert first.words[0] == patient.events[0].table_name.casefold().split()[0]


def reconstruct_from_dpe(chars, labels):
    """Independent rebuild of a decimal string from digit/place pairs."""
    places = {}
    has_point = False
    for ch, label in zip(chars, labels):
        if label == S.DPE_DECIMAL_POINT:
            has_point = True
        elif S.dpe_is_place(label):
            places[S.dpe_place_value(label)] = ch
    int_places = sorted((k for k in places if k >= 0), reverse=True)
    frac_places = sorted((k for k in places if k < 0), reverse=True)
    out = "".join(places[k] for k in int_places)
    if has_point:
        out += "." + "".join(places[k] for k in frac_places)
    return out


def test_dpe_roundtrip_random_decimals():
    rng = random.Random(42)
    for _ in range(1000):
        int_digits = rng.randint(1, 6)
        frac_digits = rng.randint(0, 5)
        value = "".join(rng.choice("0123456789") for _ in range(int_digits))
        if int_digits > 1:
            value = str(rng.randint(1, 9)) + value[1:]
        if frac_digits:
            value += "." + "".join(rng.choice("0123456789") for _ in range(frac_digits))
        labels = S._numeric_dpe_labels(value)
        assert reconstruct_from_dpe(list(value), labels) == value
        int_labels = [l for l in labels[:int_digits]]
        assert [S.dpe_place_value(l) for l in int_labels] == list(range(int_digits - 1, -1, -1))


def test_stream_save_load_roundtrip(tmp_path, small_corpus, small_vocab):
    config = S.SerializerConfig()
    streams = [
        S.flatten(S.build_hierarchical(p, small_vocab, small_corpus.definitions, config))
        for p in small_corpus.patients[:3]
    ]
    path = tmp_path / "streams.jsonl"
    S.save_streams(streams, path)
    loaded = S.load_streams(path)
    for a, b in zip(streams, loaded):
        assert np.array_equal(a.tokens, b.tokens)
        assert np.array_equal(a.type_labels, b.type_labels)
        assert a.event_boundaries == b.event_boundaries
