import pytest

from ehrseq import corpus as corpus_mod
from ehrseq import serializer
from ehrseq.vocab import build_vocabulary


def corpus_texts(corpus):
    for p in corpus.patients:
        for e in p.events:
            yield e.table_name
            for col, cell in e.columns:
                yield col
                yield serializer.textualize_cell(cell, corpus.definitions)


@pytest.fixture(scope="session")
def small_corpus():
    return corpus_mod.generate_corpus(corpus_mod.default_config(seed=11, n_patients=20))


@pytest.fixture(scope="session")
def small_vocab(small_corpus):
    return build_vocabulary(corpus_texts(small_corpus))
