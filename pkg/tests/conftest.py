import numpy as np
import pytest

from tsmh.lm import NGramModel
from tsmh.logic import And, ConstraintSet, Not, Or, Var
from tsmh.vocab import CategoryPartition, Vocabulary, tokenize


def make_partition(vocab, qwh_words=("who", "what"), aux_words=("is", "are")):
    qwh = {vocab.id_of(w) for w in qwh_words if w in vocab}
    aux = {vocab.id_of(w) for w in aux_words if w in vocab}
    oth = set(vocab.real_ids) - qwh - aux
    return CategoryPartition(
        vocab, [("[QWH]", qwh), ("[AUX]", aux), ("[OTH]", oth)], "[OTH]"
    )


def relaxed_question_constraints(beta=0.3):
    """First word QWH; auxiliary at position 2 xor 3."""
    return ConstraintSet(
        [
            Var(1, "[QWH]"),
            Or((
                And((Var(2, "[AUX]"), Not(Var(3, "[AUX]")))),
                And((Var(3, "[AUX]"), Not(Var(2, "[AUX]")))),
            )),
        ],
        beta=beta,
    )


@pytest.fixture
def qa_vocab():
    return Vocabulary(
        ["who", "what", "is", "are", "paris", "france", "fun", "good"]
    )


@pytest.fixture
def qa_partition(qa_vocab):
    return make_partition(qa_vocab)


@pytest.fixture
def qa_lm(qa_vocab):
    corpus = ["who is paris", "paris is fun", "what are france", "france is good"]
    return NGramModel.from_sentences(
        [tokenize(s, qa_vocab) for s in corpus], qa_vocab, order=2, add_k=0.3
    )


@pytest.fixture
def qa_constraints():
    return relaxed_question_constraints()


# small space for exhaustive proposal checks: 5 words, 3 categories
@pytest.fixture
def tiny_vocab():
    return Vocabulary(["who", "is", "paris", "fun", "good"])


@pytest.fixture
def tiny_partition(tiny_vocab):
    return make_partition(tiny_vocab, qwh_words=("who",), aux_words=("is",))


@pytest.fixture
def tiny_lm(tiny_vocab):
    corpus = ["who is paris", "paris is fun", "who is good"]
    return NGramModel.from_sentences(
        [tokenize(s, tiny_vocab) for s in corpus], tiny_vocab, order=2, add_k=0.3
    )


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
