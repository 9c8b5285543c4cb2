import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from tsmh.soft import (
    ConstantScore,
    EmbeddingTable,
    SentimentLexicon,
    SentimentScore,
    SimilarityScore,
    SoftConstraintError,
    compose,
    similarity_score,
)
from tsmh.vocab import Vocabulary


def toy_table():
    # three directions plus a zero vector
    return EmbeddingTable(
        {
            "cat": [1.0, 0.0, 0.0],
            "dog": [0.8, 0.6, 0.0],
            "car": [0.0, 1.0, 0.0],
            "sky": [0.0, 0.0, 1.0],
            "nul": [0.0, 0.0, 0.0],
        }
    )


def toy_vocab():
    return Vocabulary(["cat", "dog", "car", "sky", "nul", "oov"])


class TestEmbeddingTable:
    def test_dimension_mismatch_rejected(self):
        with pytest.raises(SoftConstraintError, match="dimension"):
            EmbeddingTable({"a": [1.0, 0.0], "b": [1.0]})

    def test_nan_rejected(self):
        with pytest.raises(SoftConstraintError, match="NaN"):
            EmbeddingTable({"a": [float("nan"), 0.0]})

    def test_load_word2vec_text(self, tmp_path):
        p = tmp_path / "emb.txt"
        p.write_text("cat 1.0 0.0\ndog 0.5 0.5\n", encoding="utf-8")
        table = EmbeddingTable.load(p)
        assert table.dimension == 2
        assert np.allclose(table.vectors["dog"], [0.5, 0.5])


class TestSimilarity:
    def test_self_similarity_is_one(self):
        vocab = toy_vocab()
        table = toy_table()
        x = (vocab.id_of("cat"), vocab.id_of("sky"))
        assert similarity_score(x, x, table, vocab, mode="avg") == pytest.approx(1.0)
        assert similarity_score(x, x, table, vocab, mode="min") == pytest.approx(1.0)

    def test_orthogonal_avg_is_half(self):
        vocab = toy_vocab()
        table = toy_table()
        x = (vocab.id_of("cat"),)
        y = (vocab.id_of("car"),)
        # cosine 0 maps to 0.5 under the affine [-1,1] -> [0,1] map
        assert similarity_score(x, y, table, vocab, mode="avg") == pytest.approx(0.5)

    def test_matches_bruteforce_oracle_min_mode(self):
        vocab = toy_vocab()
        table = toy_table()
        x = tuple(vocab.id_of(w) for w in ("cat", "dog", "sky"))
        y = tuple(vocab.id_of(w) for w in ("dog", "car"))
        # independent oracle: explicit normalized dot products
        expected_per_word = []
        for wx in ("cat", "dog", "sky"):
            vx = np.array(table.vectors[wx], dtype=float)
            best = max(
                float(np.dot(vx, np.array(table.vectors[wy])))
                / (np.linalg.norm(vx) * np.linalg.norm(table.vectors[wy]))
                for wy in ("dog", "car")
            )
            expected_per_word.append((best + 1) / 2)
        assert similarity_score(x, y, table, vocab, mode="min") == pytest.approx(
            min(expected_per_word)
        )
        assert similarity_score(x, y, table, vocab, mode="avg") == pytest.approx(
            sum(expected_per_word) / len(expected_per_word)
        )

    def test_zero_norm_and_missing_words_skipped(self):
        vocab = toy_vocab()
        table = toy_table()
        x = tuple(vocab.id_of(w) for w in ("nul", "cat"))
        y = (vocab.id_of("cat"),)
        assert similarity_score(x, y, table, vocab) == pytest.approx(1.0)
        # nothing embeddable on either side -> 0
        assert similarity_score((vocab.id_of("oov"),), y, table, vocab) == 0.0
        assert similarity_score(x, (vocab.id_of("nul"),), table, vocab) == 0.0

    def test_scorer_wrapper(self):
        vocab = toy_vocab()
        table = toy_table()
        scorer = SimilarityScore((vocab.id_of("cat"),), table, vocab, mode="avg")
        assert scorer.score((vocab.id_of("cat"),)) == pytest.approx(1.0)


class TestSentiment:
    def test_neutral_sentence_is_half(self):
        vocab = Vocabulary(["bland", "words"])
        lex = SentimentLexicon({})
        scorer = SentimentScore(lex, vocab)
        assert scorer.score(
            (vocab.id_of("bland"), vocab.id_of("words"))
        ) == pytest.approx(0.5)

    def test_good_good_matches_direct_formula(self):
        vocab = Vocabulary(["good"])
        lex = SentimentLexicon({"good": 1.0})
        scorer = SentimentScore(lex, vocab)
        expected = 1.0 / (1.0 + math.exp(-2.0 / math.sqrt(2.0)))
        tokens = (vocab.id_of("good"), vocab.id_of("good"))
        assert scorer.score(tokens) == pytest.approx(expected, rel=1e-12)

    def test_negative_target_complements(self):
        vocab = Vocabulary(["good"])
        lex = SentimentLexicon({"good": 1.0})
        pos = SentimentScore(lex, vocab, target="positive")
        neg = SentimentScore(lex, vocab, target="negative")
        tokens = (vocab.id_of("good"),)
        assert neg.score(tokens) == pytest.approx(1.0 - pos.score(tokens))

    def test_lexicon_file_parsing(self, tmp_path):
        p = tmp_path / "lex.tsv"
        p.write_text("good\t1.0\nbad\t-1.0\n", encoding="utf-8")
        lex = SentimentLexicon.load(p)
        assert lex.polarity == {"good": 1.0, "bad": -1.0}
        bad = tmp_path / "bad.tsv"
        bad.write_text("good 1.0\n", encoding="utf-8")
        with pytest.raises(SoftConstraintError, match="bad.tsv:1"):
            SentimentLexicon.load(bad)


class TestCompose:
    def test_empty_composition_is_constant_one(self):
        scorer = compose([])
        assert scorer.score((0, 1, 2)) == 1.0

    def test_constant_identity(self):
        vocab = Vocabulary(["good"])
        s = SentimentScore(SentimentLexicon({"good": 1.0}), vocab)
        combined = compose([ConstantScore(1.0), s])
        tokens = (vocab.id_of("good"),)
        assert combined.score(tokens) == pytest.approx(s.score(tokens))

    def test_product(self):
        combined = compose([ConstantScore(0.5), ConstantScore(0.5)])
        assert combined.score((0,)) == pytest.approx(0.25)

    def test_associative_and_order_independent(self):
        parts = [ConstantScore(0.3), ConstantScore(0.7), ConstantScore(0.9)]
        a = compose([compose(parts[:2]), parts[2]]).score((0,))
        b = compose([parts[0], compose(parts[1:])]).score((0,))
        c = compose(parts[::-1]).score((0,))
        assert abs(a - b) < 1e-12 and abs(a - c) < 1e-12


class TestRangeProperty:
    @settings(max_examples=60, deadline=None)
    @given(
        tokens=st.lists(st.integers(min_value=0, max_value=4), min_size=1, max_size=6),
        polarity=st.floats(min_value=-3, max_value=3, allow_nan=False),
    )
    def test_all_scorers_stay_in_unit_interval(self, tokens, polarity):
        vocab = toy_vocab()
        tokens = tuple(t for t in tokens)
        scorers = [
            ConstantScore(1.0),
            SimilarityScore((vocab.id_of("cat"),), toy_table(), vocab, mode="min"),
            SimilarityScore((vocab.id_of("dog"),), toy_table(), vocab, mode="avg"),
            SentimentScore(SentimentLexicon({"cat": polarity}), vocab),
        ]
        for s in scorers + [compose(scorers)]:
            value = s.score(tokens)
            assert 0.0 <= value <= 1.0
