import math

import pytest

from tsmh.logic import eval_sentence, keyword_exactly_once
from tsmh.soft import ConstantScore, SentimentScore, SimilarityScore
from tsmh.tasks import (
    ConfigError,
    TaskSpec,
    build_task,
    make_chain_config,
    validate_config,
)
from tsmh.tasks import _data_file
from tsmh.vocab import Vocabulary, load_vocabulary

DATA_VOCAB = str(_data_file("vocab_5k.txt"))


def write_config(tmp_path, body):
    p = tmp_path / "task.toml"
    p.write_text(body, encoding="utf-8")
    return p


MINIMAL = f"""
[task]
kind = "interrogative"
vocab = "{DATA_VOCAB}"
"""


class TestValidateConfig:
    def test_minimal_config_gets_protocol_defaults(self, tmp_path):
        spec = validate_config(write_config(tmp_path, MINIMAL))
        assert spec.k == 3
        assert spec.tsmh_steps == 100
        assert spec.cgmh_steps == 300
        assert spec.beta == 1e-10
        assert spec.max_len == 16
        assert spec.strict is True

    def test_unknown_key_named_in_error(self, tmp_path):
        bad = MINIMAL + "\n[chain]\nstepz = 100\n"
        with pytest.raises(ConfigError, match=r"\[chain\].stepz"):
            validate_config(write_config(tmp_path, bad))

    def test_type_error_is_path_annotated(self, tmp_path):
        bad = MINIMAL + "\n[chain]\nk = \"three\"\n"
        with pytest.raises(ConfigError, match=r"\[chain\].k"):
            validate_config(write_config(tmp_path, bad))

    def test_missing_vocab_file_rejected(self, tmp_path):
        bad = "[task]\nkind = \"interrogative\"\nvocab = \"nope.txt\"\n"
        with pytest.raises(ConfigError, match="not found"):
            validate_config(write_config(tmp_path, bad))

    def test_beta_bounds_checked(self, tmp_path):
        bad = MINIMAL + "\n[chain]\nbeta = 1.0\n"
        with pytest.raises(ConfigError, match=r"\[chain\].beta"):
            validate_config(write_config(tmp_path, bad))

    def test_relative_paths_resolve_against_config_dir(self, tmp_path):
        vocab = tmp_path / "v.txt"
        vocab.write_text("a\nb\n", encoding="utf-8")
        spec = validate_config(
            write_config(tmp_path, '[task]\nkind = "custom"\nvocab = "v.txt"\nformulas = ["w1[OTH]"]\n')
        )
        assert spec.vocab_path == str(vocab)

    def test_golden_resolution(self, tmp_path):
        """Full config resolves to exactly this spec."""
        body = f"""
[task]
kind = "interrogative"
keywords = ["museum", "ocean"]
strict = false
vocab = "{DATA_VOCAB}"

[chain]
k = 2
tsmh_steps = 50
cgmh_steps = 150
beta = 0.01
seed = 11
max_len = 10
neutral_token = "a"

[lm]
order = 2
"""
        path = write_config(tmp_path, body)
        spec = validate_config(path)
        golden = TaskSpec(
            kind="interrogative",
            keywords=("museum", "ocean"),
            strict=False,
            vocab_path=DATA_VOCAB,
            categories_path=None,
            pos_lexicon_path=None,
            formulas=(),
            similarity={},
            sentiment={},
            k=2,
            tsmh_steps=50,
            cgmh_steps=150,
            beta=0.01,
            seed=11,
            max_len=10,
            neutral_token="a",
            lm="",
            ngram_order=2,
            config_sha256=spec.config_sha256,
        )
        assert spec == golden


class TestBuildTask:
    def spec(self, tmp_path, **overrides):
        spec = validate_config(write_config(tmp_path, MINIMAL))
        if overrides:
            import dataclasses

            spec = dataclasses.replace(spec, **overrides)
        return spec

    def test_interrogative_partition_shape(self, tmp_path):
        spec = self.spec(tmp_path)
        vocab = load_vocabulary(spec.vocab_path)
        partition, constraints, soft = build_task(spec, vocab, keywords=("museum",))
        assert partition.names == ("[QWH]", "[AUX]", "[K:museum]", "[OTH]")
        assert partition.verify()
        assert isinstance(soft, ConstantScore)
        # strict interrogative: 2 base + 2 exactly-once + 1 keyword-once
        assert len(constraints.formulas) == 5

    def test_interrogative_keyword_formula_is_exactly_once_when_strict(self, tmp_path):
        spec = self.spec(tmp_path)
        vocab = load_vocabulary(spec.vocab_path)
        _, constraints, _ = build_task(spec, vocab, keywords=("museum",))
        kw_formula = constraints.formulas[-1]
        assert kw_formula == keyword_exactly_once("museum", spec.max_len)

    def test_oov_keyword_rejected(self, tmp_path):
        spec = self.spec(tmp_path)
        vocab = load_vocabulary(spec.vocab_path)
        with pytest.raises(ConfigError, match="zzz"):
            build_task(spec, vocab, keywords=("zzz",))

    def test_imperative_needs_pos_lexicon(self, tmp_path):
        body = f'[task]\nkind = "imperative"\nvocab = "{DATA_VOCAB}"\npos_lexicon = "missing.tsv"\n'
        with pytest.raises(ConfigError, match="pos_lexicon"):
            validate_config(write_config(tmp_path, body))

    def test_imperative_builds_verb_adv_partition(self, tmp_path):
        body = f'[task]\nkind = "imperative"\nvocab = "{DATA_VOCAB}"\n'
        spec = validate_config(write_config(tmp_path, body))
        vocab = load_vocabulary(spec.vocab_path)
        partition, constraints, _ = build_task(spec, vocab, keywords=("river",))
        assert partition.names == ("[VERB]", "[ADV]", "[K:river]", "[OTH]")
        run = vocab.id_of("run")
        assert partition.category_of(run) == "[VERB]"
        cmd = (run, vocab.id_of("the"), vocab.id_of("river"))
        assert constraints.constraint_error(cmd, partition) == 0

    def test_sentiment_task_gets_lexicon_scorer(self, tmp_path):
        body = f'[task]\nkind = "sentiment"\nkeywords = ["river"]\nvocab = "{DATA_VOCAB}"\n'
        spec = validate_config(write_config(tmp_path, body))
        vocab = load_vocabulary(spec.vocab_path)
        partition, constraints, soft = build_task(spec, vocab)
        assert isinstance(soft, SentimentScore)
        good = (vocab.id_of("river"), vocab.id_of("is"), vocab.id_of("wonderful"))
        bad = (vocab.id_of("river"), vocab.id_of("is"), vocab.id_of("awful"))
        assert soft.score(good) > 0.5 > soft.score(bad)
        # keywords are the hard constraints here
        assert constraints.constraint_error(good, partition) == 0

    def test_custom_kind_parses_dsl_formulas(self, tmp_path):
        body = f"""
[task]
kind = "custom"
vocab = "{DATA_VOCAB}"
formulas = ["w1[OTH] & !w2[OTH]", "w1[K:river] | w2[K:river]"]
keywords = ["river"]
"""
        spec = validate_config(write_config(tmp_path, body))
        vocab = load_vocabulary(spec.vocab_path)
        partition, constraints, _ = build_task(spec, vocab)
        # two config formulas plus the keyword constraint
        assert len(constraints.formulas) == 3

    def test_custom_unknown_category_in_formula(self, tmp_path):
        body = f'[task]\nkind = "custom"\nvocab = "{DATA_VOCAB}"\nformulas = ["w1[NOPE]"]\n'
        spec = validate_config(write_config(tmp_path, body))
        vocab = load_vocabulary(spec.vocab_path)
        from tsmh.logic import FormulaError

        with pytest.raises(FormulaError, match="NOPE"):
            build_task(spec, vocab)

    def test_similarity_soft_config(self, tmp_path):
        emb = tmp_path / "emb.txt"
        emb.write_text("river 1.0 0.0\nocean 0.9 0.1\n", encoding="utf-8")
        body = f"""
[task]
kind = "interrogative"
vocab = "{DATA_VOCAB}"

[soft.similarity]
reference = "river ocean"
embeddings = "{emb}"
mode = "min"
"""
        spec = validate_config(write_config(tmp_path, body))
        vocab = load_vocabulary(spec.vocab_path)
        _, _, soft = build_task(spec, vocab)
        assert isinstance(soft, SimilarityScore)
        assert soft.mode == "min"

    def test_chain_config_steps_follow_method(self, tmp_path):
        spec = self.spec(tmp_path)
        t = make_chain_config(spec, "tsmh", keywords=("museum",))
        c = make_chain_config(spec, "cgmh", keywords=("museum",))
        assert (t.steps, c.steps) == (100, 300)
        assert t.k == 3

    def test_partition_axioms_for_every_kind(self, tmp_path):
        vocab = load_vocabulary(DATA_VOCAB)
        for kind, extra in [
            ("interrogative", ""),
            ("imperative", ""),
            ("sentiment", 'keywords = ["river"]'),
        ]:
            body = f'[task]\nkind = "{kind}"\n{extra}\nvocab = "{DATA_VOCAB}"\n'
            spec = validate_config(write_config(tmp_path, body))
            partition, constraints, _ = build_task(spec, vocab, keywords=("river",))
            assert partition.verify()
            assert 0 < constraints.beta < 1
