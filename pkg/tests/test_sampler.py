import itertools
import math
from collections import Counter

import numpy as np
import pytest

from tsmh.lm import NGramModel
from tsmh.logic import ConstraintSet, Var
from tsmh.proposal import NEG_INF, ProposalRecord
from tsmh.sampler import (
    ChainConfig,
    CgmhProposer,
    Target,
    empirical_distribution,
    exact_distribution,
    initial_sentence,
    log_pi,
    mh_step,
    run_chain,
    total_variation,
)
from tsmh.templates import OP_DELETE, OP_INSERT, OP_REPLACE, Template
from tsmh.vocab import Vocabulary, build_partition, tokenize
from conftest import make_partition, relaxed_question_constraints


class TestLogPi:
    def test_zero_error_unit_soft_equals_lm_score(self, tiny_vocab, tiny_partition, tiny_lm):
        cs = relaxed_question_constraints()
        x = tokenize("who is paris", tiny_vocab)
        assert cs.constraint_error(x, tiny_partition) == 0
        assert log_pi(x, tiny_lm, cs, tiny_partition) == pytest.approx(
            tiny_lm.sentence_logscore(x)
        )

    def test_each_violation_costs_log_beta(self, tiny_vocab, tiny_partition, tiny_lm):
        cs = relaxed_question_constraints(beta=0.3)
        x = tokenize("paris is fun", tiny_vocab)  # violates the QWH constraint only
        assert cs.constraint_error(x, tiny_partition) == 1
        assert log_pi(x, tiny_lm, cs, tiny_partition) == pytest.approx(
            tiny_lm.sentence_logscore(x) + math.log(0.3)
        )

    def test_matches_direct_recomputation_across_toy_space(
        self, tiny_vocab, tiny_partition, tiny_lm
    ):
        cs = relaxed_question_constraints(beta=0.3)
        target = Target(tiny_partition, cs, tiny_lm)
        for length in (1, 2, 3):
            for x in itertools.product(tiny_vocab.real_ids, repeat=length):
                direct = tiny_lm.sentence_logscore(x) + cs.constraint_error(
                    x, tiny_partition
                ) * math.log(0.3)
                assert target.log_pi(x) == pytest.approx(direct, rel=1e-12)


class _FixedProposer:
    """Always proposes the same move; for acceptance-frequency checks."""

    def __init__(self, record):
        self.record = record

    def propose(self, tokens, rng):
        rng.random()  # consume like a real proposer would
        return self.record


class TestMhStep:
    def setup_target(self):
        vocab = Vocabulary(["who", "is", "paris", "fun", "good"])
        part = make_partition(vocab, ("who",), ("is",))
        cs = relaxed_question_constraints(beta=0.3)
        lm = NGramModel.from_sentences(
            [tokenize("who is paris", vocab)], vocab, order=2, add_k=0.5
        )
        return vocab, Target(part, cs, lm)

    def fixed_record(self, vocab, target, x_text, y_text, lqf, lqr):
        x = tokenize(x_text, vocab)
        y = tokenize(y_text, vocab)
        return ProposalRecord(
            x=x, x_star=y, positions=(1,), ops=((OP_REPLACE, "[OTH]"),),
            template=Template(y), log_p_pos=0.0, log_p_group=0.0,
            log_p_template=0.0, log_p_fill=lqf, log_q_forward=lqf,
            log_q_reverse=lqr,
        )

    def test_uphill_move_always_accepted(self):
        vocab, target = self.setup_target()
        # moving to a much better state with symmetric proposal
        rec = self.fixed_record(vocab, target, "fun good paris", "who is paris", 0.0, 0.0)
        rng = np.random.default_rng(2)
        x = rec.x
        lp = target.log_pi(x)
        for _ in range(50):
            tokens, lp2, entry = mh_step(x, lp, _FixedProposer(rec), target, rng, 1)
            assert entry.accepted and entry.log_accept == 0.0

    def test_unreachable_reverse_always_rejected(self):
        vocab, target = self.setup_target()
        rec = self.fixed_record(vocab, target, "who is paris", "who is", 0.0, NEG_INF)
        rng = np.random.default_rng(3)
        tokens, lp, entry = mh_step(
            rec.x, target.log_pi(rec.x), _FixedProposer(rec), target, rng, 1
        )
        assert not entry.accepted
        assert entry.log_accept == NEG_INF
        assert tokens == rec.x

    def test_empirical_acceptance_matches_analytic_rate(self):
        vocab, target = self.setup_target()
        x = tokenize("who is paris", vocab)
        y = tokenize("who is fun", vocab)
        rec = self.fixed_record(vocab, target, "who is paris", "who is fun", 0.0, 0.0)
        expected = min(1.0, math.exp(target.log_pi(y) - target.log_pi(x)))
        assert 0.01 < expected < 0.99, "pick states with a non-trivial rate"
        rng = np.random.default_rng(4)
        trials = 100_000
        lp = target.log_pi(x)
        accepted = 0
        for _ in range(trials):
            _, _, entry = mh_step(x, lp, _FixedProposer(rec), target, rng, 1)
            accepted += entry.accepted
        sigma = math.sqrt(trials * expected * (1 - expected))
        assert abs(accepted - trials * expected) < 3 * sigma

    def test_single_delete_from_fluent_sentence_is_barely_acceptable(self):
        """Dropping a word from a well-attested sentence faces a huge barrier."""
        vocab = Vocabulary(
            ["paris", "is", "located", "in", "france", "who", "what", "are"]
        )
        part = make_partition(vocab)
        cs = relaxed_question_constraints(beta=1e-10)
        corpus = ["paris is located in france"] * 50 + ["who is paris", "what are france"]
        lm = NGramModel.from_sentences(
            [tokenize(s, vocab) for s in corpus], vocab, order=3, add_k=0.01
        )
        target = Target(part, cs, lm)
        prop = CgmhProposer(part, cs, lm, max_len=8)
        x = tokenize("paris is located in france", vocab)
        fragment = tokenize("paris located in france", vocab)
        # analytic acceptance of the delete move x -> fragment
        lqf = -math.log(len(x)) + prop._op_log_probs(len(x))[OP_DELETE]
        work = fragment[:1] + (vocab.mask_id,) + fragment[1:]
        vec = lm.fill_logprob_vector(work, 1, vocab.real_ids)
        lqr = (
            -math.log(len(fragment))
            + prop._op_log_probs(len(fragment))[OP_INSERT]
            + float(vec[vocab.real_ids.index(vocab.id_of("is"))])
        )
        log_A = min(0.0, target.log_pi(fragment) + lqr - target.log_pi(x) - lqf)
        assert math.exp(log_A) < 1e-3


class TestCgmh:
    def build(self, max_len=3):
        vocab = Vocabulary(["who", "is", "paris", "fun", "good"])
        part = make_partition(vocab, ("who",), ("is",))
        cs = relaxed_question_constraints(beta=0.3)
        lm = NGramModel.from_sentences(
            [tokenize("who is paris", vocab), tokenize("paris is fun", vocab)],
            vocab, order=2, add_k=0.3,
        )
        return vocab, part, cs, lm, CgmhProposer(part, cs, lm, max_len=max_len)

    def test_length_one_never_deletes(self):
        vocab, part, cs, lm, prop = self.build()
        assert OP_DELETE not in prop._op_log_probs(1)
        rng = np.random.default_rng(5)
        x = (vocab.id_of("paris"),)
        for _ in range(200):
            rec = prop.propose(x, rng)
            assert len(rec.x_star) >= 1

    def test_max_len_never_inserts(self):
        vocab, part, cs, lm, prop = self.build(max_len=3)
        assert OP_INSERT not in prop._op_log_probs(3)
        rng = np.random.default_rng(6)
        x = tokenize("who is paris", vocab)
        for _ in range(200):
            rec = prop.propose(x, rng)
            assert len(rec.x_star) <= 3

    def test_replace_reverse_uses_original_word_fill(self):
        vocab, part, cs, lm, prop = self.build()
        rng = np.random.default_rng(7)
        x = tokenize("paris is fun", vocab)
        checked = 0
        for _ in range(300):
            rec = prop.propose(x, rng)
            if rec.ops[0][0] != OP_REPLACE:
                continue
            pos = rec.positions[0]
            work = rec.x_star[: pos - 1] + (vocab.mask_id,) + rec.x_star[pos:]
            vec = lm.fill_logprob_vector(work, pos - 1, vocab.real_ids)
            expected = (
                -math.log(3)
                + prop._op_log_probs(3)[OP_REPLACE]
                + float(vec[vocab.real_ids.index(x[pos - 1])])
            )
            assert rec.log_q_reverse == pytest.approx(expected, rel=1e-12)
            checked += 1
        assert checked > 30

    def test_proposal_normalizes_by_enumeration(self):
        vocab, part, cs, lm, prop = self.build()
        for x_text in ["who is", "paris is fun", "good"]:
            x = tokenize(x_text, vocab)
            m = len(x)
            total = 0.0
            op_lps = prop._op_log_probs(m)
            for pos in range(1, m + 1):
                for op, lp_op in op_lps.items():
                    if op == OP_DELETE:
                        total += math.exp(-math.log(m) + lp_op)
                        continue
                    if op == OP_REPLACE:
                        work = x[: pos - 1] + (vocab.mask_id,) + x[pos:]
                    else:
                        work = x[: pos - 1] + (vocab.mask_id,) + x[pos - 1:]
                    vec = lm.fill_logprob_vector(work, pos - 1, vocab.real_ids)
                    total += sum(
                        math.exp(-math.log(m) + lp_op + float(v)) for v in vec
                    )
            assert total == pytest.approx(1.0, abs=1e-9)


class TestRunChain:
    def test_one_step_history(self, tiny_vocab, tiny_partition, tiny_lm):
        cs = relaxed_question_constraints()
        cfg = ChainConfig(method="tsmh", k=2, steps=1, beta=0.3, seed=0,
                          max_len=3, init_text="who is")
        res = run_chain(cfg, tiny_partition, cs, tiny_lm)
        assert len(res.history) == 1

    def test_fixed_seed_reproduces_jsonl_bytes(self, tiny_vocab, tiny_partition, tiny_lm):
        cs = relaxed_question_constraints()
        cfg = ChainConfig(method="tsmh", k=2, steps=40, beta=0.3, seed=7,
                          max_len=3, init_text="who is")
        a = "\n".join(run_chain(cfg, tiny_partition, cs, tiny_lm).jsonl_lines(tiny_vocab))
        b = "\n".join(run_chain(cfg, tiny_partition, cs, tiny_lm).jsonl_lines(tiny_vocab))
        assert a.encode() == b.encode()

    def test_history_states_always_valid(self, tiny_vocab, tiny_partition, tiny_lm):
        cs = relaxed_question_constraints()
        for method in ("tsmh", "cgmh"):
            cfg = ChainConfig(method=method, k=2, steps=300, beta=0.3, seed=9,
                              max_len=3, init_text="who is")
            res = run_chain(cfg, tiny_partition, cs, tiny_lm)
            for e in res.history:
                assert 1 <= len(e.tokens) <= 3
                assert tiny_vocab.mask_id not in e.tokens
                assert math.isfinite(e.log_pi)

    def test_metrics_derive_from_history(self, tiny_vocab, tiny_partition, tiny_lm):
        cs = relaxed_question_constraints()
        cfg = ChainConfig(method="cgmh", steps=100, beta=0.3, seed=3,
                          max_len=3, init_text="who is")
        res = run_chain(cfg, tiny_partition, cs, tiny_lm)
        assert res.valid_fraction == pytest.approx(
            sum(e.constraint_error == 0 for e in res.history) / 100
        )
        assert res.acceptance_rate == pytest.approx(
            sum(e.accepted for e in res.history) / 100
        )
        best = max(res.history, key=lambda e: e.log_pi)
        assert res.best.log_pi == best.log_pi

    def test_initial_sentence_padding(self, tiny_vocab):
        # tree-search chains pad to k so the first move has full arity
        cfg = ChainConfig(method="tsmh", k=3, steps=1, init_keywords=("paris",),
                          neutral_token="fun", max_len=4)
        tokens = initial_sentence(cfg, tiny_vocab)
        fun = tiny_vocab.id_of("fun")
        assert tokens == (tiny_vocab.id_of("paris"), fun, fun)
        cfg = ChainConfig(method="cgmh", steps=1, init_keywords=("paris",),
                          neutral_token="fun", max_len=4)
        assert initial_sentence(cfg, tiny_vocab) == (tiny_vocab.id_of("paris"), fun)


class TestExactDistribution:
    def test_uniform_lm_no_constraints_uniform_within_length(self):
        vocab = Vocabulary(["a", "b", "c"])
        part = build_partition(
            {"categories": [{"name": "[OTH]", "residual": True}]}, vocab
        )
        cs = ConstraintSet([], beta=0.5)
        lm = NGramModel(vocab, order=2)
        dist = exact_distribution(Target(part, cs, lm), max_len=2)
        by_len = {}
        for tokens, p in dist.items():
            by_len.setdefault(len(tokens), []).append(p)
        for probs in by_len.values():
            assert max(probs) == pytest.approx(min(probs), rel=1e-9)

    def test_small_beta_concentrates_on_satisfying_states(self):
        vocab = Vocabulary(["who", "is", "fun"])
        part = make_partition(vocab, ("who",), ("is",))
        lm = NGramModel(vocab, order=2)
        cs = ConstraintSet([Var(1, "[QWH]")], beta=1e-6)
        dist = exact_distribution(Target(part, cs, lm), max_len=3)
        good = sum(p for t, p in dist.items() if t[0] == vocab.id_of("who"))
        assert good > 1 - 1e-4

    def test_refuses_oversized_spaces(self):
        vocab = Vocabulary([f"w{i}" for i in range(9)])
        part = build_partition(
            {"categories": [{"name": "[OTH]", "residual": True}]}, vocab
        )
        cs = ConstraintSet([], beta=0.5)
        lm = NGramModel(vocab, order=2)
        with pytest.raises(ValueError, match="refused"):
            exact_distribution(Target(part, cs, lm), max_len=2)
        vocab2 = Vocabulary(["a", "b"])
        part2 = build_partition(
            {"categories": [{"name": "[OTH]", "residual": True}]}, vocab2
        )
        lm2 = NGramModel(vocab2, order=2)
        with pytest.raises(ValueError, match="refused"):
            exact_distribution(Target(part2, cs, lm2), max_len=5)


class TestDistributionHelpers:
    def test_total_variation_bounds(self):
        a = {1: 0.5, 2: 0.5}
        b = {1: 0.5, 2: 0.5}
        assert total_variation(a, b) == 0.0
        c = {3: 1.0}
        assert total_variation(a, c) == pytest.approx(1.0)

    def test_empirical_counts(self):
        class E:
            def __init__(self, tokens):
                self.tokens = tokens

        hist = [[E((1,)), E((1,)), E((2,))]]
        dist = empirical_distribution(hist)
        assert dist[(1,)] == pytest.approx(2 / 3)
        assert dist[(2,)] == pytest.approx(1 / 3)
