"""Metropolis-Hastings over sentence states, for both proposal flavors.

The target is unnormalized: pi(x) = LM score * beta**violations * soft score,
kept in log space throughout.  A proposed move is accepted with probability
min{1, pi(x*) Q(x|x*) / (pi(x) Q(x*|x))}; moves whose inverse is not
expressible (reverse probability 0) are rejected outright, which keeps the
chain well-defined.

The single-edit baseline proposer (one replace/insert/delete drawn per step,
word filled from the whole vocabulary) lives here too, as does an exhaustive
enumeration of the target for toy spaces, used to validate stationarity.
"""

from __future__ import annotations

import itertools
import json
import math
from dataclasses import dataclass

import numpy as np

from .proposal import NEG_INF, ProposalRecord, TsmhProposer
from .soft import ConstantScore
from .templates import OP_DELETE, OP_INSERT, OP_REPLACE, Template
from .vocab import detokenize, tokenize, validate_sentence


class Target:
    """Unnormalized log target over sentences."""

    def __init__(self, partition, constraints, lm, soft=None):
        self.partition = partition
        self.constraints = constraints
        self.lm = lm
        self.soft = soft if soft is not None else ConstantScore()

    def log_pi(self, tokens):
        tokens = tuple(tokens)
        return (
            self.lm.sentence_logscore(tokens)
            + self.constraints.log_hard_score(tokens, self.partition)
            + self.soft.log_score(tokens)
        )

    def constraint_error(self, tokens):
        return self.constraints.constraint_error(tuple(tokens), self.partition)


def log_pi(tokens, lm, constraints, partition, soft=None):
    return Target(partition, constraints, lm, soft).log_pi(tokens)


class CgmhProposer:
    """Single-edit baseline: one position, one op, word from the full vocabulary.

    The record reuses the tree-search factor slots: log_p_pos is the position
    draw, log_p_group the op draw, log_p_fill the word draw, and
    log_p_template is 0 (there is no template stage).
    """

    OPS = (OP_REPLACE, OP_INSERT, OP_DELETE)

    def __init__(self, partition, constraints, lm, soft=None, max_len=16,
                 op_probs=(1 / 3, 1 / 3, 1 / 3)):
        if len(op_probs) != 3 or any(p < 0 for p in op_probs) or sum(op_probs) <= 0:
            raise ValueError("op_probs must be three non-negative weights")
        self.partition = partition
        self.constraints = constraints
        self.lm = lm
        self.soft = soft if soft is not None else ConstantScore()
        self.max_len = max_len
        self.op_probs = tuple(float(p) for p in op_probs)
        self._vocab = partition.vocab
        self._real = self._vocab.real_ids

    def _op_log_probs(self, m):
        """Validity-pruned op distribution: invalid ops are renormalized away."""
        weights = {
            OP_REPLACE: self.op_probs[0],
            OP_INSERT: self.op_probs[1] if m < self.max_len else 0.0,
            OP_DELETE: self.op_probs[2] if m > 1 else 0.0,
        }
        total = sum(weights.values())
        return {op: math.log(w / total) for op, w in weights.items() if w > 0}

    def _fill(self, work_tokens, index, rng=None, forced=None):
        vec = self.lm.fill_logprob_vector(tuple(work_tokens), index, self._real)
        if forced is not None:
            return forced, float(vec[self._real.index(forced)])
        u = rng.random()
        acc = 0.0
        probs = np.exp(vec)
        j = len(probs) - 1
        for i, p in enumerate(probs):
            acc += p
            if u < acc:
                j = i
                break
        return self._real[j], float(vec[j])

    def propose(self, tokens, rng):
        tokens = tuple(tokens)
        m = len(tokens)
        mask = self._vocab.mask_id
        log_p_pos = -math.log(m)
        pos = int(rng.integers(m)) + 1
        op_lps = self._op_log_probs(m)
        ordered = [op for op in self.OPS if op in op_lps]
        vec = np.array([op_lps[op] for op in ordered])
        u = rng.random()
        acc = 0.0
        op = ordered[-1]
        for name, p in zip(ordered, np.exp(vec)):
            acc += p
            if u < acc:
                op = name
                break
        log_p_op = op_lps[op]

        if op == OP_REPLACE:
            work = tokens[: pos - 1] + (mask,) + tokens[pos:]
            word, log_p_fill = self._fill(work, pos - 1, rng)
            x_star = tokens[: pos - 1] + (word,) + tokens[pos:]
            rev_lps = self._op_log_probs(m)
            rev_work = x_star[: pos - 1] + (mask,) + x_star[pos:]
            _, rev_fill = self._fill(rev_work, pos - 1, forced=tokens[pos - 1])
            log_q_reverse = -math.log(m) + rev_lps[OP_REPLACE] + rev_fill
        elif op == OP_INSERT:
            work = tokens[: pos - 1] + (mask,) + tokens[pos - 1:]
            word, log_p_fill = self._fill(work, pos - 1, rng)
            x_star = tokens[: pos - 1] + (word,) + tokens[pos - 1:]
            rev_lps = self._op_log_probs(m + 1)
            log_q_reverse = -math.log(m + 1) + rev_lps[OP_DELETE]
        else:  # OP_DELETE
            log_p_fill = 0.0
            x_star = tokens[: pos - 1] + tokens[pos:]
            if pos == m:
                # nothing to insert before: the inverse is not expressible
                log_q_reverse = NEG_INF
            else:
                rev_lps = self._op_log_probs(m - 1)
                rev_work = x_star[: pos - 1] + (mask,) + x_star[pos - 1:]
                _, rev_fill = self._fill(rev_work, pos - 1, forced=tokens[pos - 1])
                log_q_reverse = -math.log(m - 1) + rev_lps[OP_INSERT] + rev_fill

        log_q_forward = log_p_pos + log_p_op + log_p_fill
        return ProposalRecord(
            x=tokens,
            x_star=x_star,
            positions=(pos,),
            ops=((op, None),),
            template=Template(x_star, (pos,), ((op, None),)),
            log_p_pos=log_p_pos,
            log_p_group=log_p_op,
            log_p_template=0.0,
            log_p_fill=log_p_fill,
            log_q_forward=log_q_forward,
            log_q_reverse=log_q_reverse,
        )


@dataclass
class ChainConfig:
    """Declarative chain parameters; identical config + seed => identical trace."""

    method: str = "tsmh"
    k: int = 3
    steps: int = 100
    beta: float = 1e-10
    seed: int = 0
    max_len: int = 16
    init_keywords: tuple = ()
    init_text: str = ""
    neutral_token: str = "the"
    cgmh_op_probs: tuple = (1 / 3, 1 / 3, 1 / 3)

    def __post_init__(self):
        if self.steps < 1:
            raise ValueError("steps must be >= 1")
        if self.k < 1:
            raise ValueError("k must be >= 1")
        if self.method not in ("tsmh", "cgmh"):
            raise ValueError(f"unknown method {self.method!r}")


@dataclass
class HistoryEntry:
    step: int
    tokens: tuple
    log_pi: float
    accepted: bool
    log_accept: float
    constraint_error: int


@dataclass
class ChainResult:
    config: ChainConfig
    history: list
    init_tokens: tuple

    @property
    def best(self):
        """History state with the highest target value (earliest wins ties)."""
        best_entry = self.history[0]
        for e in self.history[1:]:
            if e.log_pi > best_entry.log_pi:
                best_entry = e
        return best_entry

    @property
    def valid_fraction(self):
        return sum(1 for e in self.history if e.constraint_error == 0) / len(self.history)

    @property
    def acceptance_rate(self):
        return sum(1 for e in self.history if e.accepted) / len(self.history)

    @property
    def mean_log_pi(self):
        return sum(e.log_pi for e in self.history) / len(self.history)

    def jsonl_lines(self, vocab):
        for e in self.history:
            yield json.dumps(
                {
                    "step": e.step,
                    "sentence": detokenize(e.tokens, vocab),
                    "log_pi": e.log_pi,
                    "accepted": e.accepted,
                    "log_A": e.log_accept,
                    "constraint_error": e.constraint_error,
                },
                ensure_ascii=False,
            )


def initial_sentence(config, vocab):
    """Keywords joined in input order, padded with the neutral token.

    Tree-search chains pad to length k, not just 2: position selection draws
    min(k, length) positions, so a start at full arity can reach any state
    within one move's reversible envelope, while shorter starts may only grow
    one word per move.
    """
    if config.init_text:
        tokens = tokenize(config.init_text, vocab)
    elif config.init_keywords:
        tokens = tuple(vocab.id_of(w) for w in config.init_keywords)
    else:
        tokens = (vocab.id_of(config.neutral_token),)  # keyword-free tasks
    min_len = max(2, config.k) if config.method == "tsmh" else 2
    if len(tokens) < min_len:
        pad = vocab.id_of(config.neutral_token)
        while len(tokens) < min_len:
            tokens = tokens + (pad,)
    validate_sentence(tokens, vocab, config.max_len)
    return tokens


def make_proposer(config, partition, constraints, lm, soft=None):
    if config.method == "tsmh":
        return TsmhProposer(
            partition, constraints, lm, soft=soft, k=config.k, max_len=config.max_len
        )
    return CgmhProposer(
        partition, constraints, lm, soft=soft,
        max_len=config.max_len, op_probs=config.cgmh_op_probs,
    )


def mh_step(tokens, log_pi_x, proposer, target, rng, step_index):
    """One accept/reject decision; returns (new tokens, new log pi, entry)."""
    record = proposer.propose(tokens, rng)
    if record.log_q_reverse == NEG_INF:
        log_accept = NEG_INF
        accepted = False
    else:
        log_pi_star = target.log_pi(record.x_star)
        log_accept = min(
            0.0,
            (log_pi_star + record.log_q_reverse)
            - (log_pi_x + record.log_q_forward),
        )
        accepted = rng.random() < math.exp(log_accept)
    if accepted:
        tokens = record.x_star
        log_pi_x = log_pi_star
    entry = HistoryEntry(
        step=step_index,
        tokens=tokens,
        log_pi=log_pi_x,
        accepted=accepted,
        log_accept=log_accept,
        constraint_error=target.constraint_error(tokens),
    )
    return tokens, log_pi_x, entry


def run_chain(config, partition, constraints, lm, soft=None, init_tokens=None):
    """Run the configured chain and return its full history.

    Randomness is consumed in a fixed documented order per step (positions,
    group, template, fills, accept draw), so a seed pins the whole trace.
    """
    vocab = partition.vocab
    target = Target(partition, constraints, lm, soft)
    proposer = make_proposer(config, partition, constraints, lm, soft)
    if init_tokens is None:
        init_tokens = initial_sentence(config, vocab)
    else:
        init_tokens = tuple(init_tokens)
        validate_sentence(init_tokens, vocab, config.max_len)
    rng = np.random.default_rng(config.seed)
    tokens = init_tokens
    log_pi_x = target.log_pi(tokens)
    history = []
    for step_index in range(1, config.steps + 1):
        tokens, log_pi_x, entry = mh_step(
            tokens, log_pi_x, proposer, target, rng, step_index
        )
        validate_sentence(tokens, vocab, config.max_len)
        history.append(entry)
    return ChainResult(config=config, history=history, init_tokens=init_tokens)


EXACT_MAX_VOCAB = 8
EXACT_MAX_LEN = 4


def exact_distribution(target, max_len):
    """Exhaustive normalized target over all sentences up to max_len.

    Only feasible on toy spaces; refuses anything beyond 8 legal words or
    length 4 (about 4.7k states).
    """
    vocab = target.partition.vocab
    if vocab.real_size > EXACT_MAX_VOCAB:
        raise ValueError(
            f"exact enumeration refused: {vocab.real_size} words > {EXACT_MAX_VOCAB}"
        )
    if max_len > EXACT_MAX_LEN:
        raise ValueError(f"exact enumeration refused: max_len {max_len} > {EXACT_MAX_LEN}")
    log_weights = {}
    for length in range(1, max_len + 1):
        for combo in itertools.product(vocab.real_ids, repeat=length):
            log_weights[combo] = target.log_pi(combo)
    values = np.array(list(log_weights.values()))
    m = values.max()
    norm = m + math.log(np.exp(values - m).sum())
    return {tokens: math.exp(lw - norm) for tokens, lw in log_weights.items()}


def total_variation(dist_a, dist_b):
    keys = set(dist_a) | set(dist_b)
    return 0.5 * sum(abs(dist_a.get(k, 0.0) - dist_b.get(k, 0.0)) for k in keys)


def empirical_distribution(histories):
    """Pooled state frequencies from one or more chain histories."""
    counts = {}
    total = 0
    for history in histories:
        for entry in history:
            counts[entry.tokens] = counts.get(entry.tokens, 0) + 1
            total += 1
    return {tokens: c / total for tokens, c in counts.items()}
