"""Tree-search proposal over multi-word edit templates.

One proposal from sentence x factors into four draws, each a normalized
distribution, so the move probability Q(x*|x) is an exact product:

1. position -- a uniform k-subset of x's positions (k capped at len(x)).
2. group -- enumerate every (op, category) combination at the chosen
   positions into templates, group them by how many hard constraints they
   violate, and pick a group with geometrically decaying weight in the
   violation count (normalized over the groups that actually exist).
3. template -- within the group, pick a template proportionally to a
   deterministic proxy score: language-model score times soft score of the
   template's greedy (argmax) fill.  Using the greedy fill rather than a
   sampled one keeps this factor a function of the template alone, which
   makes both directions of the move probability exactly computable.
4. fill -- sample the chosen template's placeholders left-to-right from the
   fill distribution restricted to each placeholder's category.

The reverse probability maps each edit to its inverse (insert<->delete at
the image position, replace<->replace with the displaced word's category)
and re-runs steps 1-4 at the proposed sentence.  Moves whose inverse is not
expressible as a single move of the same arity get reverse probability 0 and
are auto-rejected by the sampler; the identity move (all ops "none") is
never pruned, which keeps the chain irreducible.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, replace

import numpy as np

from .lm import _logsumexp
from .soft import ConstantScore
from .templates import (
    OP_DELETE,
    OP_INSERT,
    OP_NONE,
    OP_REPLACE,
    Template,
    apply_ops,
)

NEG_INF = float("-inf")


@dataclass(frozen=True)
class ProposalRecord:
    """One proposed move with its factor probabilities, all in log space."""

    x: tuple
    x_star: tuple
    positions: tuple
    ops: tuple
    template: Template
    log_p_pos: float
    log_p_group: float
    log_p_template: float
    log_p_fill: float
    log_q_forward: float
    log_q_reverse: float


@dataclass(frozen=True)
class ReverseEvent:
    """The inverse move expressed as an event at x_star."""

    positions: tuple
    ops: tuple
    template: Template


def select_positions(m, k, rng):
    """Uniform k-subset of {1..m} (k' = min(k, m)); returns (positions, log P)."""
    k_eff = min(k, m)
    chosen = rng.choice(m, size=k_eff, replace=False)
    positions = tuple(sorted(int(i) + 1 for i in chosen))
    return positions, -math.log(math.comb(m, k_eff))


def group_log_probs(errors, beta):
    """Normalized geometric group weights over the realized error values.

    Raw weight (1-beta)*beta**(C - Cmin) per group, renormalized so the
    realized groups form a distribution; ratios between groups match the raw
    geometric series.
    """
    errors = sorted(errors)
    log_beta = math.log(beta)
    emin = errors[0]
    lws = [math.log1p(-beta) + (e - emin) * log_beta for e in errors]
    norm = _logsumexp(np.array(lws))
    return {e: lw - norm for e, lw in zip(errors, lws)}


def _sample_index(log_probs, rng):
    u = rng.random()
    acc = 0.0
    probs = np.exp(log_probs)
    for i, p in enumerate(probs):
        acc += p
        if u < acc:
            return i
    return len(probs) - 1


class _ScoredEnumeration:
    """Templates for one (sentence, positions) pair, grouped and lazily scored."""

    __slots__ = ("raw_count", "groups", "errors", "by_slots", "proxies", "group_lse")

    def __init__(self, raw_count, groups):
        self.raw_count = raw_count
        self.groups = groups  # error -> [Template]
        self.errors = sorted(groups)
        self.by_slots = {
            t.slots: (e, t) for e, ts in groups.items() for t in ts
        }
        self.proxies = {}  # error -> np.array aligned with groups[error]
        self.group_lse = {}


class TsmhProposer:
    """Bundles the partition, constraints and backends behind propose()."""

    def __init__(self, partition, constraints, lm, soft=None, k=3, max_len=16):
        if k < 1:
            raise ValueError("k must be >= 1")
        self.partition = partition
        self.constraints = constraints
        self.lm = lm
        self.soft = soft if soft is not None else ConstantScore()
        self.k = k
        self.max_len = max_len
        cats = tuple(partition.names)
        # op order fixes which provenance survives template deduplication
        self.ops = (
            [(OP_NONE, None)]
            + [(OP_REPLACE, c) for c in cats]
            + [(OP_DELETE, None)]
            + [(OP_INSERT, c) for c in cats]
        )
        self._mask_id = partition.vocab.mask_id
        self._proxy_cache = {}
        self._enum_cache = {}

    # -- enumeration ---------------------------------------------------------

    def enumerate_templates(self, tokens, positions):
        """Depth-first walk of all (2|V|+2)^k op combinations.

        Returns ([(template, error)] over distinct surviving templates,
        raw combination count).  Pruned as useless: ill-formed results
        (emptied sentence, length above max_len, placeholder over an empty
        category) and moves whose inverse is structurally inexpressible --
        those would be auto-rejected no matter the fill, and keeping them can
        trap the chain proposing unusable constraint-optimal templates.
        Duplicates keep the first provenance in op order; the all-none
        identity template always survives.
        """
        tokens = tuple(tokens)
        k_eff = len(positions)
        raw_count = 0
        seen = {}
        order = []
        assign = [None] * k_eff
        ops_list = self.ops
        empty_cats = {
            name for name in self.partition.names if not self.partition.members(name)
        }

        def descend(depth):
            nonlocal raw_count
            if depth == k_eff:
                raw_count += 1
                if empty_cats and any(
                    cat in empty_cats for _kind, cat in assign if cat is not None
                ):
                    return
                slots = apply_ops(tokens, positions, tuple(assign))
                if slots is None or len(slots) > self.max_len:
                    return
                if slots not in seen:
                    ops_now = tuple(assign)
                    if self.derive_reverse_ops(tokens, positions, ops_now, len(slots)) is None:
                        seen[slots] = None
                        return
                    t = Template(slots, tuple(positions), ops_now)
                    seen[slots] = t
                    order.append(t)
                return
            for op in ops_list:
                assign[depth] = op
                descend(depth + 1)

        descend(0)
        pairs = [
            (t, self.constraints.template_error(t, self.partition)) for t in order
        ]
        return pairs, raw_count

    def _scored_enumeration(self, tokens, positions):
        key = (tuple(tokens), tuple(positions))
        hit = self._enum_cache.get(key)
        if hit is not None:
            return hit
        pairs, raw_count = self.enumerate_templates(tokens, positions)
        groups = {}
        for t, e in pairs:
            groups.setdefault(e, []).append(t)
        enum = _ScoredEnumeration(raw_count, groups)
        if len(self._enum_cache) >= 512:
            self._enum_cache.clear()
        self._enum_cache[key] = enum
        return enum

    # -- proxy scores ---------------------------------------------------------

    def greedy_fill(self, template):
        """Fill placeholders left-to-right with the argmax candidate."""
        slots = template.slots
        work = [self._mask_id if isinstance(s, str) else s for s in slots]
        for i, s in enumerate(slots):
            if not isinstance(s, str):
                continue
            cands = self.partition.sorted_members(s)
            vec = self.lm.fill_logprob_vector(tuple(work), i, cands)
            work[i] = cands[int(np.argmax(vec))]
        return tuple(work)

    def proxy_log_score(self, template):
        """Deterministic template score: LM * soft of the greedy fill."""
        hit = self._proxy_cache.get(template.slots)
        if hit is None:
            filled = self.greedy_fill(template)
            hit = self.lm.sentence_logscore(filled) + self.soft.log_score(filled)
            if len(self._proxy_cache) >= 100_000:
                self._proxy_cache.clear()
            self._proxy_cache[template.slots] = hit
        return hit

    def _group_scores(self, enum, error):
        proxies = enum.proxies.get(error)
        if proxies is None:
            proxies = np.array(
                [self.proxy_log_score(t) for t in enum.groups[error]]
            )
            if not np.all(np.isfinite(proxies)):
                raise AssertionError("template proxy score is not finite")
            enum.proxies[error] = proxies
            enum.group_lse[error] = _logsumexp(proxies)
        return proxies, enum.group_lse[error]

    # -- move factors ---------------------------------------------------------

    def select_group(self, enum, rng):
        lps = group_log_probs(enum.errors, self.constraints.beta)
        ordered = enum.errors
        vec = np.array([lps[e] for e in ordered])
        idx = _sample_index(vec, rng)
        return ordered[idx], float(vec[idx])

    def select_template(self, enum, error, rng):
        proxies, lse = self._group_scores(enum, error)
        lps = proxies - lse
        idx = _sample_index(lps, rng)
        return enum.groups[error][idx], float(lps[idx])

    def sample_fill(self, template, rng):
        """Sample placeholder words left-to-right; returns (tokens, log P)."""
        slots = template.slots
        work = [self._mask_id if isinstance(s, str) else s for s in slots]
        log_p = 0.0
        for i, s in enumerate(slots):
            if not isinstance(s, str):
                continue
            cands = self.partition.sorted_members(s)
            vec = self.lm.fill_logprob_vector(tuple(work), i, cands)
            j = _sample_index(vec, rng)
            work[i] = cands[j]
            log_p += float(vec[j])
        return tuple(work), log_p

    def forced_fill_log_prob(self, template, target):
        """Log probability that sequential filling reproduces `target`."""
        slots = template.slots
        if len(slots) != len(target):
            return NEG_INF
        work = [self._mask_id if isinstance(s, str) else s for s in slots]
        log_p = 0.0
        for i, s in enumerate(slots):
            if not isinstance(s, str):
                if s != target[i]:
                    return NEG_INF
                continue
            cands = self.partition.sorted_members(s)
            try:
                pos = cands.index(target[i])
            except ValueError:
                return NEG_INF
            vec = self.lm.fill_logprob_vector(tuple(work), i, cands)
            work[i] = target[i]
            log_p += float(vec[pos])
        return log_p

    # -- full proposal ----------------------------------------------------------

    def propose(self, tokens, rng):
        """One tree-search proposal from `tokens`.

        Randomness is consumed in a fixed order (positions, group, template,
        fills) so seeded runs are reproducible.
        """
        tokens = tuple(tokens)
        positions, log_p_pos = select_positions(len(tokens), self.k, rng)
        enum = self._scored_enumeration(tokens, positions)
        error, log_p_group = self.select_group(enum, rng)
        template, log_p_template = self.select_template(enum, error, rng)
        x_star, log_p_fill = self.sample_fill(template, rng)
        log_q_forward = log_p_pos + log_p_group + log_p_template + log_p_fill
        record = ProposalRecord(
            x=tokens,
            x_star=x_star,
            positions=positions,
            ops=template.ops,
            template=template,
            log_p_pos=log_p_pos,
            log_p_group=log_p_group,
            log_p_template=log_p_template,
            log_p_fill=log_p_fill,
            log_q_forward=log_q_forward,
            log_q_reverse=NEG_INF,
        )
        return replace(record, log_q_reverse=self.reverse_log_prob(record))

    # -- reverse move ----------------------------------------------------------

    def derive_reverse_ops(self, x, positions, ops, m_star):
        """Inverse op set at the edited sentence, or None when inexpressible.

        Each op maps to its inverse at the image position: none<->none,
        replace<->replace with the displaced word's category, insert<->delete
        at the inserted slot, delete<->insert before the next surviving word.
        A derived no-op colliding with a real inverse op is dropped; when the
        op count then falls short of what position selection draws at the new
        length, no-ops pad the unused positions, which is only unambiguous
        when every position is in play (new length <= k).  Anything else (two
        real ops on one position, re-inserting past the final word, ambiguous
        padding) is inexpressible as a single move.  Depends only on the edit
        structure, never on how placeholders get filled.
        """
        # replay the edit, tracking where each original position lands
        items = [("orig", i) for i in range(1, len(x) + 1)]
        for pos, (kind, _cat) in sorted(zip(positions, ops), reverse=True):
            i = pos - 1
            if kind == OP_REPLACE:
                items[i] = ("rep", pos)
            elif kind == OP_DELETE:
                del items[i]
            elif kind == OP_INSERT:
                items.insert(i, ("ins", pos))
        survived = {}  # original position -> new position (kept or replaced)
        inserted = {}  # forward-insert source position -> new position
        for star_pos, item in enumerate(items, start=1):
            if item[0] == "ins":
                inserted[item[1]] = star_pos
            else:
                survived[item[1]] = star_pos
        rev = {}
        partition = self.partition
        for pos, (kind, _cat) in zip(positions, ops):
            if kind == OP_NONE:
                star_pos, op = survived[pos], (OP_NONE, None)
            elif kind == OP_REPLACE:
                star_pos = survived[pos]
                op = (OP_REPLACE, partition.category_of(x[pos - 1]))
            elif kind == OP_INSERT:
                star_pos, op = inserted[pos], (OP_DELETE, None)
            else:  # OP_DELETE: re-insert before the next surviving word
                succ = None
                for q in range(pos + 1, len(x) + 1):
                    if q in survived:
                        succ = survived[q]
                        break
                if succ is None:
                    return None
                star_pos = succ
                op = (OP_INSERT, partition.category_of(x[pos - 1]))
            against = rev.get(star_pos)
            if against is None:
                rev[star_pos] = op
            elif op[0] == OP_NONE:
                continue  # dropped no-op
            elif against[0] == OP_NONE:
                rev[star_pos] = op  # drops the earlier no-op
            else:
                return None
        k_rev = min(self.k, m_star)
        if len(rev) < k_rev:
            if m_star > self.k:
                return None  # padding position would be ambiguous
            for p in range(1, m_star + 1):
                rev.setdefault(p, (OP_NONE, None))
        if len(rev) != k_rev:
            return None
        rev_positions = tuple(sorted(rev))
        return rev_positions, tuple(rev[p] for p in rev_positions)

    def inverse_event(self, x, x_star, positions, ops):
        """Inverse move at x_star restoring x, or None when inexpressible."""
        derived = self.derive_reverse_ops(x, positions, ops, len(x_star))
        if derived is None:
            return None
        rev_positions, rev_ops = derived
        slots = apply_ops(x_star, rev_positions, rev_ops)
        if slots is None or len(slots) > self.max_len or len(slots) != len(x):
            return None
        partition = self.partition
        for i, s in enumerate(slots):
            if isinstance(s, str):
                if partition.category_of(x[i]) != s:
                    return None
            elif s != x[i]:
                return None
        return ReverseEvent(rev_positions, rev_ops, Template(slots, rev_positions, rev_ops))

    def reverse_event(self, record):
        """The inverse of a recorded move, validated to pair back exactly.

        The pairing forward-event <-> inverse-event must be an involution for
        the accept rule to balance flows exactly, so moves whose inverse maps
        back to a different event (possible around length boundaries) are
        declared irreversible.
        """
        event = self.inverse_event(record.x, record.x_star, record.positions, record.ops)
        if event is None:
            return None
        enum = self._scored_enumeration(record.x_star, event.positions)
        found = enum.by_slots.get(event.template.slots)
        if found is None:
            return None
        kept = found[1]  # same slots, provenance as enumerated at x_star
        back = self.inverse_event(record.x_star, record.x, kept.positions, kept.ops)
        if (
            back is None
            or back.positions != record.positions
            or back.template.slots != record.template.slots
        ):
            return None
        return event

    def event_log_prob(self, tokens, positions, template_slots, target):
        """Probability of the specific move (positions, template, fill=target)."""
        tokens = tuple(tokens)
        log_p_pos = -math.log(math.comb(len(tokens), len(positions)))
        enum = self._scored_enumeration(tokens, positions)
        found = enum.by_slots.get(tuple(template_slots))
        if found is None:
            return NEG_INF
        error, template = found
        log_p_group = group_log_probs(enum.errors, self.constraints.beta)[error]
        proxies, lse = self._group_scores(enum, error)
        idx = enum.groups[error].index(template)
        log_p_template = float(proxies[idx]) - lse
        log_p_fill = self.forced_fill_log_prob(template, target)
        return log_p_pos + log_p_group + log_p_template + log_p_fill

    def reverse_log_prob(self, record):
        """Q(x | x_star) along the inverse move; -inf when auto-rejected."""
        event = self.reverse_event(record)
        if event is None:
            return NEG_INF
        return self.event_log_prob(
            record.x_star, event.positions, event.template.slots, record.x
        )
