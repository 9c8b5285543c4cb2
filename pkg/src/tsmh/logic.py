"""Propositional hard constraints over position/category indicator variables.

A formula is built from variables `w<i>[NAME]` ("the i-th word is in category
NAME") combined with `&`, `|`, `!` and parentheses.  Formulas evaluate both on
concrete sentences and on templates; by construction the two agree on every
instantiation of a template, because a slot pins down its category exactly.

Out-of-range positions evaluate to false: sentence length changes across
sampling moves while formulas are written for the configured maximum length.
"""

from __future__ import annotations

import math
import re
from dataclasses import dataclass

from .templates import slot_categories


class FormulaError(ValueError):
    """Syntax error or unknown category in the constraint DSL."""


@dataclass(frozen=True)
class Var:
    position: int  # 1-based
    category: str


@dataclass(frozen=True)
class Not:
    child: object


@dataclass(frozen=True)
class And:
    children: tuple


@dataclass(frozen=True)
class Or:
    children: tuple


def conj(children):
    children = tuple(children)
    return children[0] if len(children) == 1 else And(children)


def disj(children):
    children = tuple(children)
    return children[0] if len(children) == 1 else Or(children)


_TOKEN_RE = re.compile(
    r"\s*(?:(?P<var>w(?P<pos>\d+)\[(?P<cat>[^\[\]\s]+)\])"
    r"|(?P<op>[&|!()]))"
)


def _lex(text):
    tokens = []
    offset = 0
    while offset < len(text):
        m = _TOKEN_RE.match(text, offset)
        if m is None:
            rest = text[offset:]
            if rest.strip() == "":
                break
            bad = offset + (len(rest) - len(rest.lstrip()))
            raise FormulaError(f"syntax error at offset {bad + 1}: unexpected {text[bad]!r}")
        if m.group("var") is not None:
            pos = int(m.group("pos"))
            if pos < 1:
                raise FormulaError(f"syntax error at offset {m.start('var') + 1}: positions are 1-based")
            tokens.append(("var", (pos, "[" + m.group("cat") + "]"), m.start("var")))
        else:
            tokens.append((m.group("op"), None, m.start("op")))
        offset = m.end()
    tokens.append(("end", None, len(text)))
    return tokens


class _Parser:
    """Recursive descent with precedence ! > & > |."""

    def __init__(self, text, categories=None):
        self.text = text
        self.tokens = _lex(text)
        self.i = 0
        self.categories = set(categories) if categories is not None else None

    def peek(self):
        return self.tokens[self.i]

    def take(self):
        tok = self.tokens[self.i]
        self.i += 1
        return tok

    def fail(self, message):
        kind, _, off = self.peek()
        raise FormulaError(f"syntax error at offset {off + 1}: {message}")

    def parse(self):
        node = self.parse_or()
        if self.peek()[0] != "end":
            self.fail(f"unexpected {self.peek()[0]!r}")
        return node

    def parse_or(self):
        children = [self.parse_and()]
        while self.peek()[0] == "|":
            self.take()
            children.append(self.parse_and())
        return disj(children)

    def parse_and(self):
        children = [self.parse_unary()]
        while self.peek()[0] == "&":
            self.take()
            children.append(self.parse_unary())
        return conj(children)

    def parse_unary(self):
        kind, value, off = self.peek()
        if kind == "!":
            self.take()
            return Not(self.parse_unary())
        if kind == "(":
            self.take()
            node = self.parse_or()
            if self.peek()[0] != ")":
                self.fail("expected ')'")
            self.take()
            return node
        if kind == "var":
            self.take()
            pos, cat = value
            if self.categories is not None and cat not in self.categories:
                raise FormulaError(f"unknown category {cat} at offset {off + 1}")
            return Var(pos, cat)
        self.fail("expected a variable, '!' or '('")


def parse_formula(text, categories=None):
    """Parse a constraint DSL string; optionally validate category names."""
    return _Parser(text, categories).parse()


def format_formula(node):
    """Canonical DSL text; parse(format(f)) is structurally equal to f."""

    def fmt(n, parent_prec):
        if isinstance(n, Var):
            return f"w{n.position}{n.category}"
        if isinstance(n, Not):
            return "!" + fmt(n.child, 3)
        if isinstance(n, And):
            body = " & ".join(fmt(c, 2) for c in n.children)
            return f"({body})" if parent_prec > 1 else body
        if isinstance(n, Or):
            body = " | ".join(fmt(c, 1) for c in n.children)
            return f"({body})" if parent_prec > 0 else body
        raise TypeError(f"not a formula node: {n!r}")

    return fmt(node, 0)


def _compile(node):
    """Compile a formula to a closure over the per-position category tuple."""

    def expr(n):
        if isinstance(n, Var):
            return f"(n >= {n.position} and pc[{n.position - 1}] == {n.category!r})"
        if isinstance(n, Not):
            return f"(not {expr(n.child)})"
        if isinstance(n, And):
            return "(" + " and ".join(expr(c) for c in n.children) + ")"
        if isinstance(n, Or):
            return "(" + " or ".join(expr(c) for c in n.children) + ")"
        raise TypeError(f"not a formula node: {n!r}")

    namespace = {}
    exec(f"def _f(pc, n):\n    return {expr(node)}", namespace)
    return namespace["_f"]


_compiled_cache = {}


def _compiled(formula):
    fn = _compiled_cache.get(formula)
    if fn is None:
        fn = _compiled_cache[formula] = _compile(formula)
    return fn


def eval_positions(formula, position_categories):
    """Evaluate against a tuple of category names, one per position."""
    pc = tuple(position_categories)
    return bool(_compiled(formula)(pc, len(pc)))


def eval_sentence(formula, tokens, partition):
    pc = tuple(partition.category_of(t) for t in tokens)
    return eval_positions(formula, pc)


def eval_template(formula, template, partition):
    return eval_positions(formula, slot_categories(template.slots, partition))


class ConstraintSet:
    """Ordered hard-constraint formulas plus the violation penalty base beta.

    The hard score of a sentence with C violated constraints is beta**C; all
    arithmetic downstream stays in log space because beta is tiny.
    """

    def __init__(self, formulas, beta=1e-10, partition=None):
        if not 0.0 < beta < 1.0:
            raise ValueError(f"beta must lie strictly in (0,1), got {beta}")
        self.formulas = tuple(formulas)
        self.beta = beta
        self.log_beta = math.log(beta)
        self._compiled = tuple(_compile(f) for f in self.formulas)
        self._error_cache = {}
        if partition is not None:
            names = set(partition.names)
            for f in self.formulas:
                for cat in _categories_in(f):
                    if cat not in names:
                        raise FormulaError(f"formula references unknown category {cat}")

    def __len__(self):
        return len(self.formulas)

    def error_from_categories(self, position_categories):
        pc = tuple(position_categories)
        cached = self._error_cache.get(pc)
        if cached is None:
            n = len(pc)
            cached = sum(0 if fn(pc, n) else 1 for fn in self._compiled)
            self._error_cache[pc] = cached
        return cached

    def constraint_error(self, tokens, partition):
        """Number of violated constraints, in [0, M]."""
        return self.error_from_categories(
            tuple(partition.category_of(t) for t in tokens)
        )

    def template_error(self, template, partition):
        return self.error_from_categories(slot_categories(template.slots, partition))

    def log_hard_score(self, tokens, partition):
        return self.constraint_error(tokens, partition) * self.log_beta

    def hard_score(self, tokens, partition):
        """beta**C(x); equals 1.0 exactly when every constraint is satisfied."""
        c = self.constraint_error(tokens, partition)
        return 1.0 if c == 0 else math.exp(c * self.log_beta)


def _categories_in(node):
    if isinstance(node, Var):
        yield node.category
    elif isinstance(node, Not):
        yield from _categories_in(node.child)
    else:
        for c in node.children:
            yield from _categories_in(c)


# ---------------------------------------------------------------------------
# constraint constructions for the stock tasks


def keyword_constraint(keyword, max_len):
    """The keyword's category occupies at least one position."""
    cat = f"[K:{keyword}]"
    return disj(Var(i, cat) for i in range(1, max_len + 1))


def exactly_once(category, max_len):
    """Exactly one of positions 1..max_len carries the category."""
    terms = []
    for i in range(1, max_len + 1):
        parts = [Var(i, category)]
        parts.extend(Not(Var(j, category)) for j in range(1, max_len + 1) if j != i)
        terms.append(conj(parts))
    return disj(terms)


def keyword_exactly_once(keyword, max_len):
    return exactly_once(f"[K:{keyword}]", max_len)


def interrogative_constraints(partition, max_len=16, strict=False, beta=1e-10):
    """Question-form constraints: wh-word first, auxiliary second or third.

    strict=True additionally enforces exactly one wh-word and exactly one
    auxiliary anywhere in the sentence.
    """
    for cat in ("[QWH]", "[AUX]"):
        if cat not in partition.names:
            raise FormulaError(f"partition lacks required category {cat}")
    formulas = [
        Var(1, "[QWH]"),
        Or((
            And((Var(2, "[AUX]"), Not(Var(3, "[AUX]")))),
            And((Var(3, "[AUX]"), Not(Var(2, "[AUX]")))),
        )),
    ]
    if strict:
        formulas.append(exactly_once("[QWH]", max_len))
        formulas.append(exactly_once("[AUX]", max_len))
    return ConstraintSet(formulas, beta=beta, partition=partition)


def imperative_constraints(partition, beta=1e-10):
    """Command-form constraint: verb first, or adverb then verb."""
    for cat in ("[VERB]", "[ADV]"):
        if cat not in partition.names:
            raise FormulaError(f"partition lacks required category {cat}")
    formula = Or((
        Var(1, "[VERB]"),
        And((Var(1, "[ADV]"), Var(2, "[VERB]"))),
    ))
    return ConstraintSet([formula], beta=beta, partition=partition)
