"""Vocabulary, tokenization, and the word-category partition.

Everything downstream (constraints, templates, language models) works over a
fixed whole-word vocabulary split into named, non-overlapping categories:
e.g. question words, auxiliary verbs, singleton categories for required
keywords, and one residual bucket holding every unclaimed word.
"""

from __future__ import annotations

import hashlib
import json

MASK_TOKEN = "[MASK]"

# trailing punctuation split off a raw token when the vocabulary knows it
_TERMINAL_PUNCT = (".", "?", "!", ",", ";")

Sentence = tuple  # token-id tuple; helpers below enforce the invariants


class VocabError(ValueError):
    """Malformed vocabulary file, OOV token, or broken partition axiom."""


class Vocabulary:
    """Immutable token <-> dense-id table with a reserved mask placeholder.

    The mask placeholder is a member of the vocabulary (templates and
    fill queries need an id for it) but is never a legal sentence token.
    """

    def __init__(self, words):
        words = list(words)
        if not words:
            raise VocabError("vocabulary is empty")
        if MASK_TOKEN not in words:
            words.append(MASK_TOKEN)
        index = {}
        for i, w in enumerate(words):
            if w in index:
                raise VocabError(f"duplicate token {w!r} (entries {index[w]} and {i})")
            index[w] = i
        self.words = tuple(words)
        self.index = index
        self.mask_id = index[MASK_TOKEN]
        # ids of legal sentence tokens, in id order
        self.real_ids = tuple(i for i in range(len(words)) if i != self.mask_id)

    def __len__(self):
        return len(self.words)

    def __contains__(self, token):
        return token in self.index

    @property
    def real_size(self):
        """Number of legal sentence tokens (mask excluded)."""
        return len(self.words) - 1

    def id_of(self, token):
        try:
            return self.index[token]
        except KeyError:
            raise VocabError(f"token {token!r} not in vocabulary") from None

    def token_of(self, token_id):
        return self.words[token_id]

    def content_hash(self):
        """Stable digest of the word list; guards model/vocab pairing."""
        return hashlib.sha256("\n".join(self.words).encode("utf-8")).digest()


def load_vocabulary(path):
    """Read a UTF-8 vocabulary file, one token per line, ids in file order.

    The mask placeholder is appended when the file does not list it.
    Duplicate lines and empty files are rejected.
    """
    words = []
    seen = {}
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            token = line.strip()
            if not token:
                continue
            if token in seen:
                raise VocabError(
                    f"{path}: duplicate token {token!r} at line {lineno}"
                    f" (first seen at line {seen[token]})"
                )
            seen[token] = lineno
            words.append(token)
    if not words:
        raise VocabError(f"{path}: vocabulary file is empty")
    return Vocabulary(words)


def save_vocabulary(vocab, path):
    with open(path, "w", encoding="utf-8") as fh:
        for w in vocab.words:
            fh.write(w + "\n")


def tokenize(text, vocab, unk=None):
    """Whitespace tokenization, lowercased, punctuation split when known.

    A trailing punctuation mark is split into its own token when both the
    mark and the stem are vocabulary members.  Out-of-vocabulary tokens are
    an error unless `unk` names a vocabulary token to map them to.
    """
    unk_id = vocab.id_of(unk) if unk is not None else None
    ids = []
    for raw in text.lower().split():
        if raw == MASK_TOKEN:
            raise VocabError("mask placeholder is not a legal sentence token")
        if raw in vocab.index:
            ids.append(vocab.index[raw])
            continue
        if (
            len(raw) > 1
            and raw[-1] in _TERMINAL_PUNCT
            and raw[-1] in vocab.index
            and raw[:-1] in vocab.index
        ):
            ids.append(vocab.index[raw[:-1]])
            ids.append(vocab.index[raw[-1]])
            continue
        if unk_id is not None:
            ids.append(unk_id)
            continue
        raise VocabError(f"out-of-vocabulary token {raw!r}")
    if not ids:
        raise VocabError("tokenized sentence is empty")
    return tuple(ids)


def detokenize(tokens, vocab):
    return " ".join(vocab.words[t] for t in tokens)


def validate_sentence(tokens, vocab, max_len):
    """Assert the sentence invariants: 1 <= len <= max_len, no mask token."""
    if not 1 <= len(tokens) <= max_len:
        raise VocabError(f"sentence length {len(tokens)} outside [1, {max_len}]")
    for t in tokens:
        if t == vocab.mask_id:
            raise VocabError("sentence contains the mask placeholder")
        if not 0 <= t < len(vocab.words):
            raise VocabError(f"token id {t} outside vocabulary")


class CategoryPartition:
    """Ordered, named, disjoint categories covering the vocabulary minus mask.

    Immutable; mutators return a new partition.  Exactly one category is the
    residual bucket that absorbed all unclaimed words.
    """

    def __init__(self, vocab, categories, residual_name):
        """categories: ordered list of (name, iterable of token ids)."""
        self.vocab = vocab
        self.names = tuple(name for name, _ in categories)
        if residual_name not in self.names:
            raise VocabError(f"residual category {residual_name!r} not among categories")
        self.residual_name = residual_name
        self._members = {name: frozenset(ids) for name, ids in categories}
        if len(self._members) != len(self.names):
            raise VocabError("duplicate category name")
        # token id -> category name, with mask unassigned
        owner = [None] * len(vocab.words)
        for name in self.names:
            for tid in self._members[name]:
                if tid == vocab.mask_id:
                    raise VocabError(f"mask placeholder claimed by category {name}")
                if owner[tid] is not None:
                    raise VocabError(
                        f"token {vocab.words[tid]!r} claimed by both "
                        f"{owner[tid]} and {name}"
                    )
                owner[tid] = name
        for tid in vocab.real_ids:
            if owner[tid] is None:
                raise VocabError(f"token {vocab.words[tid]!r} not covered by any category")
        self._owner = tuple(owner)
        self._sorted_members = {
            name: tuple(sorted(self._members[name])) for name in self.names
        }

    def __len__(self):
        return len(self.names)

    def members(self, name):
        try:
            return self._members[name]
        except KeyError:
            raise VocabError(f"unknown category {name!r}") from None

    def sorted_members(self, name):
        """Member ids ascending; the canonical candidate order for fills."""
        try:
            return self._sorted_members[name]
        except KeyError:
            raise VocabError(f"unknown category {name!r}") from None

    def category_of(self, token_id):
        if token_id == self.vocab.mask_id:
            raise VocabError("mask placeholder belongs to no category")
        name = self._owner[token_id]
        if name is None:
            raise VocabError(f"token id {token_id} outside vocabulary")
        return name

    def verify(self):
        """Re-check the partition axioms exhaustively (disjoint + covering)."""
        seen = set()
        for name in self.names:
            ids = self._members[name]
            if ids & seen:
                clash = next(iter(ids & seen))
                raise VocabError(f"token {self.vocab.words[clash]!r} in two categories")
            seen |= ids
        expected = set(self.vocab.real_ids)
        if seen != expected:
            missing = expected - seen
            extra = seen - expected
            raise VocabError(f"coverage broken: missing={missing} extra={extra}")
        return True


def keyword_category_name(keyword):
    return f"[K:{keyword}]"


def build_partition(spec_doc, vocab):
    """Build a partition from a category-spec document.

    Schema: {"categories": [{"name": str, "members": [str]} |
                            {"name": str, "residual": true}, ...]}
    Exactly one residual entry; it receives every unclaimed word.
    """
    if not isinstance(spec_doc, dict) or "categories" not in spec_doc:
        raise VocabError('category spec must be {"categories": [...]}')
    entries = spec_doc["categories"]
    if not isinstance(entries, list) or not entries:
        raise VocabError('"categories" must be a non-empty list')
    residual_name = None
    named = []  # (name, ids or None-for-residual)
    claimed = {}
    for pos, entry in enumerate(entries):
        if not isinstance(entry, dict) or "name" not in entry:
            raise VocabError(f"categories[{pos}]: each entry needs a name")
        name = entry["name"]
        if entry.get("residual"):
            if residual_name is not None:
                raise VocabError("more than one residual category marked")
            residual_name = name
            named.append((name, None))
            continue
        members = entry.get("members")
        if not isinstance(members, list):
            raise VocabError(f"categories[{pos}] ({name}): missing member list")
        ids = set()
        for w in members:
            if w not in vocab.index:
                raise VocabError(f"category {name}: member {w!r} not in vocabulary")
            tid = vocab.index[w]
            if tid in claimed:
                raise VocabError(
                    f"word {w!r} claimed by both {claimed[tid]} and {name}"
                )
            claimed[tid] = name
            ids.add(tid)
        named.append((name, ids))
    if residual_name is None:
        raise VocabError("no residual category marked")
    leftover = {tid for tid in vocab.real_ids if tid not in claimed}
    categories = [
        (name, leftover if ids is None else ids) for name, ids in named
    ]
    return CategoryPartition(vocab, categories, residual_name)


def load_category_spec(path):
    with open(path, encoding="utf-8") as fh:
        return json.load(fh)


def add_keyword_category(partition, keyword):
    """Carve a singleton category [K:keyword] out of the keyword's category.

    Idempotent: if the keyword already owns its singleton, the partition is
    returned unchanged.  The new category is inserted before the residual.
    """
    vocab = partition.vocab
    tid = vocab.id_of(keyword)
    if tid == vocab.mask_id:
        raise VocabError("mask placeholder cannot be a keyword")
    new_name = keyword_category_name(keyword)
    current = partition.category_of(tid)
    if current == new_name:
        return partition
    if new_name in partition.names:
        raise VocabError(f"category {new_name} exists but does not hold {keyword!r}")
    categories = []
    for name in partition.names:
        ids = set(partition.members(name))
        ids.discard(tid)
        if name == partition.residual_name:
            categories.append((new_name, {tid}))
        categories.append((name, ids))
    return CategoryPartition(vocab, categories, partition.residual_name)
