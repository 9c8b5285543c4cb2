"""Sentence templates: per-position slots, each a fixed word or a category.

A slot is encoded compactly as either an `int` (a fixed token id) or a `str`
(a category-name placeholder).  Templates are the unit the proposal tree
search enumerates; constraint satisfaction is decidable on them directly.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass

OP_NONE = "none"
OP_DELETE = "delete"
OP_REPLACE = "replace"
OP_INSERT = "insert"

# an edit op is (kind, category-name-or-None), attached to a sentence position
EditOp = tuple


@dataclass(frozen=True)
class Template:
    """Slot sequence plus the (positions, ops) provenance that produced it.

    Duplicate slot sequences produced by different op combinations are
    collapsed to one template; `positions`/`ops` record the kept provenance.
    """

    slots: tuple
    positions: tuple = ()
    ops: tuple = ()

    def __len__(self):
        return len(self.slots)

    @property
    def placeholder_positions(self):
        """0-based indices of the category placeholders, ascending."""
        return tuple(i for i, s in enumerate(self.slots) if isinstance(s, str))

    def is_concrete(self):
        return not any(isinstance(s, str) for s in self.slots)


def apply_ops(tokens, positions, ops):
    """Apply edit ops (1-based positions into `tokens`) and return slots.

    Positions are interpreted against the original sentence; edits are applied
    right-to-left so earlier indices stay valid.  Insert places the new slot
    before the addressed word.  Returns None when everything was deleted.
    """
    slots = list(tokens)
    for pos, (kind, cat) in sorted(zip(positions, ops), reverse=True):
        i = pos - 1
        if kind == OP_NONE:
            continue
        if kind == OP_REPLACE:
            slots[i] = cat
        elif kind == OP_DELETE:
            del slots[i]
        elif kind == OP_INSERT:
            slots.insert(i, cat)
        else:
            raise ValueError(f"unknown edit op {kind!r}")
    if not slots:
        return None
    return tuple(slots)


def slot_categories(slots, partition):
    """Category name per slot; fixed words resolve via the partition."""
    return tuple(s if isinstance(s, str) else partition.category_of(s) for s in slots)


def instantiations(template, partition):
    """Yield every concrete sentence the template admits (test oracle aid)."""
    options = []
    for s in template.slots:
        if isinstance(s, str):
            options.append(partition.sorted_members(s))
        else:
            options.append((s,))
    for combo in itertools.product(*options):
        yield tuple(combo)
