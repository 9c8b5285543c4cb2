"""Soft constraint scorers: every scorer maps a sentence to a value in [0,1].

Scores multiply into the sampling target next to the language-model score, so
a hard-only task uses the constant scorer (1.0).  Log-space access floors the
score at a tiny positive value to keep the chain's arithmetic finite.
"""

from __future__ import annotations

import math

import numpy as np

# states with a literally-zero soft score are unreachable targets; the floor
# keeps log-space bookkeeping finite without affecting anything sampled
SOFT_FLOOR = 1e-300


class SoftConstraintError(ValueError):
    pass


class SoftScorer:
    """Contract: score(tokens) in [0,1], deterministic for fixed inputs."""

    def score(self, tokens):
        raise NotImplementedError

    def log_score(self, tokens):
        return math.log(max(self.score(tokens), SOFT_FLOOR))


class ConstantScore(SoftScorer):
    def __init__(self, value=1.0):
        if not 0.0 <= value <= 1.0:
            raise SoftConstraintError(f"constant score {value} outside [0,1]")
        self.value = value

    def score(self, tokens):
        return self.value


class EmbeddingTable:
    """Word -> unit-interval-agnostic float vector, all the same dimension."""

    def __init__(self, vectors):
        self.vectors = {}
        self.dimension = None
        for word, vec in vectors.items():
            arr = np.asarray(vec, dtype=float)
            if self.dimension is None:
                self.dimension = arr.shape[0]
            elif arr.shape != (self.dimension,):
                raise SoftConstraintError(
                    f"vector for {word!r} has dimension {arr.shape}, expected {self.dimension}"
                )
            if not np.all(np.isfinite(arr)):
                raise SoftConstraintError(f"vector for {word!r} has NaN/Inf entries")
            self.vectors[word] = arr

    def __contains__(self, word):
        return word in self.vectors

    @classmethod
    def load(cls, path):
        """word2vec text format: `word v1 v2 ... vd` per line."""
        vectors = {}
        with open(path, encoding="utf-8") as fh:
            for line in fh:
                parts = line.split()
                if not parts:
                    continue
                vectors[parts[0]] = [float(x) for x in parts[1:]]
        if not vectors:
            raise SoftConstraintError(f"{path}: empty embedding file")
        return cls(vectors)


def _unit(vec):
    norm = np.linalg.norm(vec)
    if norm == 0.0:
        return None
    return vec / norm


def similarity_score(x_tokens, y_tokens, table, vocab, mode="avg"):
    """Closeness of sentence x to reference y from word-embedding cosines.

    For each embeddable word of x, take its best cosine against y's words,
    map it affinely from [-1,1] to [0,1], then aggregate by `mode` (min or
    avg).  Words missing from the table (or with zero-norm vectors) are
    skipped; if nothing on either side is embeddable the score is 0.
    """
    if mode not in ("min", "avg"):
        raise SoftConstraintError(f"mode must be 'min' or 'avg', got {mode!r}")
    y_units = []
    for t in y_tokens:
        w = vocab.words[t]
        if w in table:
            u = _unit(table.vectors[w])
            if u is not None:
                y_units.append(u)
    per_word = []
    for t in x_tokens:
        w = vocab.words[t]
        if w not in table:
            continue
        u = _unit(table.vectors[w])
        if u is None:
            continue
        if not y_units:
            continue
        best = max(float(np.dot(u, v)) for v in y_units)
        per_word.append((best + 1.0) / 2.0)
    if not per_word:
        return 0.0
    value = min(per_word) if mode == "min" else sum(per_word) / len(per_word)
    return min(max(value, 0.0), 1.0)


class SimilarityScore(SoftScorer):
    def __init__(self, reference_tokens, table, vocab, mode="avg"):
        if mode not in ("min", "avg"):
            raise SoftConstraintError(f"mode must be 'min' or 'avg', got {mode!r}")
        self.reference = tuple(reference_tokens)
        self.table = table
        self.vocab = vocab
        self.mode = mode

    def score(self, tokens):
        return similarity_score(tokens, self.reference, self.table, self.vocab, self.mode)


class SentimentLexicon:
    """Per-word polarity weights; scores logistic(sum / sqrt(len))."""

    def __init__(self, polarity):
        self.polarity = dict(polarity)

    @classmethod
    def load(cls, path):
        """Text format: `word<TAB>polarity_float` per line."""
        polarity = {}
        with open(path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                try:
                    word, value = line.split("\t")
                    polarity[word] = float(value)
                except ValueError:
                    raise SoftConstraintError(
                        f"{path}:{lineno}: expected 'word<TAB>float'"
                    ) from None
        return cls(polarity)

    def positive_probability(self, words):
        total = sum(self.polarity.get(w, 0.0) for w in words)
        z = total / math.sqrt(len(words)) if words else 0.0
        return 1.0 / (1.0 + math.exp(-z))


class SentimentScore(SoftScorer):
    """Sentiment in [0,1] (1 = strongly positive) from a pluggable backend.

    backend: a SentimentLexicon, or any object with a
    `sentiment(words) -> float` method (e.g. the bridge client).
    target="negative" complements the positive probability.
    """

    def __init__(self, backend, vocab, target="positive"):
        if target not in ("positive", "negative"):
            raise SoftConstraintError(f"target must be positive|negative, got {target!r}")
        self.backend = backend
        self.vocab = vocab
        self.target = target

    def score(self, tokens):
        words = [self.vocab.words[t] for t in tokens]
        if isinstance(self.backend, SentimentLexicon):
            s = self.backend.positive_probability(words)
        else:
            s = float(self.backend.sentiment(words))
        s = min(max(s, 0.0), 1.0)
        return 1.0 - s if self.target == "negative" else s


class ProductScore(SoftScorer):
    def __init__(self, scorers):
        self.scorers = tuple(scorers)

    def score(self, tokens):
        value = 1.0
        for s in self.scorers:
            value *= s.score(tokens)
        return value


def compose(scorers):
    """Product of soft scores; the empty composition is the constant 1.0."""
    scorers = tuple(scorers)
    if not scorers:
        return ConstantScore(1.0)
    if len(scorers) == 1:
        return scorers[0]
    return ProductScore(scorers)
