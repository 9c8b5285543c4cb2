"""Language-model backends: unnormalized sentence scores and fill distributions.

Two implementations of one contract:

* NGramModel -- trainable add-k-smoothed n-gram model with recursive backoff.
  Sentence scores are pseudo-likelihoods: the product over positions of the
  word's conditional probability given its surroundings, where each
  conditional multiplies every n-gram window covering the position and
  normalizes over the vocabulary.
* BridgeLm -- client for an external masked-LM service speaking the
  tsmh-bridge/1 wire protocol (see the bridge package).

Fill distributions are normalized over an explicit candidate set (a word
category's members), which is how templates restrict masked positions.
"""

from __future__ import annotations

import math
import os
import struct

import numpy as np

from .vocab import MASK_TOKEN, VocabError, tokenize

MAGIC = b"TSMH-NGRAM\x00"
FORMAT_VERSION = 1
BOS = -1  # sentence-boundary padding id, never a vocabulary id


class BackendError(RuntimeError):
    """A language-model backend failed or refused a query."""


def _logsumexp(values):
    m = np.max(values)
    if not np.isfinite(m):
        return float(m)
    return float(m + np.log(np.sum(np.exp(values - m))))


class LmBackend:
    """Score/fill contract shared by the n-gram model and the bridge client.

    In fill queries the tokens tuple carries the vocabulary's mask id at the
    queried position and at any other still-unfilled position; distributions
    are normalized over the given candidates and sum to 1 within 1e-9.
    """

    def sentence_logscore(self, tokens):
        raise NotImplementedError

    def fill_logprob_vector(self, tokens, mask_index, candidate_ids):
        raise NotImplementedError


def fill_logprobs(backend, tokens, candidate_ids, vocab):
    """Spec-level fill query: exactly one mask in `tokens`, map result."""
    masks = [i for i, t in enumerate(tokens) if t == vocab.mask_id]
    if len(masks) != 1:
        raise BackendError(f"expected exactly one mask, found {len(masks)}")
    if not candidate_ids:
        raise BackendError("empty candidate set")
    vec = backend.fill_logprob_vector(tuple(tokens), masks[0], tuple(candidate_ids))
    return {cid: float(lp) for cid, lp in zip(candidate_ids, vec)}


class NGramModel(LmBackend):
    """Add-k-smoothed n-gram counts with backoff to lower orders.

    Conditionals normalize over the legal vocabulary (mask excluded); unseen
    histories back off recursively and never zero out, so every in-vocabulary
    sentence has a finite score even under an untrained model.
    """

    def __init__(self, vocab, order=3, add_k=0.01):
        if order < 1:
            raise ValueError("order must be >= 1")
        if add_k <= 0:
            raise ValueError("add_k must be positive")
        self.vocab = vocab
        self.order = order
        self.add_k = add_k
        # history tuple -> {next token id: count}; histories may contain BOS
        self.successors = {}
        self.ext = {}  # history tuple -> total continuations observed
        self._real = np.array(vocab.real_ids, dtype=np.intp)
        self._vec_cache = {}
        self._g_cache = {}
        self._score_cache = {}
        # cache budget scales down for big vocabularies
        self._g_cap = max(20_000, 50_000_000 // (8 * len(vocab.words)))

    # -- training ----------------------------------------------------------

    def observe(self, tokens):
        """Count every k-gram (k <= order) ending at a real token."""
        padded = (BOS,) * (self.order - 1) + tuple(tokens)
        m = len(tokens)
        for t in range(m):
            end = t + self.order - 1
            for k in range(1, self.order + 1):
                gram = padded[end - k + 1 : end + 1]
                h, w = gram[:-1], gram[-1]
                self.successors.setdefault(h, {})
                self.successors[h][w] = self.successors[h].get(w, 0) + 1
                self.ext[h] = self.ext.get(h, 0) + 1
        self._vec_cache.clear()
        self._g_cache.clear()
        self._score_cache.clear()

    @classmethod
    def from_sentences(cls, sentences, vocab, order=3, add_k=0.01):
        model = cls(vocab, order=order, add_k=add_k)
        count = 0
        for tokens in sentences:
            model.observe(tokens)
            count += 1
        if count == 0:
            raise BackendError("training corpus is empty")
        return model

    @classmethod
    def train(cls, corpus_path, vocab, order=3, add_k=0.01):
        """Train from a text file, one sentence per line; OOV lines error."""

        def lines():
            with open(corpus_path, encoding="utf-8") as fh:
                for lineno, line in enumerate(fh, start=1):
                    line = line.strip()
                    if not line:
                        continue
                    try:
                        yield tokenize(line, vocab)
                    except VocabError as exc:
                        raise BackendError(f"{corpus_path}:{lineno}: {exc}") from exc

        try:
            return cls.from_sentences(lines(), vocab, order=order, add_k=add_k)
        except BackendError as exc:
            if "corpus is empty" in str(exc):
                raise BackendError(f"{corpus_path}: training corpus is empty") from None
            raise

    # -- conditionals ------------------------------------------------------

    def _backed_off(self, history):
        h = tuple(history)
        while h and self.ext.get(h, 0) == 0:
            h = h[1:]
        return h

    def conditional_vector(self, history):
        """P(w | history) over the whole vocabulary (mask slot = 0)."""
        h = self._backed_off(history)
        arr = self._vec_cache.get(h)
        if arr is None:
            v = len(self.vocab.words)
            arr = np.zeros(v)
            arr[self._real] = self.add_k
            for w, c in self.successors.get(h, {}).items():
                arr[w] += c
            arr /= self.ext.get(h, 0) + self.add_k * self.vocab.real_size
            arr.setflags(write=False)
            self._vec_cache[h] = arr
        return arr

    def conditional(self, history, token_id):
        h = self._backed_off(history)
        count = self.successors.get(h, {}).get(token_id, 0)
        return (count + self.add_k) / (self.ext.get(h, 0) + self.add_k * self.vocab.real_size)

    # -- pseudo-likelihood windows ------------------------------------------

    def _context_key(self, tokens, t, skip):
        """Local context around t; None marks unfilled positions, BOS pads."""
        n = self.order
        m = len(tokens)
        left = []
        for i in range(t - n + 1, t):
            if i < 0:
                left.append(BOS)
            elif i in skip:
                left.append(None)
            else:
                left.append(tokens[i])
        right = []
        for i in range(t + 1, min(t + n, m)):
            right.append(None if i in skip else tokens[i])
        return tuple(left), tuple(right)

    def position_log_g(self, tokens, t, skip=frozenset()):
        """Unnormalized log-score vector over candidate words at position t.

        Multiplies every n-gram window that covers t and contains no other
        unfilled position.  Returns (log_g over all ids, logsumexp over the
        legal vocabulary); the array is cached and must not be mutated.
        """
        key = self._context_key(tokens, t, skip)
        hit = self._g_cache.get(key)
        if hit is not None:
            return hit
        left, right = key
        v = len(self.vocab.words)
        logg = np.zeros(v)
        if None not in left:
            with np.errstate(divide="ignore"):
                logg += np.log(self.conditional_vector(left))
        for r, target in enumerate(right):
            if target is None:
                continue
            ctx_left = left[r + 1 :]
            ctx_right = right[:r]
            if None in ctx_left or None in ctx_right:
                continue
            add = np.empty(v)
            for w in self.vocab.real_ids:
                add[w] = math.log(self.conditional(ctx_left + (w,) + ctx_right, target))
            add[self.vocab.mask_id] = 0.0
            logg += add
        logg[self.vocab.mask_id] = -np.inf
        lse_real = _logsumexp(logg[self._real])
        logg.setflags(write=False)
        if len(self._g_cache) >= self._g_cap:
            self._g_cache.clear()
        self._g_cache[key] = (logg, lse_real)
        return logg, lse_real

    def fill_logprob_vector(self, tokens, mask_index, candidate_ids):
        skip = frozenset(
            i for i, tok in enumerate(tokens)
            if tok == self.vocab.mask_id and i != mask_index
        )
        logg, _ = self.position_log_g(tokens, mask_index, skip)
        vec = logg[np.asarray(candidate_ids, dtype=np.intp)]
        return vec - _logsumexp(vec)

    def sentence_logscore(self, tokens):
        tokens = tuple(tokens)
        if not tokens:
            raise BackendError("cannot score an empty sentence")
        hit = self._score_cache.get(tokens)
        if hit is not None:
            return hit
        total = 0.0
        for t, w in enumerate(tokens):
            logg, lse_real = self.position_log_g(tokens, t)
            total += float(logg[w]) - lse_real
        if len(self._score_cache) >= self._g_cap:
            self._score_cache.clear()
        self._score_cache[tokens] = total
        return total

    # -- serialization -------------------------------------------------------

    def save(self, path):
        """Versioned binary dump; byte-identical for identical models."""
        grams = []
        for h, nexts in self.successors.items():
            for w, c in nexts.items():
                grams.append((h + (w,), c))
        grams.sort()
        with open(path, "wb") as fh:
            fh.write(MAGIC)
            fh.write(struct.pack("<HHd", FORMAT_VERSION, self.order, self.add_k))
            fh.write(self.vocab.content_hash())
            fh.write(struct.pack("<Q", len(grams)))
            for gram, count in grams:
                fh.write(struct.pack("<B", len(gram)))
                fh.write(struct.pack(f"<{len(gram)}i", *gram))
                fh.write(struct.pack("<Q", count))

    @classmethod
    def load(cls, path, vocab):
        with open(path, "rb") as fh:
            blob = fh.read()
        if blob[: len(MAGIC)] != MAGIC:
            raise BackendError(f"{path}: not a TSMH n-gram model file")
        off = len(MAGIC)
        version, order, add_k = struct.unpack_from("<HHd", blob, off)
        off += struct.calcsize("<HHd")
        if version != FORMAT_VERSION:
            raise BackendError(f"{path}: unsupported format version {version}")
        vocab_hash = blob[off : off + 32]
        off += 32
        if vocab_hash != vocab.content_hash():
            raise BackendError(f"{path}: model was trained on a different vocabulary")
        (n_grams,) = struct.unpack_from("<Q", blob, off)
        off += 8
        model = cls(vocab, order=order, add_k=add_k)
        for _ in range(n_grams):
            (glen,) = struct.unpack_from("<B", blob, off)
            off += 1
            gram = struct.unpack_from(f"<{glen}i", blob, off)
            off += 4 * glen
            (count,) = struct.unpack_from("<Q", blob, off)
            off += 8
            h, w = gram[:-1], gram[-1]
            model.successors.setdefault(h, {})[w] = count
            model.ext[h] = model.ext.get(h, 0) + count
        return model


class BridgeLm(LmBackend):
    """Client for a masked-LM service speaking tsmh-bridge/1.

    Whole words cross the wire; unfilled positions are rendered as the mask
    token.  Fill responses are renormalized client-side so downstream
    normalization invariants hold to machine precision.  Connection or
    protocol failures raise BackendError: the chain must never silently
    continue with a different model.
    """

    def __init__(self, base_url, vocab, timeout=60.0, token=None):
        import requests

        self.base_url = base_url.rstrip("/")
        self.vocab = vocab
        self.timeout = timeout
        self._session = requests.Session()
        token = token if token is not None else os.environ.get("TSMH_BRIDGE_TOKEN")
        if token:
            self._session.headers["Authorization"] = f"Bearer {token}"
        self._score_cache = {}
        self._fill_cache = {}

    def _post(self, payload):
        import requests

        try:
            resp = self._session.post(self.base_url + "/", json=payload, timeout=self.timeout)
        except requests.RequestException as exc:
            raise BackendError(f"bridge unreachable at {self.base_url}: {exc}") from exc
        if resp.status_code != 200:
            raise BackendError(f"bridge error {resp.status_code}: {resp.text[:200]}")
        try:
            return resp.json()
        except ValueError as exc:
            raise BackendError(f"bridge returned non-JSON payload: {exc}") from exc

    def healthz(self):
        import requests

        try:
            resp = self._session.get(self.base_url + "/healthz", timeout=self.timeout)
            resp.raise_for_status()
            return resp.json()
        except requests.RequestException as exc:
            raise BackendError(f"bridge unreachable at {self.base_url}: {exc}") from exc

    def _words(self, tokens):
        return [self.vocab.words[t] for t in tokens]

    def sentence_logscore(self, tokens):
        tokens = tuple(tokens)
        hit = self._score_cache.get(tokens)
        if hit is not None:
            return hit
        reply = self._post({"op": "score", "tokens": self._words(tokens)})
        try:
            score = float(reply["log_score"])
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendError(f"malformed score response: {reply!r}") from exc
        self._score_cache[tokens] = score
        return score

    def fill_logprob_vector(self, tokens, mask_index, candidate_ids):
        tokens = tuple(tokens)
        candidate_ids = tuple(candidate_ids)
        key = (tokens, mask_index, candidate_ids)
        hit = self._fill_cache.get(key)
        if hit is not None:
            return hit
        words = self._words(tokens)
        words[mask_index] = MASK_TOKEN
        reply = self._post({
            "op": "fill",
            "tokens": words,
            "mask_index": mask_index,
            "candidates": [self.vocab.words[c] for c in candidate_ids],
        })
        try:
            log_probs = reply["log_probs"]
            vec = np.array(
                [float(log_probs[self.vocab.words[c]]) for c in candidate_ids]
            )
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendError(f"malformed fill response: {reply!r}") from exc
        total = _logsumexp(vec)
        if not math.isfinite(total) or abs(total) > 1e-3:
            raise BackendError(f"bridge fill response badly normalized (logsum={total})")
        vec = vec - total  # exact renormalization on top of the wire tolerance
        vec.setflags(write=False)
        self._fill_cache[key] = vec
        return vec

    def sentiment(self, words):
        reply = self._post({"op": "sentiment", "tokens": list(words)})
        try:
            value = float(reply["positive"])
        except (KeyError, TypeError, ValueError) as exc:
            raise BackendError(f"malformed sentiment response: {reply!r}") from exc
        if not 0.0 <= value <= 1.0:
            raise BackendError(f"sentiment outside [0,1]: {value}")
        return value
