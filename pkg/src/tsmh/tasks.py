"""Task presets bundling categories, constraints and soft scorers.

A task config is a TOML document with [task], [chain], [lm] and [soft]
sections; validate_config() applies defaults (k=3, 100 tree-search steps vs
300 baseline steps, beta=1e-10) and rejects unknown keys with
path-annotated messages.  build_task() turns a validated spec plus a
vocabulary into the concrete partition, constraint set and soft scorer for
one of the stock task kinds (interrogative, imperative, sentiment) or a
custom formula list.
"""

from __future__ import annotations

import hashlib
import sys
from dataclasses import dataclass
from importlib import resources
from pathlib import Path

if sys.version_info >= (3, 11):
    import tomllib
else:
    import tomli as tomllib

from .lm import BridgeLm
from .logic import (
    ConstraintSet,
    exactly_once,
    imperative_constraints,
    interrogative_constraints,
    keyword_constraint,
    keyword_exactly_once,
    parse_formula,
)
from .sampler import ChainConfig
from .soft import (
    EmbeddingTable,
    SentimentLexicon,
    SentimentScore,
    SimilarityScore,
    compose,
)
from .vocab import (
    CategoryPartition,
    add_keyword_category,
    build_partition,
    load_category_spec,
    tokenize,
)

KINDS = ("interrogative", "imperative", "sentiment", "custom")


class ConfigError(ValueError):
    """Bad task configuration; surfaces before any chain starts."""


def _data_file(name):
    return resources.files("tsmh").joinpath("data", name)


def _read_wordlist(path):
    with open(path, encoding="utf-8") as fh:
        return [line.strip() for line in fh if line.strip()]


@dataclass(frozen=True)
class TaskSpec:
    """A fully validated and defaulted task configuration."""

    kind: str
    keywords: tuple
    strict: bool
    vocab_path: str
    categories_path: str
    pos_lexicon_path: str
    formulas: tuple
    similarity: dict
    sentiment: dict
    k: int
    tsmh_steps: int
    cgmh_steps: int
    beta: float
    seed: int
    max_len: int
    neutral_token: str
    lm: str
    ngram_order: int
    config_sha256: str


_TASK_KEYS = {
    "kind", "keywords", "strict", "vocab", "categories", "pos_lexicon", "formulas",
}
_CHAIN_KEYS = {
    "k", "tsmh_steps", "cgmh_steps", "beta", "seed", "max_len", "neutral_token",
}
_LM_KEYS = {"backend", "order"}
_SOFT_KEYS = {"similarity", "sentiment"}
_SIMILARITY_KEYS = {"reference", "embeddings", "mode"}
_SENTIMENT_KEYS = {"backend", "target"}


def _expect(table, allowed, where):
    for key in table:
        if key not in allowed:
            raise ConfigError(f"{where}.{key}: unknown key")


def _typed(table, key, types, where, default=None):
    if key not in table:
        return default
    value = table[key]
    if not isinstance(value, types):
        names = "/".join(t.__name__ for t in (types if isinstance(types, tuple) else (types,)))
        raise ConfigError(f"{where}.{key}: expected {names}, got {type(value).__name__}")
    return value


def _resolve(base_dir, path_str, where, must_exist=True):
    if path_str is None:
        return None
    p = Path(path_str)
    if not p.is_absolute():
        p = base_dir / p
    if must_exist and not p.exists():
        raise ConfigError(f"{where}: file not found: {p}")
    return str(p)


def validate_config(path):
    """Parse a TOML task config into a resolved TaskSpec (strict schema)."""
    path = Path(path)
    try:
        blob = path.read_bytes()
        doc = tomllib.loads(blob.decode("utf-8"))
    except (OSError, UnicodeDecodeError) as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except tomllib.TOMLDecodeError as exc:
        raise ConfigError(f"{path}: TOML parse error: {exc}") from exc
    base_dir = path.parent

    _expect(doc, {"task", "chain", "lm", "soft"}, "config")
    task = doc.get("task", {})
    chain = doc.get("chain", {})
    lm = doc.get("lm", {})
    soft = doc.get("soft", {})
    _expect(task, _TASK_KEYS, "[task]")
    _expect(chain, _CHAIN_KEYS, "[chain]")
    _expect(lm, _LM_KEYS, "[lm]")
    _expect(soft, _SOFT_KEYS, "[soft]")

    kind = _typed(task, "kind", str, "[task]", default="interrogative")
    if kind not in KINDS:
        raise ConfigError(f"[task].kind: must be one of {KINDS}, got {kind!r}")
    keywords = _typed(task, "keywords", list, "[task]", default=[])
    if not all(isinstance(w, str) for w in keywords):
        raise ConfigError("[task].keywords: must be a list of strings")
    strict = _typed(task, "strict", bool, "[task]", default=True)
    vocab_path = _typed(task, "vocab", str, "[task]")
    if vocab_path is None:
        raise ConfigError("[task].vocab: required")
    vocab_path = _resolve(base_dir, vocab_path, "[task].vocab")
    categories_path = _resolve(
        base_dir, _typed(task, "categories", str, "[task]"), "[task].categories"
    )
    pos_default = str(_data_file("pos_lexicon.tsv")) if kind == "imperative" else None
    pos_lexicon_path = _resolve(
        base_dir, _typed(task, "pos_lexicon", str, "[task]"), "[task].pos_lexicon"
    ) or pos_default
    if kind == "imperative" and (
        pos_lexicon_path is None or not Path(pos_lexicon_path).exists()
    ):
        raise ConfigError("[task].pos_lexicon: required for the imperative task")
    formulas = tuple(_typed(task, "formulas", list, "[task]", default=[]))
    if kind == "custom" and not formulas:
        raise ConfigError("[task].formulas: required for the custom task")

    similarity = _typed(soft, "similarity", dict, "[soft]", default={})
    _expect(similarity, _SIMILARITY_KEYS, "[soft.similarity]")
    if similarity:
        if "reference" not in similarity or "embeddings" not in similarity:
            raise ConfigError("[soft.similarity]: needs reference and embeddings")
        similarity = dict(similarity)
        similarity["embeddings"] = _resolve(
            base_dir, similarity["embeddings"], "[soft.similarity].embeddings"
        )
        similarity.setdefault("mode", "avg")
        if similarity["mode"] not in ("min", "avg"):
            raise ConfigError("[soft.similarity].mode: must be min or avg")
    sentiment = _typed(soft, "sentiment", dict, "[soft]", default={})
    _expect(sentiment, _SENTIMENT_KEYS, "[soft.sentiment]")
    if kind == "sentiment" and not sentiment:
        sentiment = {"backend": "lexicon:" + str(_data_file("sentiment_lexicon.tsv"))}
    if sentiment:
        sentiment = dict(sentiment)
        sentiment.setdefault("target", "positive")
        if sentiment["target"] not in ("positive", "negative"):
            raise ConfigError("[soft.sentiment].target: must be positive or negative")
        backend = sentiment.get("backend", "")
        if backend.startswith("lexicon:"):
            resolved = _resolve(
                base_dir, backend[len("lexicon:"):], "[soft.sentiment].backend"
            )
            sentiment["backend"] = "lexicon:" + resolved
        elif not backend.startswith("bridge:"):
            raise ConfigError(
                "[soft.sentiment].backend: must be 'lexicon:<path>' or 'bridge:<url>'"
            )

    lm_backend = _typed(lm, "backend", str, "[lm]", default="")
    if lm_backend.startswith("ngram:"):
        lm_backend = "ngram:" + _resolve(base_dir, lm_backend[len("ngram:"):], "[lm].backend")
    elif lm_backend and not lm_backend.startswith("bridge:"):
        raise ConfigError("[lm].backend: must be 'ngram:<path>' or 'bridge:<url>'")

    beta = _typed(chain, "beta", (int, float), "[chain]", default=1e-10)
    if not 0.0 < float(beta) < 1.0:
        raise ConfigError("[chain].beta: must lie strictly in (0, 1)")

    return TaskSpec(
        kind=kind,
        keywords=tuple(keywords),
        strict=strict,
        vocab_path=vocab_path,
        categories_path=categories_path,
        pos_lexicon_path=pos_lexicon_path,
        formulas=formulas,
        similarity=similarity,
        sentiment=sentiment,
        k=_typed(chain, "k", int, "[chain]", default=3),
        tsmh_steps=_typed(chain, "tsmh_steps", int, "[chain]", default=100),
        cgmh_steps=_typed(chain, "cgmh_steps", int, "[chain]", default=300),
        beta=float(beta),
        seed=_typed(chain, "seed", int, "[chain]", default=0),
        max_len=_typed(chain, "max_len", int, "[chain]", default=16),
        neutral_token=_typed(chain, "neutral_token", str, "[chain]", default="the"),
        lm=lm_backend,
        ngram_order=_typed(lm, "order", int, "[lm]", default=3),
        config_sha256=hashlib.sha256(blob).hexdigest(),
    )


def _category_partition_from_wordlists(vocab, groups, residual="[OTH]"):
    """groups: ordered (name, word list); words absent from vocab are dropped."""
    members = []
    claimed = set()
    for name, words in groups:
        ids = {vocab.id_of(w) for w in words if w in vocab} - claimed
        if not ids:
            raise ConfigError(f"category {name}: no member appears in the vocabulary")
        claimed |= ids
        members.append((name, ids))
    members.append((residual, set(vocab.real_ids) - claimed))
    return CategoryPartition(vocab, members, residual)


def build_task(spec, vocab, keywords=None):
    """Bind a TaskSpec to a vocabulary: (partition, constraints, soft scorer).

    `keywords` overrides the spec's keyword list (one experiment input).
    """
    keywords = tuple(keywords if keywords is not None else spec.keywords)
    for w in keywords:
        if w not in vocab:
            raise ConfigError(f"keyword {w!r} not in vocabulary")

    if spec.kind == "interrogative":
        partition = _category_partition_from_wordlists(
            vocab,
            [
                ("[QWH]", _read_wordlist(_data_file("qwh.txt"))),
                ("[AUX]", _read_wordlist(_data_file("aux.txt"))),
            ],
        )
        for w in keywords:
            partition = add_keyword_category(partition, w)
        base = interrogative_constraints(
            partition, max_len=spec.max_len, strict=spec.strict, beta=spec.beta
        )
        formulas = list(base.formulas)
        for w in keywords:
            formulas.append(
                keyword_exactly_once(w, spec.max_len)
                if spec.strict
                else keyword_constraint(w, spec.max_len)
            )
        constraints = ConstraintSet(formulas, beta=spec.beta, partition=partition)
        soft = _build_soft(spec, vocab)
    elif spec.kind == "imperative":
        verbs, advs = [], []
        with open(spec.pos_lexicon_path, encoding="utf-8") as fh:
            for lineno, line in enumerate(fh, start=1):
                line = line.rstrip("\n")
                if not line.strip():
                    continue
                try:
                    word, tags = line.split("\t")
                except ValueError:
                    raise ConfigError(
                        f"{spec.pos_lexicon_path}:{lineno}: expected 'word<TAB>TAGS'"
                    ) from None
                tagset = set(tags.split(","))
                if "VERB" in tagset:
                    verbs.append(word)
                elif "ADV" in tagset:
                    advs.append(word)
        partition = _category_partition_from_wordlists(
            vocab, [("[VERB]", verbs), ("[ADV]", advs)]
        )
        for w in keywords:
            partition = add_keyword_category(partition, w)
        base = imperative_constraints(partition, beta=spec.beta)
        formulas = list(base.formulas)
        for w in keywords:
            formulas.append(
                keyword_exactly_once(w, spec.max_len)
                if spec.strict
                else keyword_constraint(w, spec.max_len)
            )
        constraints = ConstraintSet(formulas, beta=spec.beta, partition=partition)
        soft = _build_soft(spec, vocab)
    elif spec.kind == "sentiment":
        if not spec.sentiment:
            raise ConfigError("[soft.sentiment]: required for the sentiment task")
        partition = _category_partition_from_wordlists(vocab, [])
        for w in keywords:
            partition = add_keyword_category(partition, w)
        formulas = [
            keyword_exactly_once(w, spec.max_len)
            if spec.strict
            else keyword_constraint(w, spec.max_len)
            for w in keywords
        ]
        constraints = ConstraintSet(formulas, beta=spec.beta, partition=partition)
        soft = _build_soft(spec, vocab)
    else:  # custom
        if spec.categories_path:
            partition = build_partition(load_category_spec(spec.categories_path), vocab)
        else:
            partition = _category_partition_from_wordlists(vocab, [])
        for w in keywords:
            partition = add_keyword_category(partition, w)
        formulas = [parse_formula(f, categories=partition.names) for f in spec.formulas]
        for w in keywords:
            formulas.append(
                keyword_exactly_once(w, spec.max_len)
                if spec.strict
                else keyword_constraint(w, spec.max_len)
            )
        constraints = ConstraintSet(formulas, beta=spec.beta, partition=partition)
        soft = _build_soft(spec, vocab)
    return partition, constraints, soft


def _build_soft(spec, vocab):
    scorers = []
    if spec.similarity:
        table = EmbeddingTable.load(spec.similarity["embeddings"])
        reference = tokenize(spec.similarity["reference"], vocab)
        scorers.append(
            SimilarityScore(reference, table, vocab, mode=spec.similarity["mode"])
        )
    if spec.sentiment:
        backend_str = spec.sentiment["backend"]
        if backend_str.startswith("lexicon:"):
            backend = SentimentLexicon.load(backend_str[len("lexicon:"):])
        else:
            backend = BridgeLm(backend_str[len("bridge:"):], vocab)
        scorers.append(SentimentScore(backend, vocab, target=spec.sentiment["target"]))
    return compose(scorers)


def make_chain_config(spec, method, keywords=None, seed=None):
    """ChainConfig for one input under this task's defaults."""
    return ChainConfig(
        method=method,
        k=spec.k,
        steps=spec.tsmh_steps if method == "tsmh" else spec.cgmh_steps,
        beta=spec.beta,
        seed=spec.seed if seed is None else seed,
        max_len=spec.max_len,
        init_keywords=tuple(keywords if keywords is not None else spec.keywords),
        neutral_token=spec.neutral_token,
    )
