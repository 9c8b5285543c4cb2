"""Scikit-learn style facade: fit a language model, predict sentences.

TsmhGenerator wraps the whole pipeline behind the estimator API so it
composes with the wider ecosystem (get_params/set_params, clone,
check_is_fitted).  fit() builds a vocabulary from the training sentences and
trains the n-gram model; predict() maps keyword sets to the best sentence
found by a constrained chain per input.
"""

from __future__ import annotations

from dataclasses import replace

from sklearn.base import BaseEstimator
from sklearn.exceptions import NotFittedError

from .lm import NGramModel
from .sampler import run_chain
from .tasks import TaskSpec, _data_file, _read_wordlist, build_task, make_chain_config
from .vocab import Vocabulary, detokenize, tokenize


def _as_keyword_tuple(row):
    if isinstance(row, str):
        return tuple(row.split())
    return tuple(row)


class TsmhGenerator(BaseEstimator):
    """Constrained sentence generator with a fit/predict surface.

    Parameters
    ----------
    task : str
        One of "interrogative", "imperative", "sentiment", "custom".
    method : str
        "tsmh" (tree-search proposals, `steps` moves) or "cgmh"
        (single-edit baseline, `baseline_steps` moves).
    k : int
        Positions edited per tree-search move.
    steps, baseline_steps : int
        Chain lengths for the two methods.
    beta : float
        Hard-constraint violation penalty base, in (0, 1).
    strict : bool
        Apply the exactly-one refinements for question words, auxiliaries
        and keywords.
    order : int
        N-gram order for the fitted language model.
    add_k : float
        Additive smoothing constant.
    max_len : int
        Longest sentence the sampler may visit.
    neutral_token : str
        Padding token used to bring short keyword seeds up to length 2.
    extra_vocab : tuple
        Tokens guaranteed a vocabulary slot even when absent from the
        training sentences (category words are always included).
    random_state : int
        Base seed; input i runs with seed random_state + i.
    """

    def __init__(
        self,
        task="interrogative",
        method="tsmh",
        k=3,
        steps=100,
        baseline_steps=300,
        beta=1e-10,
        strict=True,
        order=3,
        add_k=0.01,
        max_len=16,
        neutral_token="the",
        extra_vocab=(),
        random_state=0,
    ):
        self.task = task
        self.method = method
        self.k = k
        self.steps = steps
        self.baseline_steps = baseline_steps
        self.beta = beta
        self.strict = strict
        self.order = order
        self.add_k = add_k
        self.max_len = max_len
        self.neutral_token = neutral_token
        self.extra_vocab = extra_vocab
        self.random_state = random_state

    def _validate_params(self):
        if self.task not in ("interrogative", "imperative", "sentiment", "custom"):
            raise ValueError(f"unknown task {self.task!r}")
        if self.method not in ("tsmh", "cgmh"):
            raise ValueError(f"unknown method {self.method!r}")
        if not 0.0 < self.beta < 1.0:
            raise ValueError("beta must lie strictly in (0, 1)")
        if self.k < 1 or self.steps < 1 or self.baseline_steps < 1:
            raise ValueError("k and step counts must be >= 1")

    def fit(self, X, y=None):
        """Fit the language model on an iterable of sentence strings."""
        self._validate_params()
        sentences = [s for s in X if s and s.strip()]
        if not sentences:
            raise ValueError("fit needs at least one non-empty sentence")
        words = []
        seen = set()

        def add(w):
            if w not in seen:
                seen.add(w)
                words.append(w)

        for sentence in sentences:
            for raw in sentence.lower().split():
                if len(raw) > 1 and raw[-1] in ".?!,;":
                    add(raw[:-1])
                    add(raw[-1])
                else:
                    add(raw)
        for w in _read_wordlist(_data_file("qwh.txt")):
            add(w)
        for w in _read_wordlist(_data_file("aux.txt")):
            add(w)
        add(self.neutral_token)
        for w in self.extra_vocab:
            add(w)
        self.vocab_ = Vocabulary(words)
        self.lm_ = NGramModel.from_sentences(
            (tokenize(s, self.vocab_) for s in sentences),
            self.vocab_,
            order=self.order,
            add_k=self.add_k,
        )
        self.n_sentences_ = len(sentences)
        return self

    def _check_fitted(self):
        if not hasattr(self, "lm_"):
            raise NotFittedError("this TsmhGenerator instance is not fitted yet")

    def _spec(self):
        return TaskSpec(
            kind=self.task,
            keywords=(),
            strict=self.strict,
            vocab_path="",
            categories_path=None,
            pos_lexicon_path=None,
            formulas=(),
            similarity={},
            sentiment=(
                {
                    "backend": "lexicon:" + str(_data_file("sentiment_lexicon.tsv")),
                    "target": "positive",
                }
                if self.task == "sentiment"
                else {}
            ),
            k=self.k,
            tsmh_steps=self.steps,
            cgmh_steps=self.baseline_steps,
            beta=self.beta,
            seed=self.random_state,
            max_len=self.max_len,
            neutral_token=self.neutral_token,
            lm="",
            ngram_order=self.order,
            config_sha256="",
        )

    def sample_chain(self, keywords, seed=None):
        """Run one chain for one keyword set; returns the ChainResult."""
        self._check_fitted()
        keywords = _as_keyword_tuple(keywords)
        spec = self._spec()
        partition, constraints, soft = build_task(spec, self.vocab_, keywords=keywords)
        config = make_chain_config(
            spec, self.method, keywords=keywords,
            seed=self.random_state if seed is None else seed,
        )
        config = replace(config, steps=self.steps if self.method == "tsmh" else self.baseline_steps)
        return run_chain(config, partition, constraints, self.lm_, soft)

    def predict(self, X):
        """Best sentence per keyword set (argmax target over each chain)."""
        self._check_fitted()
        out = []
        for i, row in enumerate(X):
            result = self.sample_chain(row, seed=self.random_state + i)
            out.append(detokenize(result.best.tokens, self.vocab_))
        return out

    def score_sentences(self, X):
        """Language-model log score per sentence string (diagnostic helper)."""
        self._check_fitted()
        return [self.lm_.sentence_logscore(tokenize(s, self.vocab_)) for s in X]
