"""Constrained sentence sampling via tree-search-enhanced Metropolis-Hastings.

Sentences are drawn from a target proportional to a language-model score
times hard (propositional, word-category) and soft (similarity, sentiment)
constraint scores.  The tree-search proposal edits several words per move by
enumerating edit templates and biasing toward templates that violate fewer
constraints; a single-edit baseline proposer is included for comparison.
"""

from .logic import (
    ConstraintSet,
    FormulaError,
    eval_sentence,
    eval_template,
    format_formula,
    imperative_constraints,
    interrogative_constraints,
    keyword_constraint,
    keyword_exactly_once,
    parse_formula,
)
from .estimator import TsmhGenerator
from .lm import BackendError, BridgeLm, NGramModel
from .proposal import ProposalRecord, TsmhProposer
from .sampler import (
    ChainConfig,
    ChainResult,
    CgmhProposer,
    Target,
    exact_distribution,
    run_chain,
)
from .soft import (
    ConstantScore,
    EmbeddingTable,
    SentimentLexicon,
    SentimentScore,
    SimilarityScore,
    compose,
    similarity_score,
)
from .vocab import (
    CategoryPartition,
    VocabError,
    Vocabulary,
    add_keyword_category,
    build_partition,
    detokenize,
    load_vocabulary,
    tokenize,
)

__version__ = "0.1.0"

__all__ = [
    "BackendError",
    "BridgeLm",
    "CategoryPartition",
    "ChainConfig",
    "ChainResult",
    "CgmhProposer",
    "ConstantScore",
    "ConstraintSet",
    "EmbeddingTable",
    "FormulaError",
    "NGramModel",
    "ProposalRecord",
    "SentimentLexicon",
    "SentimentScore",
    "SimilarityScore",
    "Target",
    "TsmhGenerator",
    "TsmhProposer",
    "VocabError",
    "Vocabulary",
    "add_keyword_category",
    "build_partition",
    "compose",
    "detokenize",
    "eval_sentence",
    "eval_template",
    "exact_distribution",
    "format_formula",
    "imperative_constraints",
    "interrogative_constraints",
    "keyword_constraint",
    "keyword_exactly_once",
    "load_vocabulary",
    "parse_formula",
    "run_chain",
    "similarity_score",
    "tokenize",
]
