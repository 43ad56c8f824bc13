"""Toolkit for provenance-annotated answer generation.

Provides the [PROVE] tag grammar (parsing, serialization, validation),
sentence segmentation, corpus I/O and statistics, evaluation metrics,
embedding-based alignment, RL reward scoring with group-relative
advantages, LLM-judge orchestration, an extractive baseline, a FastAPI
reward service, and a batch CLI.
"""

from provekit.errors import (
    DegenerateInputError,
    DimensionMismatchError,
    EmptyCorpusError,
    EmptyDocumentsError,
    EmptyInputError,
    GatewayUnavailableError,
    IndexOutOfRangeError,
    JudgeParseError,
    ParseError,
    ProveError,
    RemoteUnavailableError,
    SchemaError,
)
from provekit.syntax import (
    AnnotatedAnswer,
    AnnotatedSegment,
    DetachedTag,
    ProvenanceTriple,
    ProveTag,
    RelationType,
    ValidationPolicy,
    ValidationReport,
    Violation,
    ViolationKind,
    build_answer,
    parse_annotated,
    serialize,
    strip_tags,
    validate,
    validate_text,
)
from provekit.textseg import split_sentences, tokenize
from provekit.corpus import (
    CorpusStats,
    Document,
    DocumentSet,
    Instance,
    Prediction,
    StatSummary,
    compute_stats,
    load_instances,
    load_predictions,
)
from provekit.metrics import (
    DiagnosticCounts,
    EvalReport,
    PrfScore,
    bleu,
    diagnose,
    evaluate_corpus,
    format_validity_rate,
    pearson,
    per_relation_prf,
    provenance_prf,
    rouge_l,
)
from provekit.embedding import (
    AlignmentPair,
    LocalHashedTfEmbedder,
    RemoteEmbedder,
    align_forward,
    align_reverse,
    cosine,
    embedder_from_env,
)
from provekit.reward import (
    DEFAULT_CONFIG,
    RewardBreakdown,
    RewardConfig,
    group_advantages,
    reward_prov,
    reward_sim,
    reward_total,
    score_group,
)
from provekit.baseline import BaselineConfig, generate_extractive

__version__ = "0.1.0"
