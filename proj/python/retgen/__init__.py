"""Demonstration-retrieval meta-training workbench (python surface).

The compiled extension exposes the main operations: the question/answer/
context templates, answer metrics, document-weight normalization, schedule
arithmetic, and the maximum-inner-product index.
"""

from retgen._core import (  # noqa: F401
    ContractError,
    DataError,
    DimensionError,
    FormatError,
    MipsIndex,
    __version__,
    aggregate,
    checkpoint_steps,
    classification_metric,
    document_weights,
    exact_match,
    extract_answer,
    format_example,
    jaccard,
    normalize_answer,
    parse_target_answer,
    plan_fine_tune,
    question_tokens,
    render_demonstration,
    softmax,
    squad_f1,
)
