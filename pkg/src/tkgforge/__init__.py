"""Temporal knowledge graph forecasting harness.

Loads quadruple datasets, builds one-hop history windows, renders
anonymized samples (FID/GID/RID), scores queries with a frequency baseline
or a completions endpoint and evaluates time-aware filtered Hits@1/3/10.
"""
from .anonymize import (
    FID,
    GID,
    RID,
    AnonymizationMapping,
    AnonymizedFactLine,
    apply,
    assign_fid,
    assign_gid,
    assign_rid,
    relativize_timestamp,
)
from .evaluate import (
    DigitChunkOracle,
    EvalReport,
    GoldIndex,
    VocabularyOracle,
    build_report,
    hits_at_k,
    multi_token_stats,
    time_aware_filter,
)
from .history import HistoryWindow, Query, build_queries, select_history
from .kgstore import (
    REFERENCE_STATS,
    DatasetStats,
    Quadruple,
    TemporalKG,
    facts_before,
    load_dataset,
    reference_stats,
    validate_statistics,
    write_dataset,
)
from .pipeline import evaluate_predictions, run_frequency, run_scorer
from .samples import (
    Sample,
    answer_token,
    build_corpus,
    export_jsonl,
    read_jsonl,
    render_general,
    render_sample,
    render_specific,
)
from .scorers import EndpointConfig, RankedPredictions, frequency_score, llm_score, rank_predictions

__version__ = "0.1.0"
