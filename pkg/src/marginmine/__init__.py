"""Margin-based parallel sentence mining over multilingual sentence embeddings."""

from marginmine.embed_io import (
    load_corpus,
    load_embeddings,
    load_gold,
    normalize_rows,
    read_candidates,
    save_embeddings,
    write_candidates,
)
from marginmine.evalsuite import EvalReport, optimize_threshold, precision_at_1, prf1
from marginmine.margin import MarginFunction, ScoringConfig, margin_value, neighborhoods, score_all, score_pair
from marginmine.prefilter import FilterRuleConfig, dedup_pairs, prefilter_corpus, rule_filter
from marginmine.records import CandidatePair, Corpus, EmbeddingMatrix, GoldAlignment, MiningError
from marginmine.retrieval import (
    FilterConfig,
    RetrievalStrategy,
    backward_candidates,
    combine,
    filter_candidates,
    forward_candidates,
    mine,
)
from marginmine.simcore import DuplicateRule, NeighborList, cosine, knn, neighborhood_mean
from marginmine.synthgen import SynthConfig, generate

__version__ = "0.1.0"
