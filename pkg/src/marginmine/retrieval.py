"""Candidate generation in either direction, combination of both, and filtering."""

from __future__ import annotations

import enum
from dataclasses import dataclass
from typing import Iterable, Optional

import numpy as np

from marginmine import _kernels
from marginmine.margin import MarginFunction, Neighborhoods, ScoringConfig, neighborhoods
from marginmine.records import (
    CandidatePair,
    Corpus,
    DegenerateNeighborhoodError,
    EmbeddingMatrix,
    MiningError,
)
from marginmine.simcore import DEFAULT_BLOCK_SIZE, KnnResult, check_pair, default_threads, run_partitioned


class RetrievalStrategy(str, enum.Enum):
    FORWARD = "forward"
    BACKWARD = "backward"
    INTERSECTION = "intersection"
    MAX_SCORE = "max_score"


@dataclass(frozen=True)
class FilterConfig:
    threshold: Optional[float] = None
    top_n: Optional[int] = None

    def __post_init__(self):
        if self.top_n is not None and self.top_n < 0:
            raise MiningError(f"top_n must be >= 0, got {self.top_n}")


def _best_among_neighbors(res: KnnResult, half_q: np.ndarray, half_db: np.ndarray,
                          margin: MarginFunction) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
    """Per query: the neighbor with the highest margin, ties to the lower database index."""
    valid = res.indices >= 0
    idx = np.where(valid, res.indices, 0)
    cos = np.where(valid, res.sims, 0.0)
    b = half_q[:, None] + half_db[idx]
    if margin is MarginFunction.RATIO and np.any((b == 0) & valid):
        raise DegenerateNeighborhoodError("ratio margin with a zero neighborhood mean")
    with np.errstate(divide="ignore", invalid="ignore"):
        scores = _kernels._numpy_margin(cos, b, margin.code)
    scores = np.where(valid, scores, -np.inf)
    # primary key score descending, secondary target index ascending
    order = np.lexsort((np.where(valid, idx, np.iinfo(np.int64).max), -scores), axis=1)
    pick = order[:, 0]
    rows = np.arange(len(res))
    return idx[rows, pick], scores[rows, pick], res.counts > 0


def _one_direction(queries: EmbeddingMatrix, database: EmbeddingMatrix, res: KnnResult,
                   half_q: np.ndarray, half_db: np.ndarray, cfg: ScoringConfig, full_rerank: bool,
                   block_size: int, threads: Optional[int], backend: Optional[str]):
    if full_rerank:
        n = queries.rows
        best = np.full(n, -1, dtype=np.int64)
        score = np.full(n, -np.inf)
        cos = np.full(n, np.nan)
        active = database.active_mask()
        rerank = _kernels.get_backend(backend)[1]
        degenerate = []

        def work(a, b):
            degenerate.append(rerank(queries.data[a:b], database.data, active, half_q[a:b], half_db,
                                     cfg.margin.code, best[a:b], score[a:b], cos[a:b]))

        run_partitioned(work, n, block_size, threads or default_threads())
        if sum(degenerate):
            raise DegenerateNeighborhoodError("ratio margin with a zero neighborhood mean")
        has = queries.active_mask() & (best >= 0)
        return best, score, has
    return _best_among_neighbors(res, half_q, half_db, cfg.margin)


def _prepare(src, tgt, cfg, sims, src_corpus, tgt_corpus, block_size, threads, backend):
    check_pair(src, tgt)
    if not tgt.active_mask().any() or not src.active_mask().any():
        raise MiningError("no searchable rows: an embedding matrix is empty after exclusions")
    if sims is None:
        sims = neighborhoods(src, tgt, cfg, src_corpus, tgt_corpus, block_size, threads, backend)
    elif sims.k != cfg.k:
        raise MiningError(f"neighborhoods were built with k={sims.k}, config has k={cfg.k}")
    return sims


def forward_candidates(src: EmbeddingMatrix, tgt: EmbeddingMatrix, cfg: ScoringConfig,
                       sims: Optional[Neighborhoods] = None, full_rerank: bool = False,
                       src_corpus: Optional[Corpus] = None, tgt_corpus: Optional[Corpus] = None,
                       block_size: int = DEFAULT_BLOCK_SIZE, threads: Optional[int] = None,
                       backend: Optional[str] = None) -> list[CandidatePair]:
    """One best-scoring target per source row, searched among its k cosine-nearest targets.

    ``full_rerank`` scores every target instead of only the k nearest.
    """
    sims = _prepare(src, tgt, cfg, sims, src_corpus, tgt_corpus, block_size, threads, backend)
    best, score, has = _one_direction(src, tgt, sims.forward, sims.half_src, sims.half_tgt, cfg,
                                      full_rerank, block_size, threads, backend)
    return [CandidatePair(i, int(best[i]), float(score[i]), "fwd") for i in np.flatnonzero(has)]


def backward_candidates(src: EmbeddingMatrix, tgt: EmbeddingMatrix, cfg: ScoringConfig,
                        sims: Optional[Neighborhoods] = None, full_rerank: bool = False,
                        src_corpus: Optional[Corpus] = None, tgt_corpus: Optional[Corpus] = None,
                        block_size: int = DEFAULT_BLOCK_SIZE, threads: Optional[int] = None,
                        backend: Optional[str] = None) -> list[CandidatePair]:
    """One best-scoring source per target row; pairs keep (src, tgt) orientation."""
    sims = _prepare(src, tgt, cfg, sims, src_corpus, tgt_corpus, block_size, threads, backend)
    best, score, has = _one_direction(tgt, src, sims.backward, sims.half_tgt, sims.half_src, cfg,
                                      full_rerank, block_size, threads, backend)
    return [CandidatePair(int(best[j]), j, float(score[j]), "bwd") for j in np.flatnonzero(has)]


def combine(fwd: Iterable[CandidatePair], bwd: Iterable[CandidatePair],
            strategy: RetrievalStrategy | str) -> list[CandidatePair]:
    """Merge forward and backward candidates.

    intersection keeps pairs found in both directions. max_score takes the
    union and drops every pair that shares a source or a target with a
    strictly higher-scoring pair; equal scores survive together.
    """
    strategy = RetrievalStrategy(strategy)
    fwd, bwd = list(fwd), list(bwd)
    if strategy is RetrievalStrategy.FORWARD:
        return fwd
    if strategy is RetrievalStrategy.BACKWARD:
        return bwd

    merged: dict[tuple[int, int], CandidatePair] = {}
    for p in fwd:
        merged[p.key] = p
    both = set()
    for p in bwd:
        q = merged.get(p.key)
        if q is None:
            merged[p.key] = p
        else:
            both.add(p.key)
            if p.score > q.score:
                merged[p.key] = p
    if strategy is RetrievalStrategy.INTERSECTION:
        return [CandidatePair(p.src, p.tgt, p.score, "both") for key, p in merged.items() if key in both]

    best_src: dict[int, float] = {}
    best_tgt: dict[int, float] = {}
    for p in merged.values():
        best_src[p.src] = max(p.score, best_src.get(p.src, p.score))
        best_tgt[p.tgt] = max(p.score, best_tgt.get(p.tgt, p.score))
    out = []
    for key, p in merged.items():
        if p.score >= best_src[p.src] and p.score >= best_tgt[p.tgt]:
            out.append(CandidatePair(p.src, p.tgt, p.score, "both" if key in both else p.origin))
    return out


def sort_candidates(pairs: Iterable[CandidatePair]) -> list[CandidatePair]:
    return sorted(pairs, key=lambda p: (-p.score, p.src, p.tgt))


def filter_candidates(pairs: Iterable[CandidatePair], f: FilterConfig) -> list[CandidatePair]:
    """Sort by descending score, then keep score >= threshold, then the first top_n."""
    if f.threshold is None and f.top_n is None:
        raise MiningError("filtering needs a threshold, a top_n, or both")
    out = sort_candidates(pairs)
    if f.threshold is not None:
        out = [p for p in out if p.score >= f.threshold]
    if f.top_n is not None:
        out = out[: f.top_n]
    return out


def mine(src: EmbeddingMatrix, tgt: EmbeddingMatrix, cfg: ScoringConfig,
         strategy: RetrievalStrategy | str = RetrievalStrategy.MAX_SCORE,
         full_rerank: bool = False, src_corpus: Optional[Corpus] = None,
         tgt_corpus: Optional[Corpus] = None, sims: Optional[Neighborhoods] = None,
         block_size: int = DEFAULT_BLOCK_SIZE, threads: Optional[int] = None,
         backend: Optional[str] = None) -> list[CandidatePair]:
    """Candidates for one strategy, sorted by descending score; neighborhoods are computed once."""
    strategy = RetrievalStrategy(strategy)
    sims = _prepare(src, tgt, cfg, sims, src_corpus, tgt_corpus, block_size, threads, backend)
    kw = dict(sims=sims, full_rerank=full_rerank, block_size=block_size, threads=threads, backend=backend)
    fwd = forward_candidates(src, tgt, cfg, **kw) if strategy is not RetrievalStrategy.BACKWARD else []
    bwd = backward_candidates(src, tgt, cfg, **kw) if strategy is not RetrievalStrategy.FORWARD else []
    return sort_candidates(combine(fwd, bwd, strategy))
