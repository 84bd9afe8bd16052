"""Margin scoring of candidate pairs against their bidirectional k-NN neighborhoods.

For a pair (x, y)::

    b = sum(cos(x, z) for z in NN_k(x)) / 2k + sum(cos(y, z) for z in NN_k(y)) / 2k
    score = margin(cos(x, y), b)

with margin one of ``a`` (absolute), ``a - b`` (distance) or ``a / b`` (ratio).
NN_k(x) is searched in the other language and may contain y itself. The
denominator stays 2k even when fewer than k neighbors exist.
"""

from __future__ import annotations

import enum
import logging
from dataclasses import dataclass
from typing import Optional, Sequence

import numpy as np

from marginmine import _kernels
from marginmine.records import Corpus, DegenerateNeighborhoodError, EmbeddingMatrix, MiningError
from marginmine.simcore import (
    DEFAULT_BLOCK_SIZE,
    DuplicateRule,
    KnnResult,
    check_pair,
    default_threads,
    knn,
    run_partitioned,
)

logger = logging.getLogger(__name__)


class MarginFunction(str, enum.Enum):
    ABSOLUTE = "absolute"
    DISTANCE = "distance"
    RATIO = "ratio"

    @property
    def code(self) -> int:
        return {"absolute": _kernels.ABSOLUTE, "distance": _kernels.DISTANCE, "ratio": _kernels.RATIO}[self.value]


@dataclass(frozen=True)
class ScoringConfig:
    k: int = 4
    margin: MarginFunction = MarginFunction.RATIO
    dup: Optional[DuplicateRule] = None  # None: by-text with corpora, by-vector without

    def __post_init__(self):
        if self.k < 1:
            raise MiningError(f"k must be >= 1, got {self.k}")
        object.__setattr__(self, "margin", MarginFunction(self.margin))
        if self.dup is not None:
            object.__setattr__(self, "dup", DuplicateRule(self.dup))


def margin_value(a, b, f: MarginFunction | str):
    """Apply a margin function; works elementwise on arrays."""
    f = MarginFunction(f)
    if f is MarginFunction.ABSOLUTE:
        return a
    if f is MarginFunction.DISTANCE:
        return a - b
    if np.any(np.asarray(b) == 0):
        raise DegenerateNeighborhoodError("ratio margin with a zero neighborhood mean")
    if np.any(np.asarray(b) < 0):
        logger.warning("ratio margin with a negative neighborhood mean; scores change sign")
    return a / b


@dataclass(frozen=True, eq=False)
class Neighborhoods:
    """k-NN lists in both directions plus each row's half neighborhood mean sum/(2k)."""

    forward: KnnResult  # source rows searched in the target matrix
    backward: KnnResult  # target rows searched in the source matrix
    half_src: np.ndarray
    half_tgt: np.ndarray
    k: int


def _half_means(res: KnnResult, k: int, side: str) -> np.ndarray:
    short = np.flatnonzero(res.counts < k)
    if short.size:
        logger.warning(
            "%d %s row(s) have fewer than k=%d distinct neighbors; their sums are still divided by 2k",
            short.size, side, k,
        )
    return res.sums() / (2 * k)


def neighborhoods(src: EmbeddingMatrix, tgt: EmbeddingMatrix, cfg: ScoringConfig,
                  src_corpus: Optional[Corpus] = None, tgt_corpus: Optional[Corpus] = None,
                  block_size: int = DEFAULT_BLOCK_SIZE, threads: Optional[int] = None,
                  backend: Optional[str] = None) -> Neighborhoods:
    fwd = knn(src, tgt, cfg.k, cfg.dup, tgt_corpus, block_size, threads, backend)
    bwd = knn(tgt, src, cfg.k, cfg.dup, src_corpus, block_size, threads, backend)
    return Neighborhoods(fwd, bwd, _half_means(fwd, cfg.k, "source"), _half_means(bwd, cfg.k, "target"), cfg.k)


def score_pair(x: int, y: int, sims: Neighborhoods, cos_xy: float, cfg: ScoringConfig) -> float:
    if sims.k != cfg.k:
        raise MiningError(f"neighborhoods were built with k={sims.k}, config has k={cfg.k}")
    b = sims.half_src[x] + sims.half_tgt[y]
    return float(margin_value(float(cos_xy), float(b), cfg.margin))


def pair_cosines(src: EmbeddingMatrix, tgt: EmbeddingMatrix, src_idx: np.ndarray, tgt_idx: np.ndarray,
                 backend: Optional[str] = None) -> np.ndarray:
    out = np.empty(src_idx.shape[0], dtype=np.float64)
    _kernels.get_backend(backend)[2](src.data, tgt.data, src_idx, tgt_idx, out)
    return out


def score_all(src: EmbeddingMatrix, tgt: EmbeddingMatrix, pairs: Sequence[tuple[int, int]],
              cfg: ScoringConfig, batch_size: Optional[int] = None,
              src_corpus: Optional[Corpus] = None, tgt_corpus: Optional[Corpus] = None,
              sims: Optional[Neighborhoods] = None, block_size: int = DEFAULT_BLOCK_SIZE,
              threads: Optional[int] = None, backend: Optional[str] = None) -> np.ndarray:
    """Margin score of every ``(src_index, tgt_index)`` pair, in input order.

    ``batch_size`` only bounds how many pairs are scored at once.
    """
    check_pair(src, tgt)
    pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
    if pairs.size == 0:
        return np.empty(0, dtype=np.float64)
    bad = (pairs[:, 0] < 0) | (pairs[:, 0] >= src.rows) | (pairs[:, 1] < 0) | (pairs[:, 1] >= tgt.rows)
    if bad.any():
        i = int(np.flatnonzero(bad)[0])
        raise MiningError(
            f"pair {i} = ({pairs[i, 0]}, {pairs[i, 1]}) out of range for {src.rows} x {tgt.rows} matrices"
        )
    if sims is None:
        sims = neighborhoods(src, tgt, cfg, src_corpus, tgt_corpus, block_size, threads, backend)
    elif sims.k != cfg.k:
        raise MiningError(f"neighborhoods were built with k={sims.k}, config has k={cfg.k}")

    n = pairs.shape[0]
    batch = batch_size or n
    if batch < 1:
        raise MiningError(f"batch size must be >= 1, got {batch}")
    cos = np.empty(n, dtype=np.float64)

    def work(a, b):
        cos[a:b] = pair_cosines(src, tgt, pairs[a:b, 0], pairs[a:b, 1], backend)

    run_partitioned(work, n, batch, threads or default_threads())
    b = sims.half_src[pairs[:, 0]] + sims.half_tgt[pairs[:, 1]]
    return np.asarray(margin_value(cos, b, cfg.margin), dtype=np.float64)
