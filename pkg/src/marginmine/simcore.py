"""Exact cosine k-nearest-neighbor search over unit-normalized embeddings."""

from __future__ import annotations

import enum
import math
import os
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from marginmine import _kernels
from marginmine.records import Corpus, DimensionMismatchError, EmbeddingMatrix, MiningError

DEFAULT_BLOCK_SIZE = 16384
THREADS_ENV = "MARGINMINE_THREADS"


class DuplicateRule(str, enum.Enum):
    NONE = "none"
    BY_TEXT = "by-text"
    BY_VECTOR = "by-vector"


def resolve_dup(dup: Optional[DuplicateRule | str], corpus: Optional[Corpus]) -> DuplicateRule:
    """``None`` means by-text when a corpus is available, by-vector otherwise."""
    if dup is None:
        return DuplicateRule.BY_TEXT if corpus is not None else DuplicateRule.BY_VECTOR
    dup = DuplicateRule(dup)
    if dup is DuplicateRule.BY_TEXT and corpus is None:
        raise MiningError("by-text duplicate rule needs the searched side's corpus")
    return dup


def default_threads() -> int:
    env = os.environ.get(THREADS_ENV)
    if env:
        try:
            n = int(env)
        except ValueError:
            raise MiningError(f"{THREADS_ENV}={env!r} is not an integer") from None
        if n >= 1:
            return n
        raise MiningError(f"{THREADS_ENV} must be >= 1, got {n}")
    return os.cpu_count() or 1


def cosine(a, b) -> float:
    """Dot product of two unit vectors, clamped to [-1, 1]."""
    a = np.asarray(a, dtype=np.float64).ravel()
    b = np.asarray(b, dtype=np.float64).ravel()
    if a.shape != b.shape:
        raise DimensionMismatchError(f"dimension mismatch: {a.size} vs {b.size}")
    # summed in a fixed order so that cosine(a, b) == cosine(b, a) bitwise
    acc = 0.0
    for x, y in zip(a.tolist(), b.tolist()):
        acc += x * y
    return min(1.0, max(-1.0, acc))


@dataclass(frozen=True)
class NeighborList:
    query: int
    neighbors: tuple[tuple[int, float], ...]

    def __len__(self) -> int:
        return len(self.neighbors)

    @property
    def indices(self) -> list[int]:
        return [j for j, _ in self.neighbors]

    @property
    def similarities(self) -> list[float]:
        return [s for _, s in self.neighbors]


class KnnResult(Sequence):
    """Padded ``(n, k)`` neighbor arrays, also usable as a sequence of NeighborList.

    ``indices`` holds -1 and ``sims`` NaN beyond ``counts[i]``.
    """

    def __init__(self, indices: np.ndarray, sims: np.ndarray, counts: np.ndarray, k: int):
        self.indices = indices
        self.sims = sims
        self.counts = counts
        self.k = k

    def __len__(self) -> int:
        return self.indices.shape[0]

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        if i < 0:
            i += len(self)
        n = int(self.counts[i])
        return NeighborList(
            i, tuple((int(j), float(s)) for j, s in zip(self.indices[i, :n], self.sims[i, :n]))
        )

    def sums(self) -> np.ndarray:
        """Per-query sum of neighbor similarities, added left to right."""
        total = np.zeros(len(self), dtype=np.float64)
        for p in range(self.k):
            col = self.sims[:, p]
            total += np.where(np.isnan(col), 0.0, col)
        return total


def duplicate_groups(db: EmbeddingMatrix, dup: DuplicateRule, corpus: Optional[Corpus] = None) -> np.ndarray:
    """Group id per database row: the lowest row index sharing its text or bit pattern; -1 if excluded."""
    n = db.rows
    if dup is DuplicateRule.NONE:
        groups = np.arange(n, dtype=np.int64)
    elif dup is DuplicateRule.BY_TEXT:
        if corpus is None:
            raise MiningError("by-text duplicate rule needs the searched side's corpus")
        if len(corpus) != n:
            raise MiningError(f"corpus has {len(corpus)} lines but the embedding matrix has {n} rows")
        first: dict[str, int] = {}
        groups = np.fromiter((first.setdefault(s, i) for i, s in enumerate(corpus.sentences)),
                             dtype=np.int64, count=n)
    else:
        rows = np.ascontiguousarray(db.data).view(np.dtype((np.void, db.data.dtype.itemsize * db.dim))).ravel()
        _, first_idx, inverse = np.unique(rows, return_index=True, return_inverse=True)
        groups = first_idx[inverse.ravel()].astype(np.int64)
    if db.excluded:
        groups[list(db.excluded)] = -1
    return groups


def _partitions(n: int, block_size: int, threads: int) -> list[tuple[int, int]]:
    size = max(1, min(block_size, math.ceil(n / max(threads, 1))))
    return [(s, min(s + size, n)) for s in range(0, n, size)]


def run_partitioned(fn, n: int, block_size: int, threads: int) -> list:
    """Call ``fn(start, stop)`` over query partitions; results come back in partition order."""
    parts = _partitions(n, block_size, threads)
    if threads <= 1 or len(parts) <= 1:
        return [fn(a, b) for a, b in parts]
    with ThreadPoolExecutor(max_workers=threads) as pool:
        return list(pool.map(lambda ab: fn(*ab), parts))


def check_pair(queries: EmbeddingMatrix, database: EmbeddingMatrix) -> None:
    if queries.dim != database.dim:
        raise DimensionMismatchError(
            f"dimension mismatch: queries have dim {queries.dim}, database has dim {database.dim}"
        )
    if not (queries.normalized and database.normalized):
        raise MiningError("embedding matrices must be row-normalized before search")


def knn(queries: EmbeddingMatrix, database: EmbeddingMatrix, k: int,
        dup: Optional[DuplicateRule | str] = None, db_corpus: Optional[Corpus] = None,
        block_size: int = DEFAULT_BLOCK_SIZE, threads: Optional[int] = None,
        backend: Optional[str] = None) -> KnnResult:
    """Exact top-``k`` database rows for every query row, by cosine.

    At most one row per duplicate group is returned. Equal similarities are
    ordered by ascending database index. Excluded query rows get empty lists.
    """
    if k < 1:
        raise MiningError(f"k must be >= 1, got {k}")
    if block_size < 1:
        raise MiningError(f"block size must be >= 1, got {block_size}")
    check_pair(queries, database)
    groups = duplicate_groups(database, resolve_dup(dup, db_corpus), db_corpus)
    topk = _kernels.get_backend(backend)[0]
    threads = threads or default_threads()

    nq = queries.rows
    out_idx = np.full((nq, k), -1, dtype=np.int64)
    out_sim = np.full((nq, k), np.nan, dtype=np.float64)
    counts = np.zeros(nq, dtype=np.int64)
    q = queries.data
    db = database.data

    def work(a, b):
        topk(q[a:b], db, groups, k, out_idx[a:b], out_sim[a:b], counts[a:b])

    run_partitioned(work, nq, block_size, threads)
    if queries.excluded:
        ex = list(queries.excluded)
        out_idx[ex] = -1
        out_sim[ex] = np.nan
        counts[ex] = 0
    return KnnResult(out_idx, out_sim, counts, k)


def neighborhood_mean(nl: NeighborList | Sequence[float]) -> float:
    """Plain mean of the neighbor similarities."""
    sims = nl.similarities if isinstance(nl, NeighborList) else list(nl)
    if not sims:
        raise MiningError("neighborhood mean of an empty neighbor list")
    return math.fsum(sims) / len(sims)
