"""Hot loops: duplicate-aware top-k search, full-database margin re-ranking and pair cosines.

Two interchangeable backends implement the same three kernels:

* ``numba``: ``@njit(nogil=True)`` loops. Each dot product is accumulated
  sequentially in float64, so a query's result never depends on how the
  queries were partitioned.
* ``numpy``: blocked float64 matrix products plus vectorized selection.

The numba backend is used when numba imports and ``MARGINMINE_DISABLE_NUMBA``
is unset or "0". Both backends clamp similarities to [-1, 1] before ranking
and break ties by lower database index.

Kernel conventions: ``groups[j]`` is the duplicate-group id of database row
``j`` (``-1`` for rows excluded from search); outputs are preallocated,
``out_idx`` padded with -1 and ``out_sim`` with NaN past ``counts[i]``.
"""

from __future__ import annotations

import os

import numpy as np

ABSOLUTE, DISTANCE, RATIO = 0, 1, 2

_ENV_FLAG = "MARGINMINE_DISABLE_NUMBA"

try:
    import numba
    from numba import njit

    HAS_NUMBA = True
except ImportError:  # pragma: no cover - numba is a hard dependency in practice
    HAS_NUMBA = False


def numba_requested() -> bool:
    return os.environ.get(_ENV_FLAG, "").strip() in ("", "0")


# numpy backend ---------------------------------------------------------------

# rows of float64 similarities held at once by the numpy path
_NUMPY_CELLS = 1 << 24


def _numpy_sims(queries, database):
    # product then a sum over the contiguous last axis: every (query, row) cell
    # goes through the same reduction, so its bits depend on neither its
    # position nor the block it sits in (a BLAS matmul or matvec promises
    # neither, and identical rows could stop tying)
    db = database.astype(np.float64)
    q = queries.astype(np.float64)
    sims = np.empty((q.shape[0], db.shape[0]))
    step = max(1, _NUMPY_CELLS // max(db.size, 1))
    for a in range(0, q.shape[0], step):
        np.sum(q[a:a + step, None, :] * db[None, :, :], axis=2, out=sims[a:a + step])
    np.clip(sims, -1.0, 1.0, out=sims)
    return sims


def _numpy_chunks(nq, ndb):
    step = max(1, _NUMPY_CELLS // max(ndb, 1))
    return range(0, nq, step), step


def topk_numpy(queries, database, groups, k, out_idx, out_sim, counts):
    active = groups >= 0
    n_active = int(active.sum())
    distinct = np.unique(groups[active]).size == n_active
    starts, step = _numpy_chunks(queries.shape[0], database.shape[0])
    for start in starts:
        sims = _numpy_sims(queries[start:start + step], database)
        sims[:, ~active] = -np.inf
        # stable sort on -sim keeps ascending index inside ties
        order = np.argsort(-sims, axis=1, kind="stable")
        for r in range(sims.shape[0]):
            qi = start + r
            if distinct:
                take = order[r, :min(k, n_active)]
            else:
                seen, picked = set(), []
                for j in order[r, :n_active]:
                    g = groups[j]
                    if g in seen:
                        continue
                    seen.add(g)
                    picked.append(j)
                    if len(picked) == k:
                        break
                take = np.asarray(picked, dtype=np.int64)
            n = take.size
            out_idx[qi, :n] = take
            out_sim[qi, :n] = sims[r, take]
            counts[qi] = n


def _numpy_margin(cos, b, kind):
    if kind == ABSOLUTE:
        return cos
    if kind == DISTANCE:
        return cos - b
    with np.errstate(divide="ignore", invalid="ignore"):
        return cos / b


def full_rerank_numpy(queries, database, active, half_q, half_db, kind, out_idx, out_score, out_cos):
    """Best margin over every active database row; returns the number of zero denominators met."""
    degenerate = 0
    starts, step = _numpy_chunks(queries.shape[0], database.shape[0])
    for start in starts:
        sims = _numpy_sims(queries[start:start + step], database)
        b = half_q[start:start + step, None] + half_db[None, :]
        if kind == RATIO:
            degenerate += int(np.count_nonzero((b == 0) & active[None, :]))
        scores = _numpy_margin(sims, b, kind)
        scores[:, ~active] = -np.inf
        best = np.argmax(scores, axis=1)  # first maximum, i.e. lowest index
        rows = np.arange(sims.shape[0])
        out_idx[start:start + step] = best
        out_score[start:start + step] = scores[rows, best]
        out_cos[start:start + step] = sims[rows, best]
    return degenerate


def pair_cos_numpy(a, b, ia, ib, out):
    if ia.size:
        x = a[ia].astype(np.float64)
        y = b[ib].astype(np.float64)
        out[:] = np.clip(np.einsum("ij,ij->i", x, y), -1.0, 1.0)


# numba backend ---------------------------------------------------------------

if HAS_NUMBA:

    @njit(nogil=True, cache=True)
    def _dot(a, i, b, j):
        acc = 0.0
        for d in range(a.shape[1]):
            acc += np.float64(a[i, d]) * np.float64(b[j, d])
        if acc > 1.0:
            return 1.0
        if acc < -1.0:
            return -1.0
        return acc

    @njit(nogil=True, cache=True)
    def topk_numba(queries, database, groups, k, out_idx, out_sim, counts):
        nq = queries.shape[0]
        ndb = database.shape[0]
        for qi in range(nq):
            count = 0
            for j in range(ndb):
                g = groups[j]
                if g < 0:
                    continue
                s = _dot(queries, qi, database, j)
                # rows arrive in ascending index order, so an equal score never displaces
                if count == k and s <= out_sim[qi, k - 1]:
                    continue
                pos = -1
                for p in range(count):
                    if groups[out_idx[qi, p]] == g:
                        pos = p
                        break
                if pos >= 0:
                    if s <= out_sim[qi, pos]:
                        continue
                    for p in range(pos, count - 1):
                        out_idx[qi, p] = out_idx[qi, p + 1]
                        out_sim[qi, p] = out_sim[qi, p + 1]
                    count -= 1
                elif count == k:
                    count -= 1
                p = count
                while p > 0 and out_sim[qi, p - 1] < s:
                    out_idx[qi, p] = out_idx[qi, p - 1]
                    out_sim[qi, p] = out_sim[qi, p - 1]
                    p -= 1
                out_idx[qi, p] = j
                out_sim[qi, p] = s
                count += 1
            for p in range(count, k):
                out_idx[qi, p] = -1
                out_sim[qi, p] = np.nan
            counts[qi] = count

    @njit(nogil=True, cache=True)
    def full_rerank_numba(queries, database, active, half_q, half_db, kind, out_idx, out_score, out_cos):
        degenerate = 0
        for qi in range(queries.shape[0]):
            best = -np.inf
            best_j = -1
            best_cos = np.nan
            for j in range(database.shape[0]):
                if not active[j]:
                    continue
                c = _dot(queries, qi, database, j)
                b = half_q[qi] + half_db[j]
                if kind == ABSOLUTE:
                    sc = c
                elif kind == DISTANCE:
                    sc = c - b
                else:
                    if b == 0.0:
                        degenerate += 1
                        continue
                    sc = c / b
                if sc > best or best_j < 0:
                    best = sc
                    best_j = j
                    best_cos = c
            out_idx[qi] = best_j
            out_score[qi] = best
            out_cos[qi] = best_cos
        return degenerate

    @njit(nogil=True, cache=True)
    def pair_cos_numba(a, b, ia, ib, out):
        for p in range(ia.shape[0]):
            out[p] = _dot(a, ia[p], b, ib[p])


BACKENDS = {
    "numpy": (topk_numpy, full_rerank_numpy, pair_cos_numpy),
}
if HAS_NUMBA:
    BACKENDS["numba"] = (topk_numba, full_rerank_numba, pair_cos_numba)


def backend_name() -> str:
    return "numba" if HAS_NUMBA and numba_requested() else "numpy"


def get_backend(name: str | None = None):
    """Return ``(topk, full_rerank, pair_cos)`` for ``name`` or for the active backend."""
    return BACKENDS[name or backend_name()]
