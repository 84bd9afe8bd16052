"""Readers and writers for embeddings, sentence files, gold alignments and candidate lists.

Embedding files are headerless little-endian float32 dumps, row-major, with
the dimensionality passed separately.
"""

from __future__ import annotations

import logging
import os
from typing import Iterable, Optional

import numpy as np

from marginmine.records import (
    CandidatePair,
    Corpus,
    EmbeddingFormatError,
    EmbeddingMatrix,
    GoldAlignment,
    MiningError,
    ZeroNormRowError,
)

logger = logging.getLogger(__name__)

_F32_LE = np.dtype("<f4")


class GoldFormatError(MiningError):
    pass


class CandidateFormatError(MiningError):
    pass


def load_embeddings(path, dim: int, permissive: bool = False) -> EmbeddingMatrix:
    """Load a raw float32 embedding dump.

    All-zero rows fail the load unless ``permissive`` is set, in which case
    they are kept in place and marked excluded.
    """
    if dim < 1:
        raise EmbeddingFormatError(f"dimension must be >= 1, got {dim}")
    size = os.path.getsize(path)
    row_bytes = 4 * dim
    if size % row_bytes != 0:
        raise EmbeddingFormatError(
            f"{path}: file size {size} bytes is not divisible by 4*dim = {row_bytes}"
        )
    if size == 0:
        raise EmbeddingFormatError(f"{path}: empty embedding file")
    data = np.fromfile(path, dtype=_F32_LE).reshape(size // row_bytes, dim)
    zero_rows = np.flatnonzero(~data.any(axis=1))
    if zero_rows.size:
        if not permissive:
            raise ZeroNormRowError(zero_rows)
        logger.warning("%s: excluding %d all-zero row(s)", path, zero_rows.size)
    return EmbeddingMatrix(data.astype(np.float32), normalized=False, excluded=tuple(zero_rows))


def save_embeddings(m: EmbeddingMatrix | np.ndarray, path) -> None:
    data = m.data if isinstance(m, EmbeddingMatrix) else np.asarray(m)
    np.ascontiguousarray(data, dtype=_F32_LE).tofile(path)


def normalize_rows(m: EmbeddingMatrix) -> EmbeddingMatrix:
    """Scale every row to unit L2 norm (float64 arithmetic, float32 storage)."""
    data = m.data.astype(np.float64)
    norms = np.sqrt(np.einsum("ij,ij->i", data, data))
    zero = norms == 0
    if m.excluded:
        zero[list(m.excluded)] = False
    if zero.any():
        raise ZeroNormRowError(np.flatnonzero(zero))
    norms[norms == 0] = 1.0
    return EmbeddingMatrix(
        (data / norms[:, None]).astype(np.float32), normalized=True, excluded=m.excluded
    )


def load_corpus(path, with_ids: bool = False) -> Corpus:
    """One sentence per line; with ``with_ids`` each line is ``id<TAB>text``."""
    sentences, ids = [], []
    with open(path, encoding="utf-8", newline="\n") as fh:
        for lineno, line in enumerate(fh, 1):
            line = line.rstrip("\n")
            if line.endswith("\r"):
                line = line[:-1]
            if with_ids:
                ident, sep, text = line.partition("\t")
                if not sep:
                    raise MiningError(f"{path}:{lineno}: expected 'id<TAB>text'")
                ids.append(ident)
                sentences.append(text)
            else:
                sentences.append(line)
    return Corpus(tuple(sentences), tuple(ids) if with_ids else None)


def _split_two(line: str, path, lineno: int, exc=GoldFormatError) -> tuple[str, str]:
    fields = line.rstrip("\r\n").split("\t")
    if len(fields) != 2 or not fields[0] or not fields[1]:
        raise exc(f"{path}:{lineno}: expected two tab-separated columns, got {line.rstrip()!r}")
    return fields[0], fields[1]


def _parse_index(value: str, path, lineno: int, bound: Optional[int], exc) -> int:
    try:
        idx = int(value)
    except ValueError:
        raise exc(f"{path}:{lineno}: {value!r} is not an integer index") from None
    if idx < 0 or (bound is not None and idx >= bound):
        raise exc(f"{path}:{lineno}: index {idx} out of range" + (f" [0, {bound})" if bound is not None else ""))
    return idx


def load_gold(path, mode: str = "index-tsv", src_corpus: Optional[Corpus] = None,
              tgt_corpus: Optional[Corpus] = None) -> GoldAlignment:
    """Read a two-column gold file into 0-based index pairs.

    ``mode`` is ``"index-tsv"`` (integers) or ``"id-tsv"`` (external ids,
    resolved against the corpora). Blank lines are ignored.
    """
    if mode not in ("index-tsv", "id-tsv"):
        raise ValueError(f"unknown gold mode {mode!r}")
    if mode == "id-tsv":
        if src_corpus is None or tgt_corpus is None or src_corpus.ids is None or tgt_corpus.ids is None:
            raise GoldFormatError("id-tsv gold requires both corpora to carry ids")
        src_ids, tgt_ids = src_corpus.id_index(), tgt_corpus.id_index()
    src_bound = len(src_corpus) if src_corpus is not None else None
    tgt_bound = len(tgt_corpus) if tgt_corpus is not None else None

    pairs = set()
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            a, b = _split_two(line, path, lineno)
            if mode == "index-tsv":
                pairs.add((_parse_index(a, path, lineno, src_bound, GoldFormatError),
                           _parse_index(b, path, lineno, tgt_bound, GoldFormatError)))
            else:
                try:
                    pairs.add((src_ids[a], tgt_ids[b]))
                except KeyError as e:
                    raise GoldFormatError(f"{path}:{lineno}: unknown id {e.args[0]!r}") from None
    return GoldAlignment(frozenset(pairs))


def write_gold(gold: GoldAlignment, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for s, t in gold:
            fh.write(f"{s}\t{t}\n")


def format_score(score: float) -> str:
    return f"{score:.6f}"


def write_candidates(pairs: Iterable[CandidatePair], out, corpora: Optional[tuple[Corpus, Corpus]] = None) -> None:
    """Write ``score<TAB>src<TAB>tgt`` lines; pairs must already be sorted by descending score."""
    pairs = list(pairs)
    for i in range(1, len(pairs)):
        if pairs[i].score > pairs[i - 1].score:
            raise MiningError(
                f"candidates not sorted by descending score at position {i} "
                f"({pairs[i - 1].score!r} < {pairs[i].score!r})"
            )
    src_ids = tgt_ids = None
    if corpora is not None and corpora[0].ids is not None and corpora[1].ids is not None:
        src_ids, tgt_ids = corpora[0].ids, corpora[1].ids
    with open(out, "w", encoding="utf-8", newline="\n") as fh:
        for p in pairs:
            s = src_ids[p.src] if src_ids is not None else p.src
            t = tgt_ids[p.tgt] if tgt_ids is not None else p.tgt
            fh.write(f"{format_score(p.score)}\t{s}\t{t}\n")


def read_candidates(path, corpora: Optional[tuple[Corpus, Corpus]] = None) -> list[CandidatePair]:
    """Parse a candidate file. IDs are resolved when id-carrying corpora are given."""
    src_ids = tgt_ids = None
    if corpora is not None and corpora[0].ids is not None and corpora[1].ids is not None:
        src_ids, tgt_ids = corpora[0].id_index(), corpora[1].id_index()
    out = []
    with open(path, encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, 1):
            if not line.strip():
                continue
            fields = line.rstrip("\r\n").split("\t")
            if len(fields) != 3:
                raise CandidateFormatError(
                    f"{path}:{lineno}: expected 'score<TAB>src<TAB>tgt', got {line.rstrip()!r}"
                )
            try:
                score = float(fields[0])
            except ValueError:
                raise CandidateFormatError(f"{path}:{lineno}: bad score {fields[0]!r}") from None
            if not np.isfinite(score):
                raise CandidateFormatError(f"{path}:{lineno}: non-finite score {fields[0]!r}")
            if src_ids is not None:
                try:
                    s, t = src_ids[fields[1]], tgt_ids[fields[2]]
                except KeyError as e:
                    raise CandidateFormatError(f"{path}:{lineno}: unknown id {e.args[0]!r}") from None
            else:
                s = _parse_index(fields[1], path, lineno, None, CandidateFormatError)
                t = _parse_index(fields[2], path, lineno, None, CandidateFormatError)
            out.append(CandidatePair(s, t, score))
    return out
