"""Rule-based cleaning of a sentence-pair stream before scoring.

Rules run in a fixed order and the first failure names the rejection:
duplicate, lang_mismatch, too_short, too_long, overlap, length_ratio.
Tokens are maximal runs of non-whitespace.
"""

from __future__ import annotations

import enum
import hashlib
from collections import Counter
from dataclasses import dataclass
from typing import Iterable, Iterator, Optional

from marginmine.records import MiningError


class Reason(str, enum.Enum):
    DUPLICATE = "duplicate"
    LANG_MISMATCH = "lang_mismatch"
    TOO_SHORT = "too_short"
    TOO_LONG = "too_long"
    OVERLAP = "overlap"
    LENGTH_RATIO = "length_ratio"


@dataclass(frozen=True)
class FilterRuleConfig:
    min_tokens: int = 3
    max_tokens: int = 80
    max_overlap: float = 0.5
    max_len_ratio: float = 2.0
    # expected (source, target) language tags, checked against a per-line sidecar
    langs: Optional[tuple[str, str]] = None

    def __post_init__(self):
        if not 0 < self.min_tokens <= self.max_tokens:
            raise MiningError(f"need 0 < min_tokens <= max_tokens, got {self.min_tokens}, {self.max_tokens}")
        if not 0 < self.max_overlap <= 1:
            raise MiningError(f"max_overlap must be in (0, 1], got {self.max_overlap}")
        if self.max_len_ratio < 1:
            raise MiningError(f"max_len_ratio must be >= 1, got {self.max_len_ratio}")


@dataclass(frozen=True)
class FilterDecision:
    keep: bool
    reason: Optional[Reason] = None


KEEP = FilterDecision(True)


def pair_digest(src: str, tgt: str) -> bytes:
    """128-bit BLAKE2b digest of ``src NUL tgt``."""
    return hashlib.blake2b(src.encode("utf-8") + b"\x00" + tgt.encode("utf-8"), digest_size=16).digest()


def dedup_pairs(pairs: Iterable[tuple[str, str]]) -> Iterator[tuple[str, str]]:
    """Yield the first occurrence of each exact (src, tgt) pair, in input order.

    Only 16-byte digests are remembered; two distinct pairs collide with
    probability around 2**-64 at realistic corpus sizes.
    """
    seen: set[bytes] = set()
    for src, tgt in pairs:
        h = pair_digest(src, tgt)
        if h in seen:
            continue
        seen.add(h)
        yield src, tgt


def rule_filter(src: str, tgt: str, cfg: FilterRuleConfig,
                tags: Optional[tuple[str, str]] = None) -> FilterDecision:
    if tags is not None and cfg.langs is not None and tuple(tags) != tuple(cfg.langs):
        return FilterDecision(False, Reason.LANG_MISMATCH)
    src_tok, tgt_tok = src.split(), tgt.split()
    ns, nt = len(src_tok), len(tgt_tok)
    if ns < cfg.min_tokens or nt < cfg.min_tokens:
        return FilterDecision(False, Reason.TOO_SHORT)
    if ns > cfg.max_tokens or nt > cfg.max_tokens:
        return FilterDecision(False, Reason.TOO_LONG)
    src_set, tgt_set = set(src_tok), set(tgt_tok)
    if len(src_set & tgt_set) / min(len(src_set), len(tgt_set)) >= cfg.max_overlap:
        return FilterDecision(False, Reason.OVERLAP)
    if max(ns, nt) / min(ns, nt) > cfg.max_len_ratio:
        return FilterDecision(False, Reason.LENGTH_RATIO)
    return KEEP


def empty_stats() -> Counter:
    return Counter({r.value: 0 for r in Reason})


def iter_prefilter(pairs: Iterable[tuple[str, str]], cfg: FilterRuleConfig,
                   tags: Optional[Iterable[tuple[str, str]]] = None,
                   stats: Optional[Counter] = None) -> Iterator[tuple[str, str]]:
    """Stream the kept pairs; rejection counts accumulate into ``stats``."""
    stats = empty_stats() if stats is None else stats
    seen: set[bytes] = set()
    if tags is None:
        rows = ((s, t, None) for s, t in pairs)
    else:
        rows = _zip_strict(pairs, tags)
    for src, tgt, tag in rows:
        h = pair_digest(src, tgt)
        if h in seen:
            stats[Reason.DUPLICATE.value] += 1
            continue
        seen.add(h)
        decision = rule_filter(src, tgt, cfg, tag)
        if decision.keep:
            yield src, tgt
        else:
            stats[decision.reason.value] += 1


def _zip_strict(pairs, tags):
    pairs, tags = iter(pairs), iter(tags)
    for n, (src, tgt) in enumerate(pairs, 1):
        tag = next(tags, None)
        if tag is None:
            raise MiningError(f"language tag sidecar ends before pair {n}")
        yield src, tgt, tuple(tag)
    if next(tags, None) is not None:
        raise MiningError("language tag sidecar has more lines than the corpus")


def prefilter_corpus(pairs: Iterable[tuple[str, str]], cfg: FilterRuleConfig,
                     tags: Optional[Iterable[tuple[str, str]]] = None) -> tuple[list[tuple[str, str]], Counter]:
    stats = empty_stats()
    kept = list(iter_prefilter(pairs, cfg, tags, stats))
    return kept, stats


def write_stats(stats: Counter, path) -> None:
    with open(path, "w", encoding="utf-8", newline="\n") as fh:
        for r in Reason:
            fh.write(f"{r.value}\t{stats.get(r.value, 0)}\n")
