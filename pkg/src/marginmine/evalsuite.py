"""Exact-match precision/recall/F1, threshold optimization, and reconstruction P@1."""

from __future__ import annotations

from dataclasses import dataclass
from itertools import groupby
from typing import Iterable, Optional

from marginmine.margin import MarginFunction, ScoringConfig, neighborhoods
from marginmine.records import CandidatePair, EmbeddingMatrix, GoldAlignment, MiningError
from marginmine.retrieval import RetrievalStrategy, mine


@dataclass(frozen=True)
class EvalReport:
    precision: float
    recall: float
    f1: float
    true_positives: int
    predicted: int
    gold: int
    threshold: Optional[float] = None

    def as_text(self) -> str:
        lines = [
            f"precision  {self.precision:.4f}",
            f"recall     {self.recall:.4f}",
            f"F1         {self.f1:.4f}",
            f"threshold  {'-' if self.threshold is None else f'{self.threshold:.6f}'}",
            f"counts     tp={self.true_positives} predicted={self.predicted} gold={self.gold}",
        ]
        return "\n".join(lines)

    def as_record(self) -> str:
        """Tab-separated P, R, F1, threshold, tp, predicted, gold."""
        thr = "NA" if self.threshold is None else f"{self.threshold:.6f}"
        return (f"{self.precision:.6f}\t{self.recall:.6f}\t{self.f1:.6f}\t{thr}\t"
                f"{self.true_positives}\t{self.predicted}\t{self.gold}")


def _report(tp: int, n_pred: int, n_gold: int, threshold: Optional[float] = None) -> EvalReport:
    p = tp / n_pred if n_pred else 0.0
    r = tp / n_gold
    # 2PR/(P+R) as one division, so equal F1 values compare equal
    f = 2 * tp / (n_pred + n_gold) if tp else 0.0
    return EvalReport(p, r, f, tp, n_pred, n_gold, threshold)


def _gold_pairs(gold) -> frozenset:
    pairs = gold.pairs if isinstance(gold, GoldAlignment) else frozenset(gold)
    if not pairs:
        raise MiningError("empty gold alignment: recall is undefined")
    return pairs


def prf1(predicted: Iterable[tuple[int, int]], gold: GoldAlignment) -> EvalReport:
    gold_pairs = _gold_pairs(gold)
    predicted = {(int(s), int(t)) for s, t in predicted}
    return _report(len(predicted & gold_pairs), len(predicted), len(gold_pairs))


def optimize_threshold(pairs: Iterable[CandidatePair], gold: GoldAlignment) -> tuple[Optional[float], EvalReport]:
    """Best-F1 cut of the score-sorted candidates.

    Cuts fall only between distinct scores; the threshold is the lowest kept
    score. Among equal F1 the higher threshold wins.
    """
    gold_pairs = _gold_pairs(gold)
    ranked = sorted(pairs, key=lambda p: (-p.score, p.src, p.tgt))
    if not ranked:
        return None, _report(0, 0, len(gold_pairs))
    seen: set[tuple[int, int]] = set()
    tp = 0
    best: Optional[EvalReport] = None
    for score, group in groupby(ranked, key=lambda p: p.score):
        for p in group:
            if p.key not in seen:
                seen.add(p.key)
                tp += p.key in gold_pairs
        rep = _report(tp, len(seen), len(gold_pairs), score)
        if best is None or rep.f1 > best.f1:
            best = rep
    return best.threshold, best


def precision_at_1(candidates: Iterable[CandidatePair], gold: GoldAlignment,
                   n_sources: Optional[int] = None) -> float:
    """Fraction of sources whose single candidate is a gold pair.

    The denominator is ``n_sources`` when given (sources without a candidate
    count as misses), else the number of candidates.
    """
    gold_pairs = gold.pairs if isinstance(gold, GoldAlignment) else frozenset(gold)
    hits, seen = 0, set()
    for c in candidates:
        if c.src in seen:
            raise MiningError(f"source {c.src} has more than one candidate")
        seen.add(c.src)
        hits += (c.src, c.tgt) in gold_pairs
    total = len(seen) if n_sources is None else n_sources
    if total == 0:
        raise MiningError("precision at 1 over zero sources")
    return hits / total


def strategy_grid(src: EmbeddingMatrix, tgt: EmbeddingMatrix, gold: GoldAlignment, k: int = 4,
                  margins=None, strategies=None, **mine_kwargs) -> list[tuple[str, str, EvalReport]]:
    """Best-threshold report for every margin function and retrieval strategy."""
    margins = [MarginFunction(m) for m in (margins or list(MarginFunction))]
    strategies = [RetrievalStrategy(s) for s in (strategies or list(RetrievalStrategy))]
    search_kw = {key: mine_kwargs[key] for key in ("block_size", "threads", "backend") if key in mine_kwargs}
    corp_kw = {key: mine_kwargs[key] for key in ("src_corpus", "tgt_corpus") if key in mine_kwargs}
    sims = None
    out = []
    for m in margins:
        cfg = ScoringConfig(k=k, margin=m, dup=mine_kwargs.get("dup"))
        # neighborhoods do not depend on the margin function
        if sims is None:
            sims = neighborhoods(src, tgt, cfg, **corp_kw, **search_kw)
        for s in strategies:
            cands = mine(src, tgt, cfg, s, sims=sims, full_rerank=mine_kwargs.get("full_rerank", False),
                         **search_kw)
            _, rep = optimize_threshold(cands, gold)
            out.append((m.value, s.value, rep))
    return out


def format_grid(rows: list[tuple[str, str, EvalReport]]) -> str:
    lines = [f"{'margin':<10}{'retrieval':<14}{'P':>8}{'R':>8}{'F1':>8}  threshold"]
    for m, s, rep in rows:
        thr = "-" if rep.threshold is None else f"{rep.threshold:.6f}"
        lines.append(f"{m:<10}{s:<14}{100 * rep.precision:8.2f}{100 * rep.recall:8.2f}{100 * rep.f1:8.2f}  {thr}")
    return "\n".join(lines)
