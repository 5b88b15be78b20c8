"""Retrieval metrics, confidence margins, fusion diagnostics, and
stage-1 vs stage-2 rank transition analysis.

Queries here have exactly one correct item, so AP@K reduces to 1/rank when
the correct item appears in the top K and 0 otherwise, and Re@K is the
indicator of appearing at all.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Iterable, Mapping, Sequence

import numpy as np

from .corpus import Corpus
from .fusion import FusionTrace, ScoredList


@dataclass(frozen=True)
class MetricSummary:
    name: str
    mean: float
    margin95: float
    n: int


@dataclass(frozen=True)
class QueryResult:
    query_id: str
    correct_item_id: str
    stage1: ScoredList
    stage2: ScoredList | None = None

    @property
    def rank1(self) -> int | None:
        return self.stage1.rank_of(self.correct_item_id)

    @property
    def rank2(self) -> int | None:
        return None if self.stage2 is None else self.stage2.rank_of(self.correct_item_id)


@dataclass(frozen=True)
class ItemDiagnostics:
    coverage: float  # fraction of relevant aspects mentioned by the fused reviews
    balance: float   # min/max relevant-aspect frequency among fused reviews


def average_precision_at_k(slist: ScoredList, correct_item_id: str, k: int) -> float:
    """Single-relevant AP@K: 1/rank inside the top K, else 0."""
    if k < 1:
        raise ValueError("K must be >= 1")
    rank = slist.rank_of(correct_item_id)
    if rank is not None and rank <= k:
        return 1.0 / rank
    return 0.0


def recall_at_k(slist: ScoredList, correct_item_id: str, k: int) -> float:
    if k < 1:
        raise ValueError("K must be >= 1")
    rank = slist.rank_of(correct_item_id)
    return 1.0 if rank is not None and rank <= k else 0.0


def summarize(values: Sequence[float], name: str = "metric") -> MetricSummary:
    """Mean with a 95% margin from the normal approximation,
    1.96 * s / sqrt(n) with the sample standard deviation s."""
    n = len(values)
    if n < 2:
        raise ValueError("need at least two values to summarize")
    arr = np.asarray(values, dtype=np.float64)
    mean = float(arr.mean())
    sd = float(arr.std(ddof=1))
    return MetricSummary(name=name, mean=mean, margin95=1.96 * sd / math.sqrt(n), n=n)


def fusion_diagnostics(trace: FusionTrace, corpus: Corpus,
                       relevant_aspects: Mapping[str, Iterable[str]] | None = None,
                       ) -> dict[str, ItemDiagnostics]:
    """Aspect coverage and balance of the reviews each item was scored on.

    relevant_aspects maps item id to the aspect ids that matter for the probe;
    items default to their full aspect set. Fused reviews are the union of the
    trace's per-probe selections.
    """
    out: dict[str, ItemDiagnostics] = {}
    for item_id in trace.used[0]:
        if item_id not in corpus.items:
            raise ValueError(f"trace item {item_id!r} not in corpus")
        if relevant_aspects is not None and item_id in relevant_aspects:
            rel = list(relevant_aspects[item_id])
        else:
            rel = list(corpus.items[item_id].aspect_ids())
        known = set(corpus.items[item_id].aspect_ids())
        for aid in rel:
            if aid not in known:
                raise ValueError(f"unknown aspect id {aid!r} for item {item_id!r}")
        fused: set[str] = set()
        for probe in trace.used:
            fused.update(sr.review_id for sr in probe.get(item_id, ()))
        freq = {aid: 0 for aid in rel}
        for rid in fused:
            for aid in corpus.reviews[rid].aspect_ids:
                if aid in freq:
                    freq[aid] += 1
        counts = list(freq.values())
        coverage = sum(1 for c in counts if c > 0) / len(counts) if counts else 1.0
        max_c = max(counts) if counts else 0
        balance = 1.0 if max_c == 0 else min(counts) / max_c
        out[item_id] = ItemDiagnostics(coverage=coverage, balance=balance)
    return out


def rank_transition_matrix(results: Sequence[QueryResult], k_i: int,
                           ) -> tuple[np.ndarray, tuple[float, float]]:
    """K_I x K_I counts of (stage-1 rank, stage-2 rank) pairs over queries whose
    correct item appears in both lists, plus the center of mass of that cloud."""
    counts = np.zeros((k_i, k_i), dtype=np.int64)
    r1s, r2s = [], []
    for res in results:
        r1, r2 = res.rank1, res.rank2
        if r1 is None or r2 is None or r1 > k_i or r2 > k_i:
            continue
        counts[r1 - 1, r2 - 1] += 1
        r1s.append(r1)
        r2s.append(r2)
    if not r1s:
        raise ValueError("no queries with in-list ranks at both stages")
    return counts, (float(np.mean(r1s)), float(np.mean(r2s)))


def improvement_fraction(counts: np.ndarray) -> float:
    """Share of mass where the reranker moved the correct item up (r2 < r1)."""
    total = counts.sum()
    if total == 0:
        return 0.0
    improved = sum(counts[r1, r2] for r1 in range(counts.shape[0])
                   for r2 in range(counts.shape[1]) if r2 < r1)
    return float(improved / total)
