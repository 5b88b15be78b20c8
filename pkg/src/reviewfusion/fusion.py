"""First-stage retrieval: monolithic late fusion and aspect fusion.

Late fusion scores an item as the mean of its top-K_R probe-review dot
products. Aspect fusion runs that per extracted aspect and combines the
per-aspect results with one of four score aggregators (arithmetic, geometric,
harmonic mean, minimum) or two rank aggregators (Borda count, round-robin
interleave). Ties break by score descending, then id ascending, everywhere.
"""

from __future__ import annotations

from dataclasses import dataclass
from enum import Enum
from typing import Mapping, Sequence

import numpy as np

from .embedstore import EmbeddingStore, ScoredReview

SCORE_EPS = 1e-9  # floor applied to scores before GMean/HMean


class FusionError(ValueError):
    pass


class Aggregator(Enum):
    AMEAN = "amean"
    GMEAN = "gmean"
    HMEAN = "hmean"
    MIN = "min"
    BORDA = "borda"
    ROUND_ROBIN = "round-robin"

    @property
    def score_based(self) -> bool:
        return self in (Aggregator.AMEAN, Aggregator.GMEAN, Aggregator.HMEAN, Aggregator.MIN)

    @classmethod
    def from_string(cls, name: str) -> "Aggregator":
        key = name.strip().lower().replace("_", "-")
        aliases = {"rr": "round-robin", "roundrobin": "round-robin"}
        key = aliases.get(key, key)
        for agg in cls:
            if agg.value == key:
                return agg
        raise FusionError(f"unknown aggregator {name!r}")


@dataclass(frozen=True)
class ScoredList:
    """Ranked (item_id, score) pairs, at most k long, scores non-increasing,
    ties id-ascending, no duplicates."""

    entries: tuple[tuple[str, float], ...]
    k: int

    def ids(self) -> tuple[str, ...]:
        return tuple(iid for iid, _ in self.entries)

    def rank_of(self, item_id: str) -> int | None:
        """1-based rank, or None if the item is not listed."""
        for pos, (iid, _) in enumerate(self.entries):
            if iid == item_id:
                return pos + 1
        return None


@dataclass(frozen=True)
class FusionTrace:
    """Which reviews were actually averaged, per probe and per item.

    mode is "mono" (single full-query probe) or "aspect" (one probe per
    extracted aspect, in extraction order).
    """

    mode: str
    probe_labels: tuple[str, ...]
    used: tuple[dict[str, tuple[ScoredReview, ...]], ...]


@dataclass
class AspectScoreMatrix:
    aspect_ids: list[str]
    item_ids: list[str]
    scores: np.ndarray  # (n_aspects, n_items) float64


def _late_fusion_pass(store: EmbeddingStore, probe, k_r: int):
    if k_r < 1:
        raise FusionError("K_R must be >= 1")
    if not store.item_index:
        raise FusionError("empty store: no items to score")
    raw = store.probe_scores(probe)
    scores: dict[str, float] = {}
    used: dict[str, tuple[ScoredReview, ...]] = {}
    for item_id, rids in store.item_index.items():
        if not rids:
            continue  # a review-score average is undefined for unreviewed items
        start, end = store.segment(item_id)
        seg = raw[start:end]
        order = np.argsort(-seg, kind="stable")
        kk = min(k_r, len(rids))
        top = order[:kk]
        csum = np.cumsum(seg[top])
        scores[item_id] = float(csum[kk - 1] / kk)
        used[item_id] = tuple(ScoredReview(rids[int(j)], float(seg[int(j)])) for j in top)
    return scores, used


def late_fusion(store: EmbeddingStore, probe, k_r: int) -> tuple[dict[str, float], FusionTrace]:
    """Per item, the mean of its top-min(K_R, R_i) probe-review scores.
    Items without any review are absent from the result (and so can never be
    retrieved)."""
    scores, used = _late_fusion_pass(store, probe, k_r)
    return scores, FusionTrace(mode="mono", probe_labels=("query",), used=(used,))


def rank_top_k(scores: Mapping[str, float], k_i: int) -> ScoredList:
    """Top-K_I items by score descending, ties by id ascending."""
    if k_i < 1:
        raise FusionError("K_I must be >= 1")
    ranked = sorted(scores.items(), key=lambda kv: (-kv[1], kv[0]))[:k_i]
    return ScoredList(entries=tuple((iid, float(s)) for iid, s in ranked), k=k_i)


def monolithic_lf(store: EmbeddingStore, query_vec, k_r: int, k_i: int) -> tuple[ScoredList, FusionTrace]:
    """Late fusion with the full, undecomposed query vector."""
    scores, trace = late_fusion(store, query_vec, k_r)
    return rank_top_k(scores, k_i), trace


def aspect_item_scores(store: EmbeddingStore, aspect_vecs: Sequence, k_r: int,
                       labels: Sequence[str] | None = None) -> tuple[AspectScoreMatrix, FusionTrace]:
    """One late-fusion row per aspect vector, rows kept in extraction order."""
    if len(aspect_vecs) < 1:
        raise FusionError("need at least one aspect vector")
    if labels is None:
        labels = [f"a{j}" for j in range(len(aspect_vecs))]
    item_ids = [iid for iid, rids in store.item_index.items() if rids]
    rows = []
    used_all = []
    for vec in aspect_vecs:
        scores, used = _late_fusion_pass(store, vec, k_r)
        rows.append([scores[iid] for iid in item_ids])
        used_all.append(used)
    matrix = AspectScoreMatrix(
        aspect_ids=list(labels),
        item_ids=item_ids,
        scores=np.asarray(rows, dtype=np.float64),
    )
    trace = FusionTrace(mode="aspect", probe_labels=tuple(labels), used=tuple(used_all))
    return matrix, trace


def aggregate_scores(matrix: AspectScoreMatrix, method: Aggregator) -> dict[str, float]:
    """Collapse per-aspect scores to one score per item.

    GMean and HMean floor each score at SCORE_EPS first: dot products can be
    non-positive, and the floor preserves their one-bad-aspect-sinks-the-item
    behaviour instead of producing NaNs.
    """
    if not method.score_based:
        raise FusionError(f"{method.value} is rank-based; use borda_merge/round_robin_merge")
    if matrix.scores.size == 0:
        raise FusionError("empty aspect score matrix")
    s = matrix.scores
    n_aspects = s.shape[0]
    if method is Aggregator.AMEAN:
        agg = s.mean(axis=0)
    elif method is Aggregator.MIN:
        agg = s.min(axis=0)
    else:
        clamped = np.maximum(s, SCORE_EPS)
        if method is Aggregator.GMEAN:
            agg = np.exp(np.log(clamped).mean(axis=0))
        else:
            agg = n_aspects / (1.0 / clamped).sum(axis=0)
    return {iid: float(v) for iid, v in zip(matrix.item_ids, agg)}


def borda_merge(lists: Sequence[ScoredList], k_i: int) -> ScoredList:
    """Borda count: an item at rank r in a list of capacity K_I earns
    K_I - r + 1 points there and 0 from lists that omit it."""
    points: dict[str, float] = {}
    for slist in lists:
        if len(slist.entries) > k_i:
            raise FusionError("input list longer than K_I")
        for pos, (iid, _) in enumerate(slist.entries):
            points[iid] = points.get(iid, 0.0) + float(k_i - pos)
    return rank_top_k(points, k_i)


def round_robin_merge(lists: Sequence[Sequence[str]], k_i: int) -> list[str]:
    """Interleave ranked id lists, skipping duplicates.

    Lists are visited in serpentine passes (input order, then reversed,
    alternating); a list whose next id was already taken skips it and offers
    its next fresh id within the same turn. Stops at K_I ids or exhaustion.
    """
    out: list[str] = []
    taken: set[str] = set()
    cursors = [0] * len(lists)
    forward = True
    while len(out) < k_i:
        progressed = False
        order = range(len(lists)) if forward else range(len(lists) - 1, -1, -1)
        for li in order:
            lst = lists[li]
            c = cursors[li]
            while c < len(lst) and lst[c] in taken:
                c += 1
            if c < len(lst):
                out.append(lst[c])
                taken.add(lst[c])
                cursors[li] = c + 1
                progressed = True
                if len(out) == k_i:
                    return out
            else:
                cursors[li] = c
        if not progressed:
            break
        forward = not forward
    return out


def aspect_fusion(store: EmbeddingStore, aspect_vecs: Sequence, k_r: int, k_i: int,
                  method: Aggregator,
                  labels: Sequence[str] | None = None) -> tuple[ScoredList, FusionTrace]:
    """Late fusion per aspect, then aggregation to a single ranked list.

    Score-based aggregators reduce the dense aspect/item matrix and re-rank;
    rank-based ones build one top-K_I list per aspect and merge those.
    Round-robin positions are scored K_I - position so downstream metrics see
    a strictly decreasing ScoredList.
    """
    matrix, trace = aspect_item_scores(store, aspect_vecs, k_r, labels=labels)
    if method.score_based:
        return rank_top_k(aggregate_scores(matrix, method), k_i), trace
    per_aspect = [
        rank_top_k(dict(zip(matrix.item_ids, row)), k_i)
        for row in matrix.scores
    ]
    if method is Aggregator.BORDA:
        return borda_merge(per_aspect, k_i), trace
    merged = round_robin_merge([sl.ids() for sl in per_aspect], k_i)
    entries = tuple((iid, float(k_i - pos)) for pos, iid in enumerate(merged))
    return ScoredList(entries=entries, k=k_i), trace
