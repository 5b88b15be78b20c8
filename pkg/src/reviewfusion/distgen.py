"""Synthetic review corpora with controlled aspect distributions.

Four distributions are supported: fully overlapping (every review mentions
every item aspect), fully disjoint (every review mentions exactly one), and
two frequency-imbalanced variants of the disjoint case (one rare aspect kept
at a single review, or one popular aspect keeping all reviews while the rest
drop to one).

generate_geometric_bench builds a text-free analogue: each item gets
orthonormal aspect direction vectors, reviews are noisy copies of their
aspect's direction (or of the item centroid when overlapping), queries sit at
the noisy centroid, and cross-item correlation is controlled by a single
similarity knob. This reproduces, with no encoder involved, the regime where
monolithic fusion mis-ranks but per-aspect fusion does not.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from enum import Enum
from typing import Iterable, Sequence

import numpy as np

from . import llmclient
from .corpus import Aspect, Corpus, Item, Query, Review
from .embedstore import EmbeddingStore


class DistgenError(ValueError):
    pass


class DistributionKind(Enum):
    FULLY_OVERLAPPING = "fully-overlapping"
    FULLY_DISJOINT = "fully-disjoint"
    ONE_RARE_ASPECT = "one-rare"
    ONE_POPULAR_ASPECT = "one-popular"

    @classmethod
    def from_string(cls, name: str) -> "DistributionKind":
        key = name.strip().lower().replace("_", "-")
        for kind in cls:
            if kind.value == key:
                return kind
        raise DistgenError(f"unknown distribution kind {name!r}")


DEFAULT_REVIEWS_PER_ITEM = 20    # fully overlapping
DEFAULT_REVIEWS_PER_ASPECT = 10  # fully disjoint


def generate_reviews(items: Sequence[Item], kind: DistributionKind, text_source,
                     seed: int, reviews_per_unit: int | None = None) -> list[Review]:
    """Reviews for the two base distributions.

    reviews_per_unit counts per item for FULLY_OVERLAPPING (default 20) and
    per aspect for FULLY_DISJOINT (default 10). Texts come from text_source
    (any client accepted by llmclient.generate_review_text); generation is
    deterministic given seed and a deterministic source.
    """
    if kind is DistributionKind.FULLY_OVERLAPPING:
        per_unit = DEFAULT_REVIEWS_PER_ITEM if reviews_per_unit is None else reviews_per_unit
    elif kind is DistributionKind.FULLY_DISJOINT:
        per_unit = DEFAULT_REVIEWS_PER_ASPECT if reviews_per_unit is None else reviews_per_unit
    else:
        raise DistgenError(f"{kind.value} is derived; generate fully-disjoint reviews "
                           "and use apply_frequency_imbalance")
    if per_unit < 1:
        raise DistgenError("reviews_per_unit must be >= 1")

    rng = np.random.default_rng(seed)
    reviews: list[Review] = []
    for item in sorted(items, key=lambda it: it.id):
        counter = 0
        if kind is DistributionKind.FULLY_OVERLAPPING:
            groups: list[tuple[Aspect, ...]] = [item.aspects] * per_unit
        else:
            groups = [(aspect,) for aspect in item.aspects for _ in range(per_unit)]
        for aspects in groups:
            counter += 1
            nonce = int(rng.integers(0, 1_000_000))
            try:
                text = llmclient.generate_review_text(
                    text_source, item.id, [a.text for a in aspects],
                    "overlapping" if kind is DistributionKind.FULLY_OVERLAPPING else "disjoint",
                    nonce)
            except Exception as exc:
                raise DistgenError(
                    f"review generation failed for item {item.id!r}, "
                    f"aspects {[a.id for a in aspects]}: {exc}") from exc
            reviews.append(Review(
                id=f"{item.id}::r{counter:04d}",
                item_id=item.id,
                text=text,
                aspect_ids=frozenset(a.id for a in aspects),
            ))
    return reviews


def apply_frequency_imbalance(reviews: Iterable[Review], kind: DistributionKind,
                              seed: int) -> list[Review]:
    """Thin a fully-disjoint review set to an imbalanced one.

    Per item, one aspect is selected uniformly at random (seeded, items in id
    order). ONE_RARE_ASPECT keeps a single review for the selected aspect and
    everything else; ONE_POPULAR_ASPECT keeps everything for the selected
    aspect and a single review for each other aspect. The survivor within an
    aspect is its lowest review id. Texts and labels are never altered.
    """
    if kind not in (DistributionKind.ONE_RARE_ASPECT, DistributionKind.ONE_POPULAR_ASPECT):
        raise DistgenError(f"imbalance kind must be one-rare or one-popular, got {kind.value}")
    by_item: dict[str, list[Review]] = {}
    for review in reviews:
        if len(review.aspect_ids) != 1:
            raise DistgenError(
                f"review {review.id!r} mentions {len(review.aspect_ids)} aspects; "
                "imbalance applies only to fully-disjoint reviews")
        by_item.setdefault(review.item_id, []).append(review)

    rng = np.random.default_rng(seed)
    kept: list[Review] = []
    for item_id in sorted(by_item):
        item_reviews = sorted(by_item[item_id], key=lambda r: r.id)
        aspect_ids = sorted({next(iter(r.aspect_ids)) for r in item_reviews})
        selected = aspect_ids[int(rng.integers(0, len(aspect_ids)))]
        if len(aspect_ids) == 1:
            kept.extend(item_reviews)  # no between-aspect imbalance to create
            continue
        taken_single: set[str] = set()
        for review in item_reviews:
            aid = next(iter(review.aspect_ids))
            if kind is DistributionKind.ONE_RARE_ASPECT:
                keep_all = aid != selected
            else:
                keep_all = aid == selected
            if keep_all:
                kept.append(review)
            elif aid not in taken_single:
                kept.append(review)
                taken_single.add(aid)
    return kept


@dataclass(frozen=True)
class GeometricBenchConfig:
    # noise/similarity defaults are calibrated so that the distribution
    # sensitivity trends show up at this corpus size (see scripts/calibrate_bench.py)
    n_items: int = 200
    aspects_per_item: int = 3
    dim: int = 64
    reviews_per_aspect: int = 10
    review_noise: float = 0.1
    query_noise: float = 0.35
    distractor_similarity: float = 0.55
    seed: int = 0

    def __post_init__(self) -> None:
        if min(self.n_items, self.aspects_per_item, self.reviews_per_aspect) < 1:
            raise DistgenError("counts must be >= 1")
        if self.dim < 2:
            raise DistgenError("dim must be >= 2")
        if self.dim < self.aspects_per_item:
            raise DistgenError("dim must be >= aspects_per_item for orthonormal directions")
        if self.review_noise < 0 or self.query_noise < 0:
            raise DistgenError("noise levels must be >= 0")
        if not (0.0 <= self.distractor_similarity < 1.0):
            raise DistgenError("distractor_similarity must be in [0, 1)")


def _orthonormalize(rows: np.ndarray) -> np.ndarray:
    """Gram-Schmidt over rows, renormalized; assumes full row rank."""
    out = rows.astype(np.float64).copy()
    for j in range(out.shape[0]):
        for k in range(j):
            out[j] -= (out[j] @ out[k]) * out[k]
        norm = float(np.linalg.norm(out[j]))
        if norm < 1e-12:
            raise DistgenError("degenerate aspect directions; increase dim")
        out[j] /= norm
    return out


def generate_geometric_bench(config: GeometricBenchConfig,
                             kind: DistributionKind = DistributionKind.FULLY_DISJOINT,
                             text_source=None) -> tuple[Corpus, EmbeddingStore]:
    """Build a corpus plus matching embeddings with fully controlled geometry.

    Per item the aspect directions are random Gaussian vectors orthonormalized
    within the item, so a review is literally irrelevant (score ~ 0) to the
    aspects it does not cover. Items share each aspect slot's global direction
    at distractor_similarity, which makes every other item a partial match of
    the query's item. Imbalanced kinds are derived from the disjoint corpus
    with an independently seeded thinning pass.
    """
    text_source = text_source or llmclient.MockLlmClient()
    ss = np.random.SeedSequence(config.seed)
    gen_ss, imb_ss = ss.spawn(2)
    rng = np.random.default_rng(gen_ss)
    imbalance_seed = int(imb_ss.generate_state(1)[0])

    n, A, dim = config.n_items, config.aspects_per_item, config.dim
    ds = config.distractor_similarity
    # Global per-slot directions shared (at sqrt(ds) weight) by every item.
    global_dirs = np.linalg.qr(rng.standard_normal((dim, A)))[0].T  # (A, dim), orthonormal rows

    items: dict[str, Item] = {}
    reviews: dict[str, Review] = {}
    queries: dict[str, Query] = {}
    vectors: dict[str, np.ndarray] = {}

    overlapping = kind is DistributionKind.FULLY_OVERLAPPING
    for i in range(n):
        item_id = f"i{i:04d}"
        own = rng.standard_normal((A, dim))
        own /= np.linalg.norm(own, axis=1, keepdims=True)
        raw = math.sqrt(ds) * global_dirs + math.sqrt(1.0 - ds) * own
        dirs = _orthonormalize(raw)
        centroid = dirs.sum(axis=0)
        centroid /= np.linalg.norm(centroid)

        aspects = tuple(
            Aspect(id=f"{item_id}::a{j + 1}", text=f"trait-{i:04d}-{j + 1}")
            for j in range(A))
        items[item_id] = Item(id=item_id, aspects=aspects)

        counter = 0
        review_groups: list[tuple[np.ndarray, tuple[Aspect, ...]]] = []
        if overlapping:
            review_groups = [(centroid, aspects)] * (config.reviews_per_aspect * A)
        else:
            for j, aspect in enumerate(aspects):
                review_groups += [(dirs[j], (aspect,))] * config.reviews_per_aspect
        for base, mentioned in review_groups:
            counter += 1
            rid = f"{item_id}::r{counter:04d}"
            vec = base + config.review_noise * rng.standard_normal(dim)
            vectors[rid] = vec.astype(np.float32)
            text = llmclient.generate_review_text(
                text_source, item_id, [a.text for a in mentioned],
                "overlapping" if len(mentioned) > 1 else "disjoint", counter)
            reviews[rid] = Review(id=rid, item_id=item_id, text=text,
                                  aspect_ids=frozenset(a.id for a in mentioned))

        query_id = f"q{i:04d}"
        gt_aspects = tuple(
            Aspect(id=f"{query_id}::a{j + 1}", text=aspects[j].text) for j in range(A))
        query_text = "find something with " + " and ".join(a.text for a in gt_aspects)
        queries[query_id] = Query(id=query_id, text=query_text,
                                  gt_aspects=gt_aspects, correct_item_id=item_id)
        qvec = centroid + config.query_noise * rng.standard_normal(dim)
        vectors[query_id] = qvec.astype(np.float32)
        for j, aspect in enumerate(gt_aspects):
            avec = dirs[j] + config.query_noise * rng.standard_normal(dim)
            vectors[aspect.id] = avec.astype(np.float32)

    if kind in (DistributionKind.ONE_RARE_ASPECT, DistributionKind.ONE_POPULAR_ASPECT):
        kept = apply_frequency_imbalance(reviews.values(), kind, imbalance_seed)
        kept_ids = {r.id for r in kept}
        for rid in list(reviews):
            if rid not in kept_ids:
                del reviews[rid]
                del vectors[rid]

    corpus = Corpus(items=items, reviews=reviews, queries=queries)
    store = EmbeddingStore(dim=dim, vectors=vectors, item_index=corpus.reviews_by_item)
    return corpus, store
