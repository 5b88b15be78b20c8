import numpy as np
import pytest

from reviewfusion.corpus import Aspect, Corpus, Item, Query, Review
from reviewfusion.embedstore import EmbeddingStore


def make_item(iid, n_aspects=2):
    aspects = tuple(Aspect(id=f"{iid}::a{j + 1}", text=f"trait {j + 1} of {iid}")
                    for j in range(n_aspects))
    return Item(id=iid, aspects=aspects)


def make_corpus(review_plan, queries=None):
    """review_plan: {item_id: (n_aspects, [aspect_index_set_per_review, ...])}.

    Review ids are f"{item}::r{n:02d}" in plan order; aspect index sets are
    1-based into the item's aspects.
    """
    items = {}
    reviews = {}
    for iid, (n_aspects, mentions) in review_plan.items():
        item = make_item(iid, n_aspects)
        items[iid] = item
        for n, idxs in enumerate(mentions, start=1):
            rid = f"{iid}::r{n:02d}"
            reviews[rid] = Review(
                id=rid, item_id=iid, text=f"review {n} of {iid}",
                aspect_ids=frozenset(f"{iid}::a{j}" for j in idxs))
    qs = {}
    for q in (queries or []):
        qs[q.id] = q
    return Corpus(items=items, reviews=reviews, queries=qs)


def make_store(item_vectors, extra=None, dim=None):
    """item_vectors: {item_id: {review_id: vector}}; extra: {id: vector}."""
    vectors = {}
    index = {}
    for iid, revs in item_vectors.items():
        index[iid] = list(revs)
        for rid, vec in revs.items():
            vectors[rid] = np.asarray(vec, dtype=np.float32)
    for vid, vec in (extra or {}).items():
        vectors[vid] = np.asarray(vec, dtype=np.float32)
    if dim is None:
        dim = len(next(iter(vectors.values())))
    return EmbeddingStore(dim=dim, vectors=vectors, item_index=index)


def random_store(rng, n_items, max_reviews, dim, extra_probes=0):
    """Random float32 store plus probe vectors, for oracle comparisons."""
    item_vectors = {}
    for i in range(n_items):
        n_rev = int(rng.integers(1, max_reviews + 1))
        item_vectors[f"i{i:03d}"] = {
            f"i{i:03d}::r{r:03d}": rng.standard_normal(dim) for r in range(n_rev)}
    probes = [rng.standard_normal(dim).astype(np.float32) for _ in range(max(extra_probes, 1))]
    return make_store(item_vectors), probes


@pytest.fixture
def tiny_store():
    """Single item whose three reviews score 0.9 / 0.7 / 0.1 against e1."""
    return make_store({
        "item1": {
            "item1::r01": [0.9, 0.0],
            "item1::r02": [0.7, 0.0],
            "item1::r03": [0.1, 0.0],
        }
    })
