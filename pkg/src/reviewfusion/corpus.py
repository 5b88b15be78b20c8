"""Two-level review corpus: items with aspect labels, reviews bound to one item,
and queries with ground-truth aspects and a single correct item."""

from __future__ import annotations

import json
from dataclasses import dataclass, field
from pathlib import Path
from typing import Iterable


class CorpusError(ValueError):
    """Malformed corpus file or broken referential integrity."""


@dataclass(frozen=True)
class Aspect:
    id: str
    text: str


@dataclass(frozen=True)
class Item:
    id: str
    aspects: tuple[Aspect, ...]

    def aspect_ids(self) -> tuple[str, ...]:
        return tuple(a.id for a in self.aspects)


@dataclass(frozen=True)
class Review:
    id: str
    item_id: str
    text: str
    aspect_ids: frozenset[str]


@dataclass(frozen=True)
class Query:
    id: str
    text: str
    gt_aspects: tuple[Aspect, ...]
    correct_item_id: str


@dataclass
class Corpus:
    """Immutable after construction; reviews_by_item keeps review ids ascending."""

    items: dict[str, Item]
    reviews: dict[str, Review]
    queries: dict[str, Query]
    reviews_by_item: dict[str, list[str]] = field(init=False, repr=False)

    def __post_init__(self) -> None:
        index: dict[str, list[str]] = {iid: [] for iid in self.items}
        for rid in sorted(self.reviews):
            review = self.reviews[rid]
            index.setdefault(review.item_id, []).append(rid)
        self.reviews_by_item = index


@dataclass(frozen=True)
class AspectGraphStats:
    """Degrees of the review/aspect bipartite graph for one item, plus how much
    the item's reviews overlap in the aspects they mention."""

    item_id: str
    degree_per_aspect: dict[str, int]
    overlap_fraction: float


@dataclass(frozen=True)
class Violation:
    kind: str
    subject_id: str
    detail: str


@dataclass
class ValidationReport:
    violations: list[Violation]

    @property
    def ok(self) -> bool:
        return not self.violations


def _read_jsonl(path: str | Path) -> Iterable[tuple[int, dict]]:
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from exc
            if not isinstance(obj, dict):
                raise CorpusError(f"{path}:{lineno}: expected a JSON object")
            yield lineno, obj


def _field(obj: dict, key: str, path: Path, lineno: int):
    try:
        return obj[key]
    except KeyError:
        raise CorpusError(f"{path}:{lineno}: missing field {key!r}") from None


def _parse_aspects(raw, path: Path, lineno: int) -> tuple[Aspect, ...]:
    if not isinstance(raw, list):
        raise CorpusError(f"{path}:{lineno}: aspects must be a list")
    aspects = []
    for entry in raw:
        if not isinstance(entry, dict) or "id" not in entry or "text" not in entry:
            raise CorpusError(f"{path}:{lineno}: aspect entries need 'id' and 'text'")
        aspects.append(Aspect(id=str(entry["id"]), text=str(entry["text"])))
    return tuple(aspects)


def load_corpus(items_path: str | Path, reviews_path: str | Path,
                queries_path: str | Path) -> Corpus:
    """Load a corpus from three JSON-Lines files.

    Raises CorpusError on malformed records (with line number), duplicate ids,
    or dangling item references. Per-record semantic invariants (aspect label
    membership and the like) are reported by validate_corpus instead.
    """
    items: dict[str, Item] = {}
    items_path = Path(items_path)
    for lineno, obj in _read_jsonl(items_path):
        item = Item(
            id=str(_field(obj, "id", items_path, lineno)),
            aspects=_parse_aspects(_field(obj, "aspects", items_path, lineno), items_path, lineno),
        )
        if item.id in items:
            raise CorpusError(f"{items_path}:{lineno}: duplicate item id {item.id!r}")
        items[item.id] = item

    reviews: dict[str, Review] = {}
    reviews_path = Path(reviews_path)
    for lineno, obj in _read_jsonl(reviews_path):
        aspect_ids = _field(obj, "aspect_ids", reviews_path, lineno)
        if not isinstance(aspect_ids, list):
            raise CorpusError(f"{reviews_path}:{lineno}: aspect_ids must be a list")
        review = Review(
            id=str(_field(obj, "id", reviews_path, lineno)),
            item_id=str(_field(obj, "item_id", reviews_path, lineno)),
            text=str(_field(obj, "text", reviews_path, lineno)),
            aspect_ids=frozenset(str(a) for a in aspect_ids),
        )
        if review.id in reviews:
            raise CorpusError(f"{reviews_path}:{lineno}: duplicate review id {review.id!r}")
        if review.item_id not in items:
            raise CorpusError(
                f"{reviews_path}:{lineno}: review {review.id!r} references unknown item {review.item_id!r}")
        reviews[review.id] = review

    queries: dict[str, Query] = {}
    queries_path = Path(queries_path)
    for lineno, obj in _read_jsonl(queries_path):
        query = Query(
            id=str(_field(obj, "id", queries_path, lineno)),
            text=str(_field(obj, "text", queries_path, lineno)),
            gt_aspects=_parse_aspects(_field(obj, "gt_aspects", queries_path, lineno), queries_path, lineno),
            correct_item_id=str(_field(obj, "correct_item_id", queries_path, lineno)),
        )
        if query.id in queries:
            raise CorpusError(f"{queries_path}:{lineno}: duplicate query id {query.id!r}")
        if query.correct_item_id not in items:
            raise CorpusError(
                f"{queries_path}:{lineno}: query {query.id!r} references unknown item {query.correct_item_id!r}")
        queries[query.id] = query

    return Corpus(items=items, reviews=reviews, queries=queries)


def save_corpus(corpus: Corpus, items_path: str | Path, reviews_path: str | Path,
                queries_path: str | Path) -> None:
    """Write the three JSON-Lines files; record order is id-sorted for stable bytes."""
    with Path(items_path).open("w", encoding="utf-8") as fh:
        for iid in sorted(corpus.items):
            item = corpus.items[iid]
            fh.write(json.dumps(
                {"id": item.id, "aspects": [{"id": a.id, "text": a.text} for a in item.aspects]},
                ensure_ascii=False) + "\n")
    with Path(reviews_path).open("w", encoding="utf-8") as fh:
        for rid in sorted(corpus.reviews):
            review = corpus.reviews[rid]
            fh.write(json.dumps(
                {"id": review.id, "item_id": review.item_id, "text": review.text,
                 "aspect_ids": sorted(review.aspect_ids)},
                ensure_ascii=False) + "\n")
    with Path(queries_path).open("w", encoding="utf-8") as fh:
        for qid in sorted(corpus.queries):
            query = corpus.queries[qid]
            fh.write(json.dumps(
                {"id": query.id, "text": query.text,
                 "gt_aspects": [{"id": a.id, "text": a.text} for a in query.gt_aspects],
                 "correct_item_id": query.correct_item_id},
                ensure_ascii=False) + "\n")


def validate_corpus(corpus: Corpus) -> ValidationReport:
    """Check every invariant; violations are returned as data, never raised."""
    out: list[Violation] = []

    for item in corpus.items.values():
        if not item.aspects:
            out.append(Violation("item_no_aspects", item.id, "item has no aspects"))
        seen: set[str] = set()
        for aspect in item.aspects:
            if not aspect.text:
                out.append(Violation("aspect_empty_text", aspect.id, f"aspect of item {item.id!r} has empty text"))
            if aspect.id in seen:
                out.append(Violation("aspect_dup_id", item.id, f"duplicate aspect id {aspect.id!r}"))
            seen.add(aspect.id)

    for review in corpus.reviews.values():
        if review.item_id not in corpus.items:
            out.append(Violation("review_dangling_item", review.id,
                                 f"references unknown item {review.item_id!r}"))
            continue
        if not review.aspect_ids:
            out.append(Violation("review_no_aspects", review.id, "review mentions no aspects"))
        owner = set(corpus.items[review.item_id].aspect_ids())
        foreign = sorted(review.aspect_ids - owner)
        if foreign:
            out.append(Violation("review_foreign_aspect", review.id,
                                 f"aspect ids {foreign} are not aspects of item {review.item_id!r}"))

    for query in corpus.queries.values():
        if query.correct_item_id not in corpus.items:
            out.append(Violation("query_dangling_item", query.id,
                                 f"references unknown item {query.correct_item_id!r}"))
        if not query.gt_aspects:
            out.append(Violation("query_no_aspects", query.id, "query has no ground-truth aspects"))
        # Aspects must be placeable as non-overlapping sub-spans, scanned left to right.
        pos = 0
        for aspect in query.gt_aspects:
            if not aspect.text:
                out.append(Violation("aspect_empty_text", aspect.id, f"aspect of query {query.id!r} has empty text"))
                continue
            idx = query.text.find(aspect.text, pos)
            if idx < 0:
                out.append(Violation("query_aspect_span", query.id,
                                     f"aspect {aspect.id!r} is not a non-overlapping sub-span of the query text"))
            else:
                pos = idx + len(aspect.text)

    return ValidationReport(violations=out)


def aspect_graph_stats(corpus: Corpus, item_id: str) -> AspectGraphStats:
    """Bipartite degree per aspect and the mean fraction of co-mentioned aspects.

    overlap_fraction averages (|mentioned| - 1) / (|item aspects| - 1) over the
    item's reviews and is pinned to 1.0 for single-aspect items.
    """
    try:
        item = corpus.items[item_id]
    except KeyError:
        raise CorpusError(f"unknown item id {item_id!r}") from None
    degrees = {aid: 0 for aid in item.aspect_ids()}
    review_ids = corpus.reviews_by_item.get(item_id, [])
    fractions = []
    n_aspects = len(item.aspects)
    for rid in review_ids:
        mentioned = corpus.reviews[rid].aspect_ids
        for aid in mentioned:
            if aid in degrees:
                degrees[aid] += 1
        if n_aspects > 1:
            fractions.append((len(mentioned) - 1) / (n_aspects - 1))
    if n_aspects <= 1 or not fractions:
        overlap = 1.0
    else:
        overlap = sum(fractions) / len(fractions)
    return AspectGraphStats(item_id=item_id, degree_per_aspect=degrees, overlap_fraction=overlap)


def queries_with_min_aspects(corpus: Corpus, min_aspects: int = 2) -> list[str]:
    """Ids of queries whose correct item has at least min_aspects aspects, ascending."""
    keep = []
    for qid in sorted(corpus.queries):
        item = corpus.items.get(corpus.queries[qid].correct_item_id)
        if item is not None and len(item.aspects) >= min_aspects:
            keep.append(qid)
    return keep
