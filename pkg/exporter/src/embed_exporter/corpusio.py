"""Reader for the engine's corpus JSON-Lines files.

This is intentionally an independent implementation of the documented schema
(items/reviews/queries), so the exporter couples to the engine only through
the file formats themselves.
"""

from __future__ import annotations

import json
from dataclasses import dataclass
from pathlib import Path


class CorpusFormatError(ValueError):
    pass


@dataclass(frozen=True)
class CorpusTexts:
    """Every text the engine expects a vector for, keyed by vector id."""

    reviews: dict[str, str]        # review id -> review text
    queries: dict[str, str]        # query id -> query text
    aspects: dict[str, str]        # query aspect id -> aspect text
    items: dict[str, list[tuple[str, str]]]  # item id -> [(aspect id, aspect text)]

    @property
    def total(self) -> int:
        return len(self.reviews) + len(self.queries) + len(self.aspects)


def _iter_jsonl(path: str | Path):
    path = Path(path)
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                yield lineno, json.loads(line)
            except json.JSONDecodeError as exc:
                raise CorpusFormatError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from exc


def _need(obj, key, path, lineno):
    if key not in obj:
        raise CorpusFormatError(f"{path}:{lineno}: missing field {key!r}")
    return obj[key]


def read_corpus_texts(items_path: str | Path, reviews_path: str | Path,
                      queries_path: str | Path) -> CorpusTexts:
    items: dict[str, list[tuple[str, str]]] = {}
    for lineno, obj in _iter_jsonl(items_path):
        aspects = _need(obj, "aspects", items_path, lineno)
        items[str(_need(obj, "id", items_path, lineno))] = [
            (str(a["id"]), str(a["text"])) for a in aspects]

    reviews: dict[str, str] = {}
    for lineno, obj in _iter_jsonl(reviews_path):
        rid = str(_need(obj, "id", reviews_path, lineno))
        if rid in reviews:
            raise CorpusFormatError(f"{reviews_path}:{lineno}: duplicate review id {rid!r}")
        reviews[rid] = str(_need(obj, "text", reviews_path, lineno))

    queries: dict[str, str] = {}
    aspects: dict[str, str] = {}
    for lineno, obj in _iter_jsonl(queries_path):
        qid = str(_need(obj, "id", queries_path, lineno))
        if qid in queries:
            raise CorpusFormatError(f"{queries_path}:{lineno}: duplicate query id {qid!r}")
        queries[qid] = str(_need(obj, "text", queries_path, lineno))
        for aspect in _need(obj, "gt_aspects", queries_path, lineno):
            aspects[str(aspect["id"])] = str(aspect["text"])

    return CorpusTexts(reviews=reviews, queries=queries, aspects=aspects, items=items)
