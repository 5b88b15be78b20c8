"""Second-stage reranking of a fused item list.

Review selection decides which K_R review texts represent each candidate:
the monolithic trace is used as-is, while aspect traces are interleaved with
a round-robin merge so every aspect keeps a fair share. Cross-encoder
reranking scores (query, concatenated reviews); listwise reranking asks an
LLM for a permutation and repairs whatever comes back.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Mapping, Protocol, Sequence

from . import llmclient
from .fusion import FusionTrace, ScoredList, rank_top_k, round_robin_merge
from .llmclient import LlmError

DEFAULT_PASSAGE_CHARS = 4000


class RerankError(ValueError):
    pass


@dataclass(frozen=True)
class RerankInput:
    query_text: str
    stage1: ScoredList
    reviews_by_item: Mapping[str, Sequence[str]]  # selected review texts, in selection order

    def __post_init__(self) -> None:
        for iid in self.stage1.ids():
            if not self.reviews_by_item.get(iid):
                raise RerankError(f"stage-1 item {iid!r} has no selected reviews")


@dataclass(frozen=True)
class RerankResult:
    ranked: ScoredList
    fell_back: bool = False
    warning: str | None = None


class CrossEncoderClient(Protocol):
    def score(self, query: str, passage: str) -> float: ...


class MockCrossEncoder:
    """Deterministic stand-in: relevance equals passage length."""

    def score(self, query: str, passage: str) -> float:
        return float(len(passage))


def select_reviews(trace: FusionTrace, strategy: str, k_r: int) -> dict[str, list[str]]:
    """Per item, the ordered review ids to hand to a reranker.

    "mono" takes the reviews the monolithic fusion actually averaged;
    "aspect" round-robin merges the per-aspect review lists and truncates to
    K_R, keeping the aspect mix balanced.
    """
    if strategy not in ("mono", "aspect"):
        raise RerankError(f"unknown selection strategy {strategy!r}")
    if strategy != trace.mode:
        raise RerankError(f"trace was produced by {trace.mode!r} fusion, not {strategy!r}")
    selected: dict[str, list[str]] = {}
    if strategy == "mono":
        for item_id, reviews in trace.used[0].items():
            selected[item_id] = [sr.review_id for sr in reviews[:k_r]]
        return selected
    items = trace.used[0].keys()
    for item_id in items:
        per_aspect = [[sr.review_id for sr in probe.get(item_id, ())] for probe in trace.used]
        selected[item_id] = round_robin_merge(per_aspect, k_r)
    return selected


def repair_permutation(emitted: Sequence[str], stage1_ids: Sequence[str]) -> list[str]:
    """Coerce a model's id list into a permutation of the stage-1 ids: keep the
    first occurrence of each known id, drop foreign ids, then append whatever
    is missing in stage-1 order."""
    known = set(stage1_ids)
    out: list[str] = []
    seen: set[str] = set()
    for iid in emitted:
        if iid in known and iid not in seen:
            out.append(iid)
            seen.add(iid)
    out.extend(iid for iid in stage1_ids if iid not in seen)
    return out


def _passage(texts: Sequence[str], char_budget: int) -> str:
    return " ".join(texts)[:char_budget]


def cross_encoder_rerank(ce_client: CrossEncoderClient, rinput: RerankInput,
                         char_budget: int = DEFAULT_PASSAGE_CHARS) -> RerankResult:
    """Score each item as ce(query, its reviews joined by single spaces).

    The passage keeps selection order and is front-truncated to char_budget so
    the highest-ranked reviews survive the scorer's input window. Any scorer
    failure aborts the rerank and returns the stage-1 list flagged.
    """
    scores: dict[str, float] = {}
    try:
        for iid in rinput.stage1.ids():
            scores[iid] = float(ce_client.score(
                rinput.query_text, _passage(rinput.reviews_by_item[iid], char_budget)))
    except Exception as exc:  # scorer failure -> stage-1 passthrough
        return RerankResult(ranked=rinput.stage1, fell_back=True, warning=str(exc))
    return RerankResult(ranked=rank_top_k(scores, rinput.stage1.k))


def listwise_rerank(llm_client, rinput: RerankInput) -> RerankResult:
    """Ask the LLM for a full reordering, repair it, and score positions
    K_I - position so both stages expose comparable ScoredLists."""
    ids = list(rinput.stage1.ids())
    try:
        emitted = llmclient.rerank_listwise(llm_client, rinput.query_text, ids,
                                            rinput.reviews_by_item)
    except LlmError as exc:
        return RerankResult(ranked=rinput.stage1, fell_back=True, warning=str(exc))
    repaired = repair_permutation(emitted, ids)
    k_i = rinput.stage1.k
    entries = tuple((iid, float(k_i - pos)) for pos, iid in enumerate(repaired))
    return RerankResult(ranked=ScoredList(entries=entries, k=k_i))
