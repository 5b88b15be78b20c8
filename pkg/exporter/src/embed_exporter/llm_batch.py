"""Batched LLM calls for real corpora: query aspect extraction and review text
generation against an OpenAI-compatible endpoint.

The output JSONL doubles as the checkpoint: records are appended and flushed
as they complete, and a rerun skips ids already present, so an interrupted or
rate-limited batch resumes without duplicates. Extraction outputs that fail
the span contract are written flagged (with the raw output) rather than
dropped, for manual review.
"""

from __future__ import annotations

import json
import os
import re
import time
from dataclasses import dataclass
from pathlib import Path
from typing import Sequence

import requests

EXTRACT_PROMPT = """You split product search queries into their distinct requirements.

Example 1
Query: "Can I have a meatball recipe that doesn't take too long?"
Answer: ["meatball", "doesn't take too long"]

Example 2
Query: "I want a vegetarian curry, something spicy"
Answer: ["vegetarian curry", "spicy"]

Return at least two requirements for the query below. Each must be an exact,
contiguous sub-span of the query and the sub-spans must not overlap. Answer
with a JSON array of strings and nothing else.

Query: "{query}"
Answer:"""

GENERATE_OVERLAPPING = """Write a short, natural user review (2-4 sentences) for item "{item_id}".
The review must mention every one of these properties: {aspects}.
Vary the wording (variation token: {nonce}). Reply with the review text only."""

GENERATE_DISJOINT = """Write a short, natural user review (1-3 sentences) for item "{item_id}".
The review must talk about this one property and no other item property: {aspect}.
Vary the wording (variation token: {nonce}). Reply with the review text only."""

_RETRYABLE = {429, 500, 502, 503, 504}


class BatchError(RuntimeError):
    pass


class EndpointExhausted(BatchError):
    """Transport or rate-limit budget exhausted; already-written records stand."""


@dataclass(frozen=True)
class ChatConfig:
    base_url: str
    model_name: str = "gpt-4"
    api_key_env_var: str = "OPENAI_API_KEY"
    timeout: float = 60.0
    max_retries: int = 3
    temperature: float = 0.0
    backoff_base: float = 1.0


class ChatClient:
    def __init__(self, config: ChatConfig):
        self.config = config

    def complete(self, prompt: str) -> str:
        cfg = self.config
        url = cfg.base_url.rstrip("/") + "/chat/completions"
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(cfg.api_key_env_var)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        payload = {"model": cfg.model_name,
                   "messages": [{"role": "user", "content": prompt}],
                   "temperature": cfg.temperature}
        last = None
        for attempt in range(cfg.max_retries + 1):
            if attempt:
                time.sleep(cfg.backoff_base * (2 ** (attempt - 1)))
            try:
                resp = requests.post(url, json=payload, headers=headers, timeout=cfg.timeout)
            except requests.RequestException as exc:
                last = exc
                continue
            if resp.status_code in _RETRYABLE:
                last = BatchError(f"HTTP {resp.status_code}")
                continue
            if resp.status_code != 200:
                raise BatchError(f"HTTP {resp.status_code}: {resp.text[:200]}")
            try:
                return resp.json()["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise BatchError(f"malformed completion response: {exc}") from exc
        raise EndpointExhausted(f"gave up after {cfg.max_retries + 1} attempts: {last}")


def _done_ids(out_path: Path, key: str) -> set[str]:
    if not out_path.exists():
        return set()
    done = set()
    with out_path.open("r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                done.add(str(json.loads(line)[key]))
    return done


def find_spans(texts: Sequence[str], query: str) -> list[tuple[int, int, str]] | None:
    """Left-to-right placement of span texts; None when the contract fails
    (a span missing, overlapping, or fewer than two)."""
    if len(texts) < 2:
        return None
    spans = []
    pos = 0
    for text in texts:
        if not text:
            return None
        idx = query.find(text, pos)
        if idx < 0:
            return None
        spans.append((idx, idx + len(text), text))
        pos = idx + len(text)
    return spans


def _parse_array(raw: str) -> list[str] | None:
    match = re.search(r"\[.*\]", raw, flags=re.DOTALL)
    if not match:
        return None
    try:
        data = json.loads(match.group(0))
    except json.JSONDecodeError:
        return None
    if not isinstance(data, list) or not all(isinstance(t, str) for t in data):
        return None
    return data


def batch_extract(queries: Sequence[tuple[str, str]], client: ChatClient,
                  out_path: str | Path) -> dict:
    """queries: (query_id, query_text) pairs. Appends one record per query:
    {"query_id", "status": "ok"|"flagged", "spans": [[start, end, text], ...]}
    with the raw output attached to flagged records."""
    out_path = Path(out_path)
    done = _done_ids(out_path, "query_id")
    stats = {"ok": 0, "flagged": 0, "skipped": 0}
    with out_path.open("a", encoding="utf-8") as fh:
        for qid, text in queries:
            if qid in done:
                stats["skipped"] += 1
                continue
            raw = client.complete(EXTRACT_PROMPT.replace("{query}", text))
            texts = _parse_array(raw)
            spans = find_spans(texts, text) if texts is not None else None
            if spans is None:
                record = {"query_id": qid, "status": "flagged", "spans": [], "raw": raw}
                stats["flagged"] += 1
            else:
                record = {"query_id": qid, "status": "ok",
                          "spans": [[s, e, t] for s, e, t in spans]}
                stats["ok"] += 1
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")
            fh.flush()
    return stats


def batch_generate(items: Sequence[tuple[str, list[tuple[str, str]]]], style: str,
                   reviews_per_unit: int, client: ChatClient,
                   out_path: str | Path) -> dict:
    """items: (item_id, [(aspect_id, aspect_text), ...]). Appends engine-schema
    review records; disjoint style emits reviews_per_unit per aspect,
    overlapping reviews_per_unit per item."""
    if style not in ("overlapping", "disjoint"):
        raise BatchError(f"unknown style {style!r}")
    out_path = Path(out_path)
    done = _done_ids(out_path, "id")
    stats = {"written": 0, "skipped": 0}
    with out_path.open("a", encoding="utf-8") as fh:
        for item_id, aspects in items:
            if style == "overlapping":
                groups = [aspects] * reviews_per_unit
            else:
                groups = [[aspect] for aspect in aspects for _ in range(reviews_per_unit)]
            for n, group in enumerate(groups, start=1):
                rid = f"{item_id}::gen{n:04d}"
                if rid in done:
                    stats["skipped"] += 1
                    continue
                template = GENERATE_OVERLAPPING if style == "overlapping" else GENERATE_DISJOINT
                prompt = (template
                          .replace("{item_id}", item_id)
                          .replace("{aspects}", "; ".join(t for _, t in group))
                          .replace("{aspect}", group[0][1])
                          .replace("{nonce}", str(n)))
                text = client.complete(prompt).strip()
                if not text:
                    raise BatchError(f"empty review text for {rid!r}")
                record = {"id": rid, "item_id": item_id, "text": text,
                          "aspect_ids": [aid for aid, _ in group]}
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")
                fh.flush()
                stats["written"] += 1
    return stats
