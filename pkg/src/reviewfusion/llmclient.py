"""Clients for the three LLM-backed steps: aspect extraction from queries,
review text generation, and listwise reranking.

MockLlmClient is fully deterministic and needs no network; HttpLlmClient
speaks the OpenAI-compatible chat-completions protocol and validates model
output against the same invariants the mock guarantees by construction,
re-prompting up to max_retries before giving up with the raw output attached.
"""

from __future__ import annotations

import json
import os
import re
import string
import threading
import time
from dataclasses import dataclass
from importlib import resources
from typing import Mapping, Sequence

import requests


class LlmError(Exception):
    """Base class for LLM client failures."""


class LlmUnavailableError(LlmError):
    """Endpoint unreachable or retry budget exhausted on transport errors."""


class LlmProtocolError(LlmError):
    """Model output kept violating the contract; raw output is attached."""

    def __init__(self, message: str, raw_output: str | None = None):
        super().__init__(message)
        self.raw_output = raw_output


@dataclass(frozen=True)
class Span:
    start: int
    end: int
    text: str


@dataclass(frozen=True)
class ExtractedAspects:
    query_id: str
    spans: tuple[Span, ...]


@dataclass(frozen=True)
class LlmEndpointConfig:
    base_url: str
    model_name: str = "gpt-4"
    api_key_env_var: str = "OPENAI_API_KEY"
    timeout: float = 30.0
    max_retries: int = 2
    temperature: float = 0.0

    def __post_init__(self) -> None:
        if self.timeout <= 0:
            raise ValueError("timeout must be positive")
        if self.max_retries < 0:
            raise ValueError("max_retries must be >= 0")


def validate_spans(spans: Sequence[Span], query_text: str) -> None:
    """Independent checker: >= 2 verbatim sub-spans with disjoint char ranges."""
    if len(spans) < 2:
        raise LlmProtocolError(f"need at least two spans, got {len(spans)}")
    for sp in spans:
        if not (0 <= sp.start < sp.end <= len(query_text)):
            raise LlmProtocolError(f"span ({sp.start}, {sp.end}) out of range")
        if query_text[sp.start:sp.end] != sp.text or not sp.text:
            raise LlmProtocolError(f"span text {sp.text!r} is not the verbatim sub-span")
    ordered = sorted(spans, key=lambda s: s.start)
    for prev, cur in zip(ordered, ordered[1:]):
        if cur.start < prev.end:
            raise LlmProtocolError(f"spans {prev.text!r} and {cur.text!r} overlap")


# --- deterministic mock -----------------------------------------------------

_MARKERS = (" that ", " which ", " and ", ", ")

_STOPWORDS = frozenset("""
a an the i me my we us you your it its this that these those is are was were
be being been do does did can could will would shall should may might must
have has had want need like love prefer looking look find get give make show
suggest recommend please some any something anything for to of in on at with
without and or what which who how where when recipe recipes dish dishes meal
meals food foods idea ideas option options one ones
""".split())

_PUNCT = string.punctuation + string.whitespace


def _token_spans(text: str) -> list[tuple[int, int]]:
    return [(m.start(), m.end()) for m in re.finditer(r"\S+", text)]


def _core(token: str) -> str:
    return token.strip(string.punctuation).lower()


def _trim_span(text: str, start: int, end: int) -> tuple[int, int] | None:
    """Drop leading/trailing stopword tokens and edge punctuation inside [start, end)."""
    toks = [(s, e) for s, e in _token_spans(text) if s >= start and e <= end]
    while toks and (_core(text[toks[0][0]:toks[0][1]]) in _STOPWORDS or not _core(text[toks[0][0]:toks[0][1]])):
        toks.pop(0)
    while toks and (_core(text[toks[-1][0]:toks[-1][1]]) in _STOPWORDS or not _core(text[toks[-1][0]:toks[-1][1]])):
        toks.pop()
    if not toks:
        return None
    s, e = toks[0][0], toks[-1][1]
    while e > s and text[e - 1] in _PUNCT:
        e -= 1
    while s < e and text[s] in _PUNCT:
        s += 1
    return (s, e) if s < e else None


def _strip_edges(text: str, start: int, end: int) -> tuple[int, int]:
    while end > start and text[end - 1] in _PUNCT:
        end -= 1
    while start < end and text[start] in _PUNCT:
        start += 1
    return start, end


class MockLlmClient:
    """Deterministic stand-in for every LLM-backed step.

    Aspect extraction splits at the first marker word occurring after the
    query's first three tokens and trims filler words from each side; with no
    marker it splits at the token boundary nearest the midpoint. Review
    generation instantiates a fixed template. Reranking returns the identity
    permutation.
    """

    def extract_aspects(self, query_text: str, query_id: str = "") -> ExtractedAspects:
        spans = self._split(query_text)
        return ExtractedAspects(query_id=query_id, spans=tuple(spans))

    def _split(self, text: str) -> list[Span]:
        toks = _token_spans(text)
        marker_at = None
        marker_len = 0
        if len(toks) >= 4:
            floor = toks[2][1]  # markers must start after the third token
            for marker in _MARKERS:
                idx = text.find(marker, floor)
                if idx >= 0 and (marker_at is None or idx < marker_at):
                    marker_at, marker_len = idx, len(marker)
        if marker_at is not None:
            left = _trim_span(text, 0, marker_at) or _strip_edges(text, 0, marker_at)
            right = _trim_span(text, marker_at + marker_len, len(text)) \
                or _strip_edges(text, marker_at + marker_len, len(text))
            if left[0] < left[1] and right[0] < right[1]:
                return [Span(s, e, text[s:e]) for s, e in (left, right)]
        # fallback: halves at the token boundary nearest the midpoint
        mid = len(text) // 2
        boundaries = [e for _, e in toks[:-1]]
        if boundaries:
            cut = min(boundaries, key=lambda b: (abs(b - mid), b))
        elif len(text) >= 2:
            cut = mid
        else:
            raise LlmProtocolError(f"query too short to split: {text!r}")
        left = _strip_edges(text, 0, cut)
        right = _strip_edges(text, cut, len(text))
        if left[0] >= left[1] or right[0] >= right[1]:
            raise LlmProtocolError(f"query too short to split: {text!r}")
        return [Span(s, e, text[s:e]) for s, e in (left, right)]

    def generate_review_text(self, item_id: str, aspect_texts: Sequence[str],
                             style: str, nonce) -> str:
        joined = aspect_texts[0]
        for extra in aspect_texts[1:]:
            joined += f", and {extra}"
        return f"Review of {item_id}: this recipe {joined}. ({nonce})"

    def rerank_listwise(self, query_text: str, item_ids: Sequence[str],
                        reviews_by_item: Mapping[str, Sequence[str]]) -> list[str]:
        return list(item_ids)


# --- HTTP client ------------------------------------------------------------

def _load_prompt(name: str) -> str:
    return resources.files("reviewfusion.prompts").joinpath(name).read_text(encoding="utf-8")


def _render(template: str, values: Mapping[str, str]) -> str:
    for key, val in values.items():
        template = template.replace("{" + key + "}", val)
    return template


def build_item_blocks(item_ids: Sequence[str],
                      reviews_by_item: Mapping[str, Sequence[str]]) -> str:
    blocks = []
    for iid in item_ids:
        lines = [f"ID: {iid}", "Reviews:"]
        lines += [f"- {text}" for text in reviews_by_item[iid]]
        blocks.append("\n".join(lines))
    return "\n\n".join(blocks)


_RETRYABLE_STATUS = {429, 500, 502, 503, 504}


class HttpLlmClient:
    """OpenAI-compatible chat-completions client with bounded concurrency,
    exponential backoff, and per-run memoisation of extraction calls."""

    def __init__(self, config: LlmEndpointConfig, max_concurrency: int = 4,
                 backoff_base: float = 0.5, llm_log: str | None = None):
        self.config = config
        self._semaphore = threading.Semaphore(max_concurrency)
        self._backoff_base = backoff_base
        self._llm_log = llm_log
        self._log_lock = threading.Lock()
        self._extract_memo: dict[str, ExtractedAspects] = {}
        self._prompts = {
            "extract": _load_prompt("aspect_extraction.txt"),
            "overlapping": _load_prompt("review_overlapping.txt"),
            "disjoint": _load_prompt("review_disjoint.txt"),
            "rerank": _load_prompt("listwise_rerank.txt"),
        }

    def _chat(self, prompt: str) -> str:
        url = self.config.base_url.rstrip("/") + "/chat/completions"
        headers = {"Content-Type": "application/json"}
        api_key = os.environ.get(self.config.api_key_env_var)
        if api_key:
            headers["Authorization"] = f"Bearer {api_key}"
        payload = {
            "model": self.config.model_name,
            "messages": [{"role": "user", "content": prompt}],
            "temperature": self.config.temperature,
        }
        last_error: Exception | None = None
        for attempt in range(self.config.max_retries + 1):
            if attempt:
                time.sleep(self._backoff_base * (2 ** (attempt - 1)))
            try:
                with self._semaphore:
                    resp = requests.post(url, json=payload, headers=headers,
                                         timeout=self.config.timeout)
            except requests.RequestException as exc:
                last_error = exc
                continue
            if resp.status_code in _RETRYABLE_STATUS:
                last_error = LlmUnavailableError(f"HTTP {resp.status_code} from {url}")
                continue
            if resp.status_code != 200:
                raise LlmUnavailableError(f"HTTP {resp.status_code} from {url}: {resp.text[:200]}")
            try:
                body = resp.json()
                content = body["choices"][0]["message"]["content"]
            except (ValueError, KeyError, IndexError, TypeError) as exc:
                raise LlmProtocolError(f"malformed completion response: {exc}",
                                       raw_output=resp.text[:2000]) from exc
            self._audit(prompt, content)
            return content
        raise LlmUnavailableError(f"endpoint unreachable after {self.config.max_retries + 1} attempts: {last_error}")

    def _audit(self, prompt: str, response: str) -> None:
        if not self._llm_log:
            return
        record = {"ts": time.time(), "model": self.config.model_name,
                  "prompt": prompt, "response": response}
        with self._log_lock:
            with open(self._llm_log, "a", encoding="utf-8") as fh:
                fh.write(json.dumps(record, ensure_ascii=False) + "\n")

    def extract_aspects(self, query_text: str, query_id: str = "") -> ExtractedAspects:
        if query_text in self._extract_memo:
            memo = self._extract_memo[query_text]
            return ExtractedAspects(query_id=query_id, spans=memo.spans)
        prompt = _render(self._prompts["extract"], {"query": query_text})
        raw = ""
        last: LlmProtocolError | None = None
        for _ in range(self.config.max_retries + 1):
            raw = self._chat(prompt)
            try:
                spans = self._parse_spans(raw, query_text)
                validate_spans(spans, query_text)
            except LlmProtocolError as exc:
                last = exc
                continue
            result = ExtractedAspects(query_id=query_id, spans=tuple(spans))
            self._extract_memo[query_text] = result
            return result
        raise LlmProtocolError(f"aspect extraction kept violating the span contract: {last}",
                               raw_output=raw)

    @staticmethod
    def _parse_spans(raw: str, query_text: str) -> list[Span]:
        match = re.search(r"\[.*\]", raw, flags=re.DOTALL)
        if not match:
            raise LlmProtocolError("no JSON array in output", raw_output=raw)
        try:
            texts = json.loads(match.group(0))
        except json.JSONDecodeError as exc:
            raise LlmProtocolError(f"invalid JSON array: {exc.msg}", raw_output=raw) from exc
        if not isinstance(texts, list) or not all(isinstance(t, str) for t in texts):
            raise LlmProtocolError("expected a JSON array of strings", raw_output=raw)
        spans = []
        pos = 0
        for text in texts:
            idx = query_text.find(text, pos)
            if idx < 0:
                raise LlmProtocolError(f"span {text!r} not found in query after offset {pos}",
                                       raw_output=raw)
            spans.append(Span(idx, idx + len(text), text))
            pos = idx + len(text)
        return spans

    def generate_review_text(self, item_id: str, aspect_texts: Sequence[str],
                             style: str, nonce) -> str:
        template = self._prompts["overlapping" if style == "overlapping" else "disjoint"]
        prompt = _render(template, {
            "item_id": item_id,
            "aspects": "; ".join(aspect_texts),
            "aspect": aspect_texts[0],
            "nonce": str(nonce),
        })
        for _ in range(self.config.max_retries + 1):
            raw = self._chat(prompt).strip()
            if raw:
                return raw
        raise LlmProtocolError("review generation returned empty text", raw_output="")

    def rerank_listwise(self, query_text: str, item_ids: Sequence[str],
                        reviews_by_item: Mapping[str, Sequence[str]]) -> list[str]:
        prompt = _render(self._prompts["rerank"], {
            "query": query_text,
            "item_blocks": build_item_blocks(item_ids, reviews_by_item),
        })
        known = set(item_ids)
        raw = ""
        last: LlmProtocolError | None = None
        for _ in range(self.config.max_retries + 1):
            raw = self._chat(prompt)
            try:
                return self._parse_ranking(raw, known)
            except LlmProtocolError as exc:
                last = exc
        raise LlmProtocolError(f"listwise output stayed unparseable: {last}", raw_output=raw)

    @staticmethod
    def _parse_ranking(raw: str, known: set[str]) -> list[str]:
        tokens = [t.strip(" \t[]().") for t in re.split(r"[>\n,;]+", raw.strip())]
        tokens = [t for t in tokens if t]
        if not tokens:
            raise LlmProtocolError("empty ranking output", raw_output=raw)
        for tok in tokens:
            if tok not in known:
                raise LlmProtocolError(f"output id {tok!r} is not an input item", raw_output=raw)
        return tokens


# --- operation wrappers -----------------------------------------------------

def extract_aspects(client, query_text: str, query_id: str = "") -> ExtractedAspects:
    """Extract >= 2 non-overlapping sub-spans; output is re-checked here."""
    if not query_text or not query_text.strip():
        raise ValueError("query text must be non-empty")
    result = client.extract_aspects(query_text, query_id)
    validate_spans(result.spans, query_text)
    return result


def generate_review_text(client, item_id: str, aspect_texts: Sequence[str],
                         style: str, nonce) -> str:
    if style not in ("overlapping", "disjoint"):
        raise ValueError(f"unknown style {style!r}")
    if style == "disjoint" and len(aspect_texts) != 1:
        raise ValueError("disjoint style takes exactly one aspect text")
    if not aspect_texts:
        raise ValueError("need at least one aspect text")
    text = client.generate_review_text(item_id, list(aspect_texts), style, nonce)
    if not text:
        raise LlmProtocolError("empty review text")
    return text


def rerank_listwise(client, query_text: str, item_ids: Sequence[str],
                    reviews_by_item: Mapping[str, Sequence[str]]) -> list[str]:
    """The model's emitted id order, verbatim; permutation repair happens downstream."""
    if not item_ids:
        raise ValueError("need at least one item")
    for iid in item_ids:
        if not reviews_by_item.get(iid):
            raise ValueError(f"item {iid!r} has no reviews to show the model")
    emitted = client.rerank_listwise(query_text, list(item_ids), reviews_by_item)
    known = set(item_ids)
    for iid in emitted:
        if iid not in known:
            raise LlmProtocolError(f"emitted id {iid!r} is not an input item")
    return list(emitted)
