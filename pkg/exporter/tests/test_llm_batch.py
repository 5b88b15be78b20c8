import json
import threading
from http.server import BaseHTTPRequestHandler, HTTPServer

import pytest

from embed_exporter.llm_batch import (ChatClient, ChatConfig,
                                      EndpointExhausted, batch_extract,
                                      batch_generate, find_spans)


class ScriptedHandler(BaseHTTPRequestHandler):
    script = []

    def do_POST(self):
        self.rfile.read(int(self.headers.get("Content-Length", 0)))
        status, content = (self.script.pop(0) if self.script else (429, "rate limited"))
        body = json.dumps({"choices": [{"message": {"content": content}}]}).encode()
        self.send_response(status)
        self.send_header("Content-Type", "application/json")
        self.send_header("Content-Length", str(len(body)))
        self.end_headers()
        self.wfile.write(body)

    def log_message(self, *args):
        pass


@pytest.fixture
def server():
    srv = HTTPServer(("127.0.0.1", 0), ScriptedHandler)
    threading.Thread(target=srv.serve_forever, daemon=True).start()
    yield srv
    srv.shutdown()


def client_for(server, max_retries=1):
    return ChatClient(ChatConfig(base_url=f"http://127.0.0.1:{server.server_port}/v1",
                                 timeout=5.0, max_retries=max_retries,
                                 backoff_base=0.0))


def test_find_spans_contract():
    assert find_spans(["fast", "cheap"], "fast and cheap") == \
        [(0, 4, "fast"), (9, 14, "cheap")]
    assert find_spans(["fast"], "fast") is None            # fewer than two
    assert find_spans(["fast", "ghost"], "fast only") is None
    assert find_spans(["fast and", "and cheap"], "fast and cheap") is None  # overlap


def test_batch_extract_writes_ok_records(server, tmp_path):
    ScriptedHandler.script = [(200, '["fast", "cheap"]'), (200, '["warm", "filling"]')]
    out = tmp_path / "extracted.jsonl"
    stats = batch_extract([("q1", "fast and cheap"), ("q2", "warm and filling")],
                          client_for(server), out)
    assert stats == {"ok": 2, "flagged": 0, "skipped": 0}
    records = [json.loads(line) for line in out.read_text().splitlines()]
    assert all(r["status"] == "ok" and len(r["spans"]) >= 2 for r in records)


def test_batch_extract_flags_invalid_spans_instead_of_dropping(server, tmp_path):
    ScriptedHandler.script = [(200, "not a json array at all")]
    out = tmp_path / "extracted.jsonl"
    stats = batch_extract([("q1", "fast and cheap")], client_for(server), out)
    assert stats["flagged"] == 1
    [record] = [json.loads(line) for line in out.read_text().splitlines()]
    assert record["status"] == "flagged"
    assert record["raw"] == "not a json array at all"


def test_batch_extract_resume_skips_done_ids(server, tmp_path):
    out = tmp_path / "extracted.jsonl"
    ScriptedHandler.script = [(200, '["fast", "cheap"]')]
    batch_extract([("q1", "fast and cheap")], client_for(server), out)
    ScriptedHandler.script = [(200, '["warm", "filling"]')]
    stats = batch_extract([("q1", "fast and cheap"), ("q2", "warm and filling")],
                          client_for(server), out)
    assert stats == {"ok": 1, "flagged": 0, "skipped": 1}
    records = [json.loads(line) for line in out.read_text().splitlines()]
    assert [r["query_id"] for r in records] == ["q1", "q2"]  # no duplicates


def test_rate_limit_exhaustion_preserves_checkpoint(server, tmp_path):
    out = tmp_path / "extracted.jsonl"
    # first query succeeds, then the endpoint rate-limits forever
    ScriptedHandler.script = [(200, '["fast", "cheap"]')]
    with pytest.raises(EndpointExhausted):
        batch_extract([("q1", "fast and cheap"), ("q2", "warm and filling")],
                      client_for(server), out)
    records = [json.loads(line) for line in out.read_text().splitlines()]
    assert [r["query_id"] for r in records] == ["q1"]
    # resume completes only the missing query
    ScriptedHandler.script = [(200, '["warm", "filling"]')]
    stats = batch_extract([("q1", "fast and cheap"), ("q2", "warm and filling")],
                          client_for(server), out)
    assert stats == {"ok": 1, "flagged": 0, "skipped": 1}


def test_batch_generate_disjoint_counts_and_schema(server, tmp_path):
    ScriptedHandler.script = [(200, f"Nice review number {n}.") for n in range(4)]
    out = tmp_path / "reviews.jsonl"
    items = [("i1", [("i1::a1", "fast"), ("i1::a2", "cheap")])]
    stats = batch_generate(items, "disjoint", 2, client_for(server), out)
    assert stats == {"written": 4, "skipped": 0}
    records = [json.loads(line) for line in out.read_text().splitlines()]
    assert len(records) == 4
    assert all(len(r["aspect_ids"]) == 1 for r in records)
    assert {r["aspect_ids"][0] for r in records} == {"i1::a1", "i1::a2"}


def test_batch_generate_overlapping_mentions_all_aspects(server, tmp_path):
    ScriptedHandler.script = [(200, "Review mentioning everything.")] * 3
    out = tmp_path / "reviews.jsonl"
    items = [("i1", [("i1::a1", "fast"), ("i1::a2", "cheap")])]
    batch_generate(items, "overlapping", 3, client_for(server), out)
    records = [json.loads(line) for line in out.read_text().splitlines()]
    assert len(records) == 3
    assert all(r["aspect_ids"] == ["i1::a1", "i1::a2"] for r in records)


def test_generate_resume_no_duplicates(server, tmp_path):
    out = tmp_path / "reviews.jsonl"
    ScriptedHandler.script = [(200, "First.")]
    with pytest.raises(EndpointExhausted):
        batch_generate([("i1", [("i1::a1", "fast")])], "disjoint", 2,
                       client_for(server), out)
    ScriptedHandler.script = [(200, "Second.")]
    stats = batch_generate([("i1", [("i1::a1", "fast")])], "disjoint", 2,
                           client_for(server), out)
    assert stats == {"written": 1, "skipped": 1}
    ids = [json.loads(line)["id"] for line in out.read_text().splitlines()]
    assert len(ids) == len(set(ids)) == 2


def test_cli_exit_codes(tmp_path):
    from embed_exporter.cli import main

    assert main(["llm-batch", "--task", "extract", "--base-url", "http://x",
                 "--out", str(tmp_path / "o.jsonl")]) == 2  # missing --queries
    queries = tmp_path / "queries.jsonl"
    queries.write_text(json.dumps({"id": "q1", "text": "fast and cheap",
                                   "gt_aspects": [], "correct_item_id": "i1"}) + "\n",
                       encoding="utf-8")
    rc = main(["llm-batch", "--task", "extract", "--queries", str(queries),
               "--base-url", "http://127.0.0.1:9/v1", "--max-retries", "0",
               "--timeout", "0.2", "--out", str(tmp_path / "o.jsonl")])
    assert rc == 3  # endpoint exhausted
