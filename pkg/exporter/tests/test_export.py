import json

import numpy as np
import pytest

from embed_exporter.encoder import HashEncoder, resolve_encoder
from embed_exporter.export import ExportError, export_embeddings


def write_corpus(tmp_path, n_items=2, reviews_per_item=5, n_queries=2):
    """A small corpus in the engine's JSONL schema; 2x5 reviews by default."""
    items, reviews, queries = [], [], []
    for i in range(n_items):
        iid = f"i{i}"
        aspects = [{"id": f"{iid}::a1", "text": f"fast {i}"},
                   {"id": f"{iid}::a2", "text": f"cheap {i}"}]
        items.append({"id": iid, "aspects": aspects})
        for r in range(reviews_per_item):
            reviews.append({"id": f"{iid}::r{r:02d}", "item_id": iid,
                            "text": f"review {r} about item {i}",
                            "aspect_ids": [aspects[r % 2]["id"]]})
    for q in range(n_queries):
        queries.append({"id": f"q{q}", "text": f"fast {q} and cheap {q}",
                        "gt_aspects": [{"id": f"q{q}::a1", "text": f"fast {q}"},
                                       {"id": f"q{q}::a2", "text": f"cheap {q}"}],
                        "correct_item_id": f"i{q}"})
    paths = []
    for name, rows in (("items", items), ("reviews", reviews), ("queries", queries)):
        p = tmp_path / f"{name}.jsonl"
        p.write_text("".join(json.dumps(r) + "\n" for r in rows), encoding="utf-8")
        paths.append(p)
    return paths


def test_hash_encoder_is_deterministic_and_text_sensitive():
    enc = HashEncoder(dim=32)
    a = enc.encode(["hello world", "other text"])
    b = enc.encode(["hello world", "other text"])
    np.testing.assert_array_equal(a, b)
    assert not np.array_equal(a[0], a[1])
    assert a.dtype == np.float32 and a.shape == (2, 32)


def test_resolve_encoder_hash_spec():
    enc = resolve_encoder("hash:16")
    assert enc.dim == 16 and enc.name == "hash:16"


def test_export_round_trips_through_engine(tmp_path):
    """Acceptance: a 10-review corpus exported here loads in the engine with
    matching dim, count, and ids; manifest counts equal corpus counts."""
    items_p, reviews_p, queries_p = write_corpus(tmp_path)  # 10 reviews
    out = tmp_path / "embeddings.rire"
    manifest = export_embeddings(items_p, reviews_p, queries_p,
                                 HashEncoder(dim=48), out)

    from reviewfusion.corpus import load_corpus
    from reviewfusion.embedstore import load_embeddings

    corpus = load_corpus(items_p, reviews_p, queries_p)
    store = load_embeddings(out, corpus)
    assert store.dim == manifest.dim == 48
    assert manifest.counts == {"reviews": 10, "queries": 2, "aspects": 4}
    assert manifest.counts["reviews"] == len(corpus.reviews)
    assert manifest.counts["queries"] == len(corpus.queries)
    assert manifest.vectors == len(store.vectors) == 16
    for rid in corpus.reviews:
        assert rid in store.vectors
    for qid, query in corpus.queries.items():
        assert qid in store.vectors
        for aspect in query.gt_aspects:
            assert aspect.id in store.vectors
    print("\nACCEPTANCE PASS: exporter binary round-trips through the engine")


def test_exported_vectors_match_encoder_output(tmp_path):
    items_p, reviews_p, queries_p = write_corpus(tmp_path)
    out = tmp_path / "embeddings.rire"
    enc = HashEncoder(dim=8)
    export_embeddings(items_p, reviews_p, queries_p, enc, out)

    from reviewfusion.embedstore import read_embedding_file

    _, vectors = read_embedding_file(out)
    expected = enc.encode(["review 3 about item 1"])[0]
    np.testing.assert_array_equal(vectors["i1::r03"], expected)


def test_rerun_on_unchanged_inputs_gives_identical_hash(tmp_path):
    items_p, reviews_p, queries_p = write_corpus(tmp_path)
    m1 = export_embeddings(items_p, reviews_p, queries_p, HashEncoder(8),
                           tmp_path / "a.rire")
    m2 = export_embeddings(items_p, reviews_p, queries_p, HashEncoder(8),
                           tmp_path / "b.rire")
    assert m1.input_hash == m2.input_hash
    assert (tmp_path / "a.rire").read_bytes() == (tmp_path / "b.rire").read_bytes()


def test_changed_input_changes_hash(tmp_path):
    items_p, reviews_p, queries_p = write_corpus(tmp_path)
    m1 = export_embeddings(items_p, reviews_p, queries_p, HashEncoder(8),
                           tmp_path / "a.rire")
    reviews_p.write_text(reviews_p.read_text().replace("review 0", "review zero"),
                         encoding="utf-8")
    m2 = export_embeddings(items_p, reviews_p, queries_p, HashEncoder(8),
                           tmp_path / "b.rire")
    assert m1.input_hash != m2.input_hash


def test_empty_corpus_errors_and_writes_nothing(tmp_path):
    for name in ("items", "reviews", "queries"):
        (tmp_path / f"{name}.jsonl").write_text("", encoding="utf-8")
    out = tmp_path / "embeddings.rire"
    with pytest.raises(ExportError, match="nothing written"):
        export_embeddings(tmp_path / "items.jsonl", tmp_path / "reviews.jsonl",
                          tmp_path / "queries.jsonl", HashEncoder(8), out)
    assert not out.exists()


def test_manifest_written_beside_output(tmp_path):
    items_p, reviews_p, queries_p = write_corpus(tmp_path)
    out = tmp_path / "vecs.rire"
    export_embeddings(items_p, reviews_p, queries_p, HashEncoder(8), out)
    manifest = json.loads((tmp_path / "vecs.manifest.json").read_text())
    assert manifest["dim"] == 8
    assert manifest["encoder"] == "hash:8"


def test_extracted_spans_feed_engine_extracted_mode(tmp_path):
    """llm-batch extraction output exported with --extracted gives the engine
    everything its extracted-aspect retrieval mode needs."""
    items_p, reviews_p, queries_p = write_corpus(tmp_path)
    extracted_p = tmp_path / "extracted.jsonl"
    with extracted_p.open("w", encoding="utf-8") as fh:
        for q in range(2):
            fh.write(json.dumps({
                "query_id": f"q{q}", "status": "ok",
                "spans": [[0, 6, f"fast {q}"], [11, 18, f"cheap {q}"]]}) + "\n")
    out = tmp_path / "embeddings.rire"
    manifest = export_embeddings(items_p, reviews_p, queries_p, HashEncoder(16), out,
                                 extracted_path=extracted_p)
    assert manifest.counts["extracted"] == 4

    from reviewfusion.corpus import load_corpus
    from reviewfusion.embedstore import load_embeddings
    from reviewfusion.experiment import ExperimentConfig, RunClients, run_experiment

    corpus = load_corpus(items_p, reviews_p, queries_p)
    store = load_embeddings(out, corpus)

    class FixedExtractor:
        def extract_aspects(self, query_text, query_id=""):
            from reviewfusion.llmclient import ExtractedAspects, Span
            return ExtractedAspects(query_id=query_id, spans=(
                Span(0, 6, query_text[0:6]), Span(11, 18, query_text[11:18])))

    config = ExperimentConfig(dataset="real", methods=["af:amean"], kr_grid=[1],
                              k_i=10, aspect_source="extracted")
    report = run_experiment(config, corpus, store, RunClients(llm=FixedExtractor()))
    assert not report.failures


def test_export_cli(tmp_path, capsys):
    from embed_exporter.cli import main

    items_p, reviews_p, queries_p = write_corpus(tmp_path)
    rc = main(["export", "--items", str(items_p), "--reviews", str(reviews_p),
               "--queries", str(queries_p), "--model", "hash:24",
               "--out", str(tmp_path / "e.rire")])
    assert rc == 0
    assert "wrote 16 vectors (dim 24)" in capsys.readouterr().out
