import json

import pytest

from reviewfusion.cli import main


def run(args):
    return main(args)


@pytest.fixture(scope="module")
def bench_dir(tmp_path_factory):
    d = tmp_path_factory.mktemp("bench")
    rc = run(["gen-bench", "--items", "15", "--aspects", "2", "--dim", "16",
              "--reviews-per-aspect", "3", "--seed", "4", "--out", str(d)])
    assert rc == 0
    return d


def test_gen_bench_writes_corpus_and_embeddings(bench_dir):
    for name in ("items.jsonl", "reviews.jsonl", "queries.jsonl", "embeddings.rire"):
        assert (bench_dir / name).exists()
    assert len((bench_dir / "reviews.jsonl").read_text().splitlines()) == 15 * 2 * 3


def test_gen_corpus_disjoint_line_counts(tmp_path, bench_dir):
    out = tmp_path / "disjoint"
    rc = run(["gen-corpus", "--kind", "fully-disjoint",
              "--items", str(bench_dir / "items.jsonl"),
              "--queries", str(bench_dir / "queries.jsonl"),
              "--seed", "7", "--out", str(out)])
    assert rc == 0
    # 10 reviews per aspect, 15 items x 2 aspects
    assert len((out / "reviews.jsonl").read_text().splitlines()) == 10 * 15 * 2


def test_gen_corpus_one_rare_from_disjoint(tmp_path, bench_dir):
    disjoint = tmp_path / "disjoint"
    run(["gen-corpus", "--kind", "fully-disjoint",
         "--items", str(bench_dir / "items.jsonl"), "--seed", "7", "--out", str(disjoint)])
    reduced = tmp_path / "rare"
    rc = run(["gen-corpus", "--kind", "one-rare", "--from", str(disjoint),
              "--seed", "8", "--out", str(reduced)])
    assert rc == 0
    # per 2-aspect item: one aspect keeps 10, the other keeps 1
    assert len((reduced / "reviews.jsonl").read_text().splitlines()) == 15 * 11


def test_gen_corpus_unknown_kind_exits_2(capsys):
    with pytest.raises(SystemExit) as exc:
        run(["gen-corpus", "--kind", "bogus", "--items", "x", "--out", "y"])
    assert exc.value.code == 2


def test_gen_corpus_imbalance_requires_from(tmp_path):
    rc = run(["gen-corpus", "--kind", "one-rare", "--seed", "1",
              "--out", str(tmp_path / "o")])
    assert rc == 2


def test_retrieve_then_evaluate(tmp_path, bench_dir, capsys):
    lists = tmp_path / "lists.jsonl"
    rc = run(["retrieve", "--corpus", str(bench_dir),
              "--embeddings", str(bench_dir / "embeddings.rire"),
              "--method", "af", "--aggregator", "amean", "--kr", "1", "--ki", "10",
              "--out", str(lists)])
    assert rc == 0
    records = [json.loads(line) for line in lists.read_text().splitlines()]
    assert len(records) == 15
    assert all(len(r["stage1"]) <= 10 for r in records)

    rc = run(["evaluate", "--lists", str(lists), "--corpus", str(bench_dir), "--ki", "10"])
    assert rc == 0
    out = capsys.readouterr().out
    assert "MAP@10" in out and "Re@10" in out


def test_retrieve_af_requires_aggregator(tmp_path, bench_dir):
    rc = run(["retrieve", "--corpus", str(bench_dir),
              "--embeddings", str(bench_dir / "embeddings.rire"),
              "--method", "af", "--kr", "1", "--out", str(tmp_path / "x.jsonl")])
    assert rc == 2


def test_rerank_command_emits_stage2(tmp_path, bench_dir):
    lists = tmp_path / "reranked.jsonl"
    rc = run(["rerank", "--corpus", str(bench_dir),
              "--embeddings", str(bench_dir / "embeddings.rire"),
              "--method", "mono", "--kr", "2", "--rerank", "listwise",
              "--out", str(lists)])
    assert rc == 0
    records = [json.loads(line) for line in lists.read_text().splitlines()]
    assert all("stage2" in r for r in records)
    # identity mock: stage2 ids match stage1 ids in order
    for r in records:
        assert [e["id"] for e in r["stage1"]] == [e["id"] for e in r["stage2"]]


def test_experiment_rejects_bad_schema(tmp_path):
    cfg = tmp_path / "exp.json"
    cfg.write_text(json.dumps({"experiment": {"dataset": "x"}}), encoding="utf-8")
    assert run(["experiment", "--config", str(cfg)]) == 2


def test_experiment_kr_override_shapes_grid(tmp_path, bench_dir):
    cfg = {
        "experiment": {"dataset": "bench", "methods": ["mono"], "kr_grid": [1],
                       "k_i": 10, "seed": 0},
        "paths": {"corpus_dir": str(bench_dir),
                  "embeddings": str(bench_dir / "embeddings.rire"),
                  "out_dir": str(tmp_path / "out")},
    }
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(cfg), encoding="utf-8")
    rc = run(["experiment", "--config", str(path), "--kr", "1,2,5,10,15,30"])
    assert rc == 0
    lines = (tmp_path / "out" / "report.csv").read_text().splitlines()
    assert lines[0] == "dataset,method,aggregator,K_R,K_I,stage,metric,mean,margin,n"
    # 6 K_R cells x 2 metrics + header
    assert len(lines) == 1 + 12
    assert (tmp_path / "out" / "report.md").exists()


def test_missing_corpus_path_is_runtime_error(tmp_path):
    cfg = {
        "experiment": {"dataset": "x", "methods": ["mono"], "kr_grid": [1]},
        "paths": {"corpus_dir": str(tmp_path / "nope"),
                  "embeddings": str(tmp_path / "nope.rire"),
                  "out_dir": str(tmp_path / "out")},
    }
    path = tmp_path / "exp.json"
    path.write_text(json.dumps(cfg), encoding="utf-8")
    assert run(["experiment", "--config", str(path)]) == 1
