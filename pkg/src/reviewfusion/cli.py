"""Command-line front end.

Subcommands: gen-corpus, gen-bench, retrieve, rerank, evaluate, experiment.
Exit codes: 0 success, 1 runtime failure, 2 usage/validation error,
3 LLM endpoint exhaustion. All randomness flows from one top-level seed.
"""

from __future__ import annotations

import argparse
import json
import sys
from pathlib import Path

import jsonschema

from . import distgen, experiment, llmclient, rerank
from .corpus import (Corpus, CorpusError, load_corpus, save_corpus,
                     validate_corpus)
from .distgen import DistributionKind, GeometricBenchConfig
from .embedstore import EmbeddingStoreError, load_embeddings, save_embeddings
from .evaluation import average_precision_at_k, recall_at_k, summarize
from .experiment import ExperimentConfig, RunClients
from .fusion import ScoredList
from .llmclient import LlmEndpointConfig, LlmUnavailableError

RUN_CONFIG_SCHEMA = {
    "type": "object",
    "required": ["experiment", "paths"],
    "properties": {
        "experiment": {
            "type": "object",
            "required": ["dataset", "methods", "kr_grid"],
            "properties": {
                "dataset": {"type": "string"},
                "methods": {"type": "array", "items": {"type": "string"}, "minItems": 1},
                "kr_grid": {"type": "array", "items": {"type": "integer", "minimum": 1},
                            "minItems": 1},
                "k_i": {"type": "integer", "minimum": 1},
                "aspect_source": {"enum": ["gt", "extracted"]},
                "rerank": {"enum": ["none", "ce", "listwise"]},
                "seed": {"type": "integer"},
                "min_correct_item_aspects": {"type": "integer", "minimum": 1},
                "workers": {"type": ["integer", "null"], "minimum": 1},
            },
            "additionalProperties": False,
        },
        "paths": {
            "type": "object",
            "required": ["corpus_dir", "embeddings", "out_dir"],
            "properties": {
                "corpus_dir": {"type": "string"},
                "embeddings": {"type": "string"},
                "out_dir": {"type": "string"},
            },
            "additionalProperties": False,
        },
        "llm": {
            "type": ["object", "null"],
            "properties": {
                "base_url": {"type": "string"},
                "model_name": {"type": "string"},
                "api_key_env_var": {"type": "string"},
                "timeout": {"type": "number", "exclusiveMinimum": 0},
                "max_retries": {"type": "integer", "minimum": 0},
                "temperature": {"type": "number"},
                "max_concurrency": {"type": "integer", "minimum": 1},
            },
            "required": ["base_url"],
        },
        "llm_log": {"type": ["string", "null"]},
    },
    "additionalProperties": False,
}


class CliError(Exception):
    def __init__(self, message: str, code: int = 1):
        super().__init__(message)
        self.code = code


def _load_corpus_dir(corpus_dir: str | Path) -> Corpus:
    d = Path(corpus_dir)
    return load_corpus(d / "items.jsonl", d / "reviews.jsonl", d / "queries.jsonl")


def _write_corpus_dir(corpus: Corpus, out_dir: str | Path) -> None:
    d = Path(out_dir)
    d.mkdir(parents=True, exist_ok=True)
    save_corpus(corpus, d / "items.jsonl", d / "reviews.jsonl", d / "queries.jsonl")


def _load_items_file(path: str | Path):
    from .corpus import _parse_aspects, _read_jsonl, Item  # reuse the strict parser

    items = {}
    p = Path(path)
    for lineno, obj in _read_jsonl(p):
        if "id" not in obj or "aspects" not in obj:
            raise CorpusError(f"{p}:{lineno}: need 'id' and 'aspects'")
        item = Item(id=str(obj["id"]), aspects=_parse_aspects(obj["aspects"], p, lineno))
        if item.id in items:
            raise CorpusError(f"{p}:{lineno}: duplicate item id {item.id!r}")
        items[item.id] = item
    return items


def _make_llm_client(llm_cfg: dict | None, llm_log: str | None):
    if llm_cfg is None:
        return llmclient.MockLlmClient()
    kwargs = {k: llm_cfg[k] for k in
              ("base_url", "model_name", "api_key_env_var", "timeout",
               "max_retries", "temperature") if k in llm_cfg}
    config = LlmEndpointConfig(**kwargs)
    return llmclient.HttpLlmClient(config,
                                   max_concurrency=llm_cfg.get("max_concurrency", 4),
                                   llm_log=llm_log)


def cmd_gen_corpus(args) -> int:
    kind = DistributionKind.from_string(args.kind)
    out_dir = Path(args.out)
    if kind in (DistributionKind.ONE_RARE_ASPECT, DistributionKind.ONE_POPULAR_ASPECT):
        if not args.from_dir:
            raise CliError("--from <disjoint corpus dir> is required for imbalanced kinds", code=2)
        corpus = _load_corpus_dir(args.from_dir)
        kept = distgen.apply_frequency_imbalance(corpus.reviews.values(), kind, args.seed)
        corpus = Corpus(items=corpus.items,
                        reviews={r.id: r for r in kept},
                        queries=corpus.queries)
    else:
        if not args.items:
            raise CliError("--items is required for base kinds", code=2)
        items = _load_items_file(args.items)
        queries = {}
        if args.queries:
            import tempfile

            with tempfile.NamedTemporaryFile("w", suffix=".jsonl", delete=False) as tmp:
                empty_reviews = tmp.name
            try:
                queries = load_corpus(args.items, empty_reviews, args.queries).queries
            finally:
                Path(empty_reviews).unlink(missing_ok=True)
        text_source = _make_llm_client(_load_json(args.llm_config) if args.llm_config else None,
                                       args.llm_log)
        reviews = distgen.generate_reviews(list(items.values()), kind, text_source,
                                           seed=args.seed,
                                           reviews_per_unit=args.reviews_per_unit)
        corpus = Corpus(items=items, reviews={r.id: r for r in reviews}, queries=queries)
    report = validate_corpus(corpus)
    if not report.ok:
        for v in report.violations[:20]:
            print(f"violation: {v.kind} {v.subject_id}: {v.detail}", file=sys.stderr)
        raise CliError(f"generated corpus failed validation ({len(report.violations)} violations)",
                       code=2)
    _write_corpus_dir(corpus, out_dir)
    print(f"items={len(corpus.items)} reviews={len(corpus.reviews)} queries={len(corpus.queries)} "
          f"-> {out_dir}")
    return 0


def cmd_gen_bench(args) -> int:
    config = GeometricBenchConfig(
        n_items=args.items, aspects_per_item=args.aspects, dim=args.dim,
        reviews_per_aspect=args.reviews_per_aspect, review_noise=args.review_noise,
        query_noise=args.query_noise, distractor_similarity=args.distractor_similarity,
        seed=args.seed)
    kind = DistributionKind.from_string(args.kind)
    corpus, store = distgen.generate_geometric_bench(config, kind)
    out_dir = Path(args.out)
    _write_corpus_dir(corpus, out_dir)
    save_embeddings(store.vectors, store.dim, out_dir / "embeddings.rire")
    print(f"items={len(corpus.items)} reviews={len(corpus.reviews)} "
          f"queries={len(corpus.queries)} dim={store.dim} -> {out_dir}")
    return 0


def _retrieve_results(args, corpus, store, clients, rerank_mode: str):
    config = ExperimentConfig(
        dataset=args.dataset, methods=[_method_string(args)], kr_grid=[args.kr],
        k_i=args.ki, aspect_source=args.aspect_source, rerank=rerank_mode,
        seed=0, min_correct_item_aspects=args.min_aspects, workers=args.workers)
    report = experiment.run_experiment(config, corpus, store, clients)
    if report.failures:
        raise CliError(f"retrieval failed: {report.failures[0].error}", code=1)
    return report.results[(_method_string(args), args.kr)]


def _method_string(args) -> str:
    if args.method == "mono":
        return "mono"
    if not args.aggregator:
        raise CliError("--aggregator is required with --method af", code=2)
    return f"af:{args.aggregator}"


def _dump_lists(results, path: str | Path) -> None:
    with Path(path).open("w", encoding="utf-8") as fh:
        for res in sorted(results, key=lambda r: r.query_id):
            record = {
                "query_id": res.query_id,
                "correct_item_id": res.correct_item_id,
                "stage1": [{"id": iid, "score": score} for iid, score in res.stage1.entries],
            }
            if res.stage2 is not None:
                record["stage2"] = [{"id": iid, "score": score} for iid, score in res.stage2.entries]
            fh.write(json.dumps(record, ensure_ascii=False) + "\n")


def cmd_retrieve(args) -> int:
    corpus = _load_corpus_dir(args.corpus)
    store = load_embeddings(args.embeddings, corpus)
    llm_cfg = _load_json(args.llm_config) if args.llm_config else None
    clients = RunClients(llm=_make_llm_client(llm_cfg, args.llm_log))
    results = _retrieve_results(args, corpus, store, clients, "none")
    _dump_lists(results, args.out)
    print(f"wrote {len(results)} ranked lists -> {args.out}")
    return 0


def cmd_rerank(args) -> int:
    corpus = _load_corpus_dir(args.corpus)
    store = load_embeddings(args.embeddings, corpus)
    llm_cfg = _load_json(args.llm_config) if args.llm_config else None
    clients = RunClients(llm=_make_llm_client(llm_cfg, args.llm_log),
                         cross_encoder=rerank.MockCrossEncoder())
    results = _retrieve_results(args, corpus, store, clients, args.rerank)
    _dump_lists(results, args.out)
    print(f"wrote {len(results)} reranked lists -> {args.out}")
    return 0


def cmd_evaluate(args) -> int:
    corpus = _load_corpus_dir(args.corpus)
    per_stage: dict[str, list[float]] = {}
    n = 0
    with Path(args.lists).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            obj = json.loads(line)
            correct = obj.get("correct_item_id") or corpus.queries[obj["query_id"]].correct_item_id
            n += 1
            for stage in ("stage1", "stage2"):
                if stage not in obj:
                    continue
                entries = tuple((e["id"], float(e["score"])) for e in obj[stage])
                slist = ScoredList(entries=entries, k=max(args.ki, len(entries)))
                per_stage.setdefault(f"{stage} MAP@{args.ki}", []).append(
                    average_precision_at_k(slist, correct, args.ki))
                per_stage.setdefault(f"{stage} Re@{args.ki}", []).append(
                    recall_at_k(slist, correct, args.ki))
    if not n:
        raise CliError("no ranked lists found", code=1)
    for name in sorted(per_stage):
        values = per_stage[name]
        if len(values) >= 2:
            s = summarize(values, name)
            print(f"{name}: {s.mean:.4f} (+/-{s.margin95:.4f}, n={s.n})")
        else:
            print(f"{name}: {values[0]:.4f} (n=1)")
    return 0


def _load_json(path: str | Path) -> dict:
    try:
        return json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as exc:
        raise CliError(f"cannot read JSON config {path}: {exc}", code=2) from exc


def cmd_experiment(args) -> int:
    raw = _load_json(args.config)
    try:
        jsonschema.validate(raw, RUN_CONFIG_SCHEMA)
    except jsonschema.ValidationError as exc:
        raise CliError(f"config schema violation: {exc.message}", code=2) from exc

    exp_kwargs = dict(raw["experiment"])
    if args.kr:
        exp_kwargs["kr_grid"] = [int(x) for x in args.kr.split(",")]
    config = ExperimentConfig(**exp_kwargs)
    paths = raw["paths"]
    out_dir = Path(args.out or paths["out_dir"])
    out_dir.mkdir(parents=True, exist_ok=True)

    corpus = _load_corpus_dir(paths["corpus_dir"])
    store = load_embeddings(paths["embeddings"], corpus)
    llm = _make_llm_client(raw.get("llm"), raw.get("llm_log"))
    clients = RunClients(llm=llm, cross_encoder=rerank.MockCrossEncoder())

    report = experiment.run_experiment(config, corpus, store, clients)
    report.write_csv(out_dir / "report.csv")
    report.write_markdown(out_dir / "report.md")
    if config.rerank != "none":
        report.write_transitions_csv(out_dir / "transitions.csv")
    print(f"report -> {out_dir / 'report.csv'}")
    if report.failures:
        for f in report.failures:
            print(f"cell failed: {f.method} @ K_R={f.k_r}: {f.error}", file=sys.stderr)
        return 1
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="reviewfusion",
                                     description="Review-based item retrieval toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("gen-corpus", help="generate a synthetic review corpus")
    p.add_argument("--kind", required=True,
                   choices=[k.value for k in DistributionKind])
    p.add_argument("--items", help="items.jsonl with ground-truth aspects")
    p.add_argument("--queries", help="optional queries.jsonl copied into the corpus")
    p.add_argument("--from", dest="from_dir",
                   help="existing fully-disjoint corpus dir (imbalanced kinds)")
    p.add_argument("--reviews-per-unit", type=int, default=None)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.add_argument("--llm-config", help="JSON file with LLM endpoint settings")
    p.add_argument("--llm-log", help="audit log path (JSON-Lines)")
    p.set_defaults(func=cmd_gen_corpus)

    p = sub.add_parser("gen-bench", help="generate the geometric benchmark")
    p.add_argument("--items", type=int, default=200)
    p.add_argument("--aspects", type=int, default=3)
    p.add_argument("--dim", type=int, default=64)
    p.add_argument("--reviews-per-aspect", type=int, default=10)
    p.add_argument("--review-noise", type=float, default=0.1)
    p.add_argument("--query-noise", type=float, default=0.35)
    p.add_argument("--distractor-similarity", type=float, default=0.55)
    p.add_argument("--kind", default="fully-disjoint",
                   choices=[k.value for k in DistributionKind])
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_gen_bench)

    def retrieval_flags(p):
        p.add_argument("--corpus", required=True)
        p.add_argument("--embeddings", required=True)
        p.add_argument("--method", required=True, choices=["mono", "af"])
        p.add_argument("--aggregator",
                       choices=["amean", "gmean", "hmean", "min", "borda", "round-robin"])
        p.add_argument("--kr", type=int, required=True)
        p.add_argument("--ki", type=int, default=10)
        p.add_argument("--aspect-source", default="gt", choices=["gt", "extracted"])
        p.add_argument("--min-aspects", type=int, default=2)
        p.add_argument("--dataset", default="corpus")
        p.add_argument("--workers", type=int, default=None)
        p.add_argument("--llm-config")
        p.add_argument("--llm-log")
        p.add_argument("--out", required=True)

    p = sub.add_parser("retrieve", help="first-stage retrieval to ranked lists")
    retrieval_flags(p)
    p.set_defaults(func=cmd_retrieve)

    p = sub.add_parser("rerank", help="first stage plus reranking")
    retrieval_flags(p)
    p.add_argument("--rerank", required=True, choices=["ce", "listwise"])
    p.set_defaults(func=cmd_rerank)

    p = sub.add_parser("evaluate", help="score ranked lists against the corpus")
    p.add_argument("--lists", required=True)
    p.add_argument("--corpus", required=True)
    p.add_argument("--ki", type=int, default=10)
    p.set_defaults(func=cmd_evaluate)

    p = sub.add_parser("experiment", help="run a full config-driven experiment grid")
    p.add_argument("--config", required=True)
    p.add_argument("--kr", help="override K_R grid, comma-separated")
    p.add_argument("--out", help="override output directory")
    p.set_defaults(func=cmd_experiment)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except CliError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return exc.code
    except LlmUnavailableError as exc:
        print(f"LLM endpoint exhausted: {exc}", file=sys.stderr)
        return 3
    except (CorpusError, EmbeddingStoreError, distgen.DistgenError,
            experiment.ExperimentError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 2
    except Exception as exc:  # runtime failure
        print(f"error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
