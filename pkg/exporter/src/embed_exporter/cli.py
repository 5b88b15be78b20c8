"""embed-exporter command line: `export` encodes corpus texts into the
engine's binary embedding format; `llm-batch` runs checkpointed aspect
extraction or review generation against a hosted LLM."""

from __future__ import annotations

import argparse
import json
import sys

from .corpusio import CorpusFormatError
from .encoder import DEFAULT_MODEL, EncoderError, resolve_encoder
from .export import ExportError, export_embeddings
from .llm_batch import (BatchError, ChatClient, ChatConfig, EndpointExhausted,
                        batch_extract, batch_generate)


def cmd_export(args) -> int:
    encoder = resolve_encoder(args.model)
    manifest = export_embeddings(args.items, args.reviews, args.queries, encoder,
                                 args.out, manifest_path=args.manifest,
                                 batch_size=args.batch_size,
                                 extracted_path=args.extracted)
    print(f"wrote {manifest.vectors} vectors (dim {manifest.dim}) -> {args.out}")
    print(f"counts: {json.dumps(manifest.counts)}  input_hash: {manifest.input_hash[:12]}...")
    return 0


def _read_records(path):
    with open(path, "r", encoding="utf-8") as fh:
        for line in fh:
            if line.strip():
                yield json.loads(line)


def cmd_llm_batch(args) -> int:
    config = ChatConfig(base_url=args.base_url, model_name=args.model,
                        api_key_env_var=args.api_key_env, timeout=args.timeout,
                        max_retries=args.max_retries)
    client = ChatClient(config)
    if args.task == "extract":
        queries = [(str(obj["id"]), str(obj["text"])) for obj in _read_records(args.queries)]
        stats = batch_extract(queries, client, args.out)
    else:
        items = [(str(obj["id"]),
                  [(str(a["id"]), str(a["text"])) for a in obj["aspects"]])
                 for obj in _read_records(args.items)]
        stats = batch_generate(items, args.style, args.per_unit, client, args.out)
    print(f"{args.task}: {json.dumps(stats)} -> {args.out}")
    return 0


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="embed-exporter")
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("export", help="encode corpus texts to the binary embedding format")
    p.add_argument("--items", required=True)
    p.add_argument("--reviews", required=True)
    p.add_argument("--queries", required=True)
    p.add_argument("--model", default=DEFAULT_MODEL,
                   help=f"sentence-encoder model id or hash:<dim> (default {DEFAULT_MODEL})")
    p.add_argument("--out", required=True)
    p.add_argument("--manifest", default=None)
    p.add_argument("--batch-size", type=int, default=32)
    p.add_argument("--extracted", default=None,
                   help="llm-batch extraction JSONL; adds {query}::ext{j} vectors")
    p.set_defaults(func=cmd_export)

    p = sub.add_parser("llm-batch", help="checkpointed aspect extraction / review generation")
    p.add_argument("--task", required=True, choices=["extract", "generate"])
    p.add_argument("--items", help="items.jsonl (generate, or extract with full corpus)")
    p.add_argument("--reviews", help="reviews.jsonl (optional for extract)")
    p.add_argument("--queries", help="queries.jsonl (extract)")
    p.add_argument("--style", default="disjoint", choices=["overlapping", "disjoint"])
    p.add_argument("--per-unit", type=int, default=10,
                   help="reviews per aspect (disjoint) or per item (overlapping)")
    p.add_argument("--base-url", required=True)
    p.add_argument("--model", default="gpt-4")
    p.add_argument("--api-key-env", default="OPENAI_API_KEY")
    p.add_argument("--timeout", type=float, default=60.0)
    p.add_argument("--max-retries", type=int, default=3)
    p.add_argument("--out", required=True)
    p.set_defaults(func=cmd_llm_batch)
    return parser


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    if args.command == "llm-batch":
        if args.task == "extract" and not args.queries:
            print("error: --queries is required for --task extract", file=sys.stderr)
            return 2
        if args.task == "generate" and not args.items:
            print("error: --items is required for --task generate", file=sys.stderr)
            return 2
    try:
        return args.func(args)
    except EndpointExhausted as exc:
        print(f"endpoint exhausted (checkpoint preserved): {exc}", file=sys.stderr)
        return 3
    except (CorpusFormatError, EncoderError, ExportError, BatchError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
