"""Encode every corpus text (reviews, queries, query aspects) and emit the
engine's binary embedding file plus a manifest recording the encoder, the
dimension, per-class counts, and a content hash of the inputs."""

from __future__ import annotations

import hashlib
import json
from dataclasses import asdict, dataclass
from pathlib import Path

from .corpusio import read_corpus_texts
from .encoder import Encoder
from .writer import write_embedding_file


class ExportError(RuntimeError):
    pass


@dataclass(frozen=True)
class ExportManifest:
    encoder: str
    dim: int
    counts: dict  # reviews / queries / aspects
    input_hash: str
    vectors: int

    def write(self, path: str | Path) -> None:
        Path(path).write_text(json.dumps(asdict(self), indent=2) + "\n", encoding="utf-8")


def _hash_inputs(paths) -> str:
    digest = hashlib.sha256()
    for path in paths:
        digest.update(Path(path).read_bytes())
    return digest.hexdigest()


def _encode_batch(encoder: Encoder, ids, texts, batch_size: int):
    for start in range(0, len(ids), batch_size):
        chunk_ids = ids[start:start + batch_size]
        chunk_texts = texts[start:start + batch_size]
        try:
            vectors = encoder.encode(chunk_texts)
        except Exception:
            # retry one by one so the failing record is named
            for vid, text in zip(chunk_ids, chunk_texts):
                try:
                    vec = encoder.encode([text])
                except Exception as exc:
                    raise ExportError(f"encoding failed for {vid!r}: {exc}") from exc
                yield vid, vec[0]
            continue
        yield from zip(chunk_ids, vectors)


def _read_extracted_spans(path) -> dict[str, str]:
    """Extraction records from llm_batch: vectors keyed {query_id}::ext{j} so
    the engine's extracted-aspect mode can look them up."""
    out: dict[str, str] = {}
    with Path(path).open("r", encoding="utf-8") as fh:
        for line in fh:
            if not line.strip():
                continue
            record = json.loads(line)
            if record.get("status") != "ok":
                continue
            for j, (_, _, text) in enumerate(record["spans"]):
                out[f"{record['query_id']}::ext{j}"] = text
    return out


def export_embeddings(items_path, reviews_path, queries_path, encoder: Encoder,
                      out_path, manifest_path=None, batch_size: int = 32,
                      extracted_path=None) -> ExportManifest:
    """Returns the manifest; writes it next to out_path unless manifest_path
    is given. Nothing is written for an empty corpus. extracted_path adds
    vectors for LLM-extracted query spans."""
    texts = read_corpus_texts(items_path, reviews_path, queries_path)
    if texts.total == 0:
        raise ExportError("corpus has no texts to encode; nothing written")
    extracted = _read_extracted_spans(extracted_path) if extracted_path else {}

    records = []
    records += sorted(texts.reviews.items())
    records += sorted(texts.queries.items())
    records += sorted(texts.aspects.items())
    records += sorted(extracted.items())
    ids = [vid for vid, _ in records]
    if len(set(ids)) != len(ids):
        raise ExportError("duplicate vector ids across record classes")
    bodies = [text for _, text in records]

    encoded = list(_encode_batch(encoder, ids, bodies, batch_size))
    count = write_embedding_file(out_path, encoder.dim, encoded)

    counts = {"reviews": len(texts.reviews), "queries": len(texts.queries),
              "aspects": len(texts.aspects)}
    if extracted:
        counts["extracted"] = len(extracted)
    hash_paths = [items_path, reviews_path, queries_path]
    if extracted_path:
        hash_paths.append(extracted_path)
    manifest = ExportManifest(
        encoder=encoder.name,
        dim=encoder.dim,
        counts=counts,
        input_hash=_hash_inputs(hash_paths),
        vectors=count,
    )
    manifest.write(manifest_path or Path(out_path).with_suffix(".manifest.json"))
    return manifest
