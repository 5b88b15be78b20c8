"""Id-indexed dense vectors with exact dot-product scoring.

Vectors are stored in float32 (matching the on-disk format); every score is
accumulated in float64 so that fused averages are order-stable and
reproducible. The binary layout is little-endian:

    magic "RIRE" | version u16 = 1 | dim u32 | count u64
    then per record: id_len u32 | id UTF-8 | dim x f32

Paths ending in ".jsonl" use the {"id": ..., "vector": [...]} alternative.
"""

from __future__ import annotations

import json
import struct
from dataclasses import dataclass
from pathlib import Path
from typing import Iterable, Mapping

import numpy as np

from .corpus import Corpus

MAGIC = b"RIRE"
VERSION = 1
_HEADER = struct.Struct("<4sHIQ")
_IDLEN = struct.Struct("<I")


class EmbeddingStoreError(ValueError):
    """Bad embedding file, inconsistent dimensions, or a missing vector."""


@dataclass(frozen=True)
class ScoredReview:
    review_id: str
    score: float


def similarity(a, b) -> float:
    """Exact dot product in double precision; symmetric in its arguments."""
    av = np.asarray(a, dtype=np.float64)
    bv = np.asarray(b, dtype=np.float64)
    if av.shape != bv.shape or av.ndim != 1:
        raise EmbeddingStoreError(f"dimension mismatch: {av.shape} vs {bv.shape}")
    return float((av * bv).sum())


class EmbeddingStore:
    """Immutable store of float32 vectors plus a per-item review index.

    Review rows are packed into one C-contiguous matrix ordered by
    (item id asc, review id asc); each row reduction therefore matches
    similarity() bit for bit.
    """

    def __init__(self, dim: int, vectors: Mapping[str, np.ndarray],
                 item_index: Mapping[str, Iterable[str]]):
        self.dim = int(dim)
        self.vectors: dict[str, np.ndarray] = {}
        for vid, vec in vectors.items():
            arr = np.asarray(vec, dtype=np.float32)
            if arr.shape != (self.dim,):
                raise EmbeddingStoreError(
                    f"vector {vid!r} has dimension {arr.shape}, expected ({self.dim},)")
            if not np.all(np.isfinite(arr)):
                raise EmbeddingStoreError(f"vector {vid!r} contains non-finite values")
            arr.flags.writeable = False
            self.vectors[vid] = arr
        self.item_index: dict[str, list[str]] = {}
        for item_id in sorted(item_index):
            rids = sorted(item_index[item_id])
            for rid in rids:
                if rid not in self.vectors:
                    raise EmbeddingStoreError(f"missing vector for review {rid!r}")
            self.item_index[item_id] = rids
        self._build_matrix()

    def _build_matrix(self) -> None:
        order: list[str] = []
        segments: dict[str, tuple[int, int]] = {}
        for item_id, rids in self.item_index.items():
            segments[item_id] = (len(order), len(order) + len(rids))
            order.extend(rids)
        self._review_order = order
        self._segments = segments
        if order:
            self._matrix64 = np.ascontiguousarray(
                np.stack([self.vectors[rid] for rid in order]).astype(np.float64))
        else:
            self._matrix64 = np.zeros((0, self.dim), dtype=np.float64)

    @property
    def review_count(self) -> int:
        return len(self._review_order)

    def probe_scores(self, probe) -> np.ndarray:
        """Float64 dot products of probe against every indexed review row."""
        p = np.asarray(probe, dtype=np.float64)
        if p.shape != (self.dim,):
            raise EmbeddingStoreError(f"probe has dimension {p.shape}, expected ({self.dim},)")
        return (self._matrix64 * p).sum(axis=1)

    def segment(self, item_id: str) -> tuple[int, int]:
        try:
            return self._segments[item_id]
        except KeyError:
            raise EmbeddingStoreError(f"unknown item id {item_id!r}") from None

    def review_ids(self, item_id: str) -> list[str]:
        if item_id not in self.item_index:
            raise EmbeddingStoreError(f"unknown item id {item_id!r}")
        return list(self.item_index[item_id])


def top_k_reviews(store: EmbeddingStore, probe, item_id: str, k: int) -> list[ScoredReview]:
    """The item's reviews scored against probe: score descending, ties by id
    ascending, truncated to min(k, available)."""
    if k < 1:
        raise ValueError("k must be >= 1")
    scores = store.probe_scores(probe)
    start, end = store.segment(item_id)
    seg = scores[start:end]
    rids = store.item_index[item_id]
    order = np.argsort(-seg, kind="stable")  # ids pre-sorted, so ties stay ascending
    return [ScoredReview(rids[int(j)], float(seg[int(j)])) for j in order[: min(k, len(rids))]]


def save_embeddings(vectors: Mapping[str, np.ndarray], dim: int, path: str | Path) -> None:
    """Write vectors (id-sorted) in the binary format, or JSONL for .jsonl paths."""
    path = Path(path)
    ids = sorted(vectors)
    if path.suffix == ".jsonl":
        with path.open("w", encoding="utf-8") as fh:
            for vid in ids:
                arr = np.asarray(vectors[vid], dtype=np.float32)
                fh.write(json.dumps({"id": vid, "vector": [float(x) for x in arr]}) + "\n")
        return
    with path.open("wb") as fh:
        fh.write(_HEADER.pack(MAGIC, VERSION, dim, len(ids)))
        for vid in ids:
            arr = np.ascontiguousarray(np.asarray(vectors[vid], dtype="<f4"))
            if arr.shape != (dim,):
                raise EmbeddingStoreError(f"vector {vid!r} has dimension {arr.shape}, expected ({dim},)")
            raw = vid.encode("utf-8")
            fh.write(_IDLEN.pack(len(raw)))
            fh.write(raw)
            fh.write(arr.tobytes())


def read_embedding_file(path: str | Path) -> tuple[int, dict[str, np.ndarray]]:
    """Parse an embedding file into (dim, id -> float32 vector)."""
    path = Path(path)
    if path.suffix == ".jsonl":
        return _read_jsonl_embeddings(path)
    vectors: dict[str, np.ndarray] = {}
    with path.open("rb") as fh:
        header = fh.read(_HEADER.size)
        if len(header) < _HEADER.size:
            raise EmbeddingStoreError(f"{path}: truncated header")
        magic, version, dim, count = _HEADER.unpack(header)
        if magic != MAGIC:
            raise EmbeddingStoreError(f"{path}: bad magic {magic!r}")
        if version != VERSION:
            raise EmbeddingStoreError(f"{path}: unsupported version {version}")
        row_bytes = dim * 4
        for i in range(count):
            idlen_raw = fh.read(_IDLEN.size)
            if len(idlen_raw) < _IDLEN.size:
                raise EmbeddingStoreError(f"{path}: truncated record {i}")
            (idlen,) = _IDLEN.unpack(idlen_raw)
            vid_raw = fh.read(idlen)
            payload = fh.read(row_bytes)
            if len(vid_raw) < idlen or len(payload) < row_bytes:
                raise EmbeddingStoreError(f"{path}: truncated record {i}")
            vid = vid_raw.decode("utf-8")
            if vid in vectors:
                raise EmbeddingStoreError(f"{path}: duplicate id {vid!r}")
            vectors[vid] = np.frombuffer(payload, dtype="<f4").astype(np.float32)
    return int(dim), vectors


def _read_jsonl_embeddings(path: Path) -> tuple[int, dict[str, np.ndarray]]:
    vectors: dict[str, np.ndarray] = {}
    dim: int | None = None
    with path.open("r", encoding="utf-8") as fh:
        for lineno, line in enumerate(fh, start=1):
            if not line.strip():
                continue
            try:
                obj = json.loads(line)
            except json.JSONDecodeError as exc:
                raise EmbeddingStoreError(f"{path}:{lineno}: invalid JSON: {exc.msg}") from exc
            if "id" not in obj or "vector" not in obj:
                raise EmbeddingStoreError(f"{path}:{lineno}: need 'id' and 'vector'")
            vid = str(obj["id"])
            arr = np.asarray(obj["vector"], dtype=np.float32)
            if dim is None:
                dim = int(arr.shape[0])
            if arr.shape != (dim,):
                raise EmbeddingStoreError(
                    f"{path}:{lineno}: vector {vid!r} has {arr.shape[0]} values, expected {dim}")
            if vid in vectors:
                raise EmbeddingStoreError(f"{path}:{lineno}: duplicate id {vid!r}")
            vectors[vid] = arr
    if dim is None:
        raise EmbeddingStoreError(f"{path}: no vectors")
    return dim, vectors


def load_embeddings(path: str | Path, corpus: Corpus) -> EmbeddingStore:
    """Load an embedding file and index it against the corpus.

    Every review in the corpus must have a vector; the first missing id is
    reported. Query and aspect vectors are carried as-is.
    """
    dim, vectors = read_embedding_file(path)
    for rid in sorted(corpus.reviews):
        if rid not in vectors:
            raise EmbeddingStoreError(f"{path}: missing vector for review {rid!r}")
    return EmbeddingStore(dim=dim, vectors=vectors, item_index=corpus.reviews_by_item)
