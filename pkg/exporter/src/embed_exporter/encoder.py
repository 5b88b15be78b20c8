"""Text encoders. The default is the TAS-B sentence encoder; a seeded hashing
encoder is available for offline runs and tests (deterministic across
platforms, seeded from each text's SHA-256)."""

from __future__ import annotations

import hashlib
from typing import Protocol, Sequence

import numpy as np

DEFAULT_MODEL = "sentence-transformers/msmarco-distilbert-base-tas-b"


class EncoderError(RuntimeError):
    pass


class Encoder(Protocol):
    name: str
    dim: int

    def encode(self, texts: Sequence[str]) -> np.ndarray: ...


class HashEncoder:
    """Content-hash-seeded Gaussian vectors; no model download required."""

    def __init__(self, dim: int = 64):
        if dim < 2:
            raise EncoderError("hash encoder dim must be >= 2")
        self.dim = dim
        self.name = f"hash:{dim}"

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        out = np.empty((len(texts), self.dim), dtype=np.float32)
        for row, text in enumerate(texts):
            digest = hashlib.sha256(text.encode("utf-8")).digest()
            seed = int.from_bytes(digest[:8], "little")
            rng = np.random.default_rng(seed)
            out[row] = (rng.standard_normal(self.dim) / np.sqrt(self.dim)).astype(np.float32)
        return out


class SentenceTransformerEncoder:
    """Wrapper over sentence-transformers; imported lazily so the exporter
    works without torch installed when only the hash encoder is used."""

    def __init__(self, model_id: str = DEFAULT_MODEL, batch_size: int = 32):
        try:
            from sentence_transformers import SentenceTransformer
        except ImportError as exc:
            raise EncoderError(
                "sentence-transformers is not installed; install the 'st' extra "
                "or use a hash:<dim> encoder") from exc
        try:
            self._model = SentenceTransformer(model_id)
        except Exception as exc:
            raise EncoderError(f"cannot load encoder model {model_id!r}: {exc}") from exc
        self.name = model_id
        self.dim = int(self._model.get_sentence_embedding_dimension())
        self._batch_size = batch_size

    def encode(self, texts: Sequence[str]) -> np.ndarray:
        vectors = self._model.encode(list(texts), batch_size=self._batch_size,
                                     convert_to_numpy=True, show_progress_bar=False)
        return np.asarray(vectors, dtype=np.float32)


def resolve_encoder(spec: str) -> Encoder:
    """"hash:<dim>" for the offline encoder, otherwise a sentence-transformers
    model id (default TAS-B)."""
    if spec.startswith("hash:"):
        return HashEncoder(dim=int(spec.split(":", 1)[1]))
    return SentenceTransformerEncoder(model_id=spec)
