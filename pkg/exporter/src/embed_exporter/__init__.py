"""Offline encoder and LLM batch tool that produces the retrieval engine's
corpus JSONL and binary embedding files."""

from .corpusio import CorpusTexts, read_corpus_texts
from .encoder import (DEFAULT_MODEL, HashEncoder, SentenceTransformerEncoder,
                      resolve_encoder)
from .export import ExportManifest, export_embeddings
from .llm_batch import (ChatClient, ChatConfig, batch_extract, batch_generate,
                        find_spans)
from .writer import write_embedding_file

__all__ = [name for name in dir() if not name.startswith("_")]
