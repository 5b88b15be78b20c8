"""Review-based item retrieval: late fusion, aspect fusion, reranking, and a
synthetic benchmark for studying how review-aspect distributions affect both."""

from .corpus import (Aspect, AspectGraphStats, Corpus, CorpusError, Item,
                     Query, Review, ValidationReport, aspect_graph_stats,
                     load_corpus, save_corpus, validate_corpus)
from .distgen import (DistributionKind, GeometricBenchConfig,
                      apply_frequency_imbalance, generate_geometric_bench,
                      generate_reviews)
from .embedstore import (EmbeddingStore, EmbeddingStoreError, ScoredReview,
                         load_embeddings, save_embeddings, similarity,
                         top_k_reviews)
from .evaluation import (ItemDiagnostics, MetricSummary, QueryResult,
                         average_precision_at_k, fusion_diagnostics,
                         improvement_fraction, rank_transition_matrix,
                         recall_at_k, summarize)
from .experiment import (ExperimentConfig, ExperimentReport, RunClients,
                         run_experiment)
from .fusion import (Aggregator, AspectScoreMatrix, FusionTrace, ScoredList,
                     aggregate_scores, aspect_fusion, aspect_item_scores,
                     borda_merge, late_fusion, monolithic_lf, rank_top_k,
                     round_robin_merge)
from .llmclient import (ExtractedAspects, HttpLlmClient, LlmEndpointConfig,
                        LlmError, LlmProtocolError, LlmUnavailableError,
                        MockLlmClient, Span, extract_aspects,
                        generate_review_text, rerank_listwise)
from .rerank import (CrossEncoderClient, MockCrossEncoder, RerankInput,
                     RerankResult, cross_encoder_rerank, listwise_rerank,
                     repair_permutation, select_reviews)

__all__ = [name for name in dir() if not name.startswith("_")]
