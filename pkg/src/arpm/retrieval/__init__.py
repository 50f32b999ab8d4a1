from .embedding import Embedder, EmbeddingServiceError, HashingEmbedder, HttpEmbedder
from .index import ExperienceIndex, KnowledgeIndex
from .routes import retrieve_experience, retrieve_knowledge
from .scoring import (
    AugmentationError,
    DocStats,
    QueryContext,
    augment_query,
    bm25_idf,
    chat_base_score,
    fuse_rrf,
    knowledge_base_scores,
    min_max_normalize,
    rank_key,
    score_bm25,
    score_vector,
    semantic_score,
    strip_augmentation,
)
from .text import tokenize

__all__ = [
    "AugmentationError",
    "DocStats",
    "Embedder",
    "EmbeddingServiceError",
    "ExperienceIndex",
    "HashingEmbedder",
    "HttpEmbedder",
    "KnowledgeIndex",
    "QueryContext",
    "augment_query",
    "bm25_idf",
    "chat_base_score",
    "fuse_rrf",
    "knowledge_base_scores",
    "min_max_normalize",
    "rank_key",
    "retrieve_experience",
    "retrieve_knowledge",
    "score_bm25",
    "score_vector",
    "semantic_score",
    "strip_augmentation",
    "tokenize",
]
