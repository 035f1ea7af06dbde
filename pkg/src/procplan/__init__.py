"""Embedding-space procedure planning toolkit.

Everything operates on precomputed embedding tables: benchmark construction
(clustering, verification, refinement, splits), sample curation, trainable
planners with similarity-matching decoding, and the SR/Acc/mIoU evaluation
harness over base and novel action spaces.
"""

from procplan.embeddings import (
    EmbeddingTable,
    SynthSpec,
    cosine_similarity,
    load_table,
    save_table,
    synth_table,
)

__all__ = [
    "EmbeddingTable",
    "SynthSpec",
    "cosine_similarity",
    "load_table",
    "save_table",
    "synth_table",
]

__version__ = "0.1.0"
