"""
Embedding tables: the file format everything else reads
=======================================================

Builds a small table of float vectors keyed by strings, saves it to the
binary table format, loads it back, and checks the normalization diagnostic.
"""

from __future__ import annotations

import tempfile
from pathlib import Path

import numpy as np

from procplan.curation import end_key, start_key
from procplan.embeddings import EmbeddingTable, load_table, save_table
from procplan.planners import action_key

rng = np.random.default_rng(0)

# 1. Keys follow fixed schemes so producers and consumers never disagree:
#    observations are "video_id/<segment>/start|end", actions are
#    "action/<label>", guide sentences are "sentence/<event_id>".
print("observation keys:", start_key("pour-v01", 0), "/", end_key("pour-v01", 0))
print("action key:      ", action_key("pour the batter"))

# 2. Build a table. Vectors are quantized through float32 on insert, which
#    is what a neural encoder would hand us anyway.
table = EmbeddingTable(dim=8)
for i in range(4):
    table.add(start_key("pour-v01", i), rng.standard_normal(8))
    table.add(end_key("pour-v01", i), rng.standard_normal(8))
vec = rng.standard_normal(8)
table.add(action_key("pour the batter"), vec / np.linalg.norm(vec))
print(f"\ntable holds {len(table)} vectors of dim {table.dim}")

# 3. Round trip through the binary format.
with tempfile.TemporaryDirectory() as tmp:
    path = Path(tmp) / "demo.emb"
    save_table(table, path)
    print(f"saved {path.stat().st_size} bytes")
    back = load_table(path)

key = action_key("pour the batter")
print("round trip exact:", np.array_equal(table.get(key), back.get(key)))

# 4. Planners decode by cosine so scale never matters, but a wildly
#    unnormalized table usually means an export bug. The raw observation
#    vectors above are Gaussian, so the diagnostic correctly says no.
print("\nall vectors unit norm?", back.normalized)

unit_only = EmbeddingTable(dim=8)
for k in back.keys():
    v = back.get(k)
    unit_only.add(k, v / np.linalg.norm(v))
print("after normalizing:    ", unit_only.normalized)
