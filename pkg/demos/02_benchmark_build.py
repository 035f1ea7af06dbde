"""
Benchmark construction: cluster, verify, refine, split
======================================================

Walks the four stages that turn a pile of annotated events into a dataset
manifest: greedy sentence clustering, annotator verification, action label
refinement, and the per-video train/val/test split with held-out novel
events.
"""

from __future__ import annotations

import numpy as np

from procplan.benchmark import (
    Action,
    BuilderConfig,
    Event,
    Vote,
    apply_verification,
    cluster_events,
    compose_event_sentence,
    manifest_doc,
    refine_action_labels,
    split_dataset,
)


def unit(deg: float) -> np.ndarray:
    rad = np.deg2rad(deg)
    return np.array([np.cos(rad), np.sin(rad)])


# 1. Six events; the guide sentence of each is a composed "To <name>, first
#    ... then ... finally ..." string that a text encoder would embed. Here
#    we place the embeddings by hand: two tight groups and two loners.
events = [
    Event(id="fix-bike", name="Fix a bike tire", domain="repair"),
    Event(id="fix-scooter", name="Fix a scooter tire", domain="repair"),
    Event(id="brew-v60", name="Brew pour-over coffee", domain="kitchen"),
    Event(id="brew-press", name="Brew french press", domain="kitchen"),
    Event(id="tie-tie", name="Tie a tie", domain="clothing"),
    Event(id="carve-duck", name="Carve a wooden duck", domain="craft"),
]
actions = []
for e in events:
    for j in range(3):
        actions.append(Action(id=f"{e.id}-a{j}", event_id=e.id,
                              label=f"step {j} of {e.name.lower()}"))
bike_actions = [a for a in actions if a.event_id == "fix-bike"]
print("composed sentence for fix-bike:")
print(" ", compose_event_sentence(events[0], bike_actions))

vecs = [
    ("fix-bike", unit(0.0)), ("fix-scooter", unit(8.0)),
    ("brew-v60", unit(60.0)), ("brew-press", unit(66.0)),
    ("tie-tie", unit(120.0)), ("carve-duck", unit(185.0)),
]

# 2. Greedy clustering with a strict similarity threshold. Singletons are
#    rejected immediately; multi-event clusters become candidates.
config = BuilderConfig(theta=0.6, seed=0)
clusters = cluster_events(vecs, config)
for c in clusters:
    print(f"cluster {c.id}: {c.event_ids} [{c.status}]")

# 3. Annotators vote on whether procedures transfer within each candidate;
#    strict majority verifies. Here two of three say yes for cluster 0 and
#    cluster 1 gets a single no.
votes = [
    Vote(annotator_id="ann0", cluster_id=0, transferable=True),
    Vote(annotator_id="ann1", cluster_id=0, transferable=True),
    Vote(annotator_id="ann2", cluster_id=0, transferable=False),
    Vote(annotator_id="ann0", cluster_id=1, transferable=False),
]
verified = apply_verification(clusters, votes)
print("\nafter voting:", [(c.id, c.status) for c in verified])

# 4. Refinement renames near-duplicate labels so one action id covers both
#    events in a verified cluster.
refinements = [("fix-scooter", "step 2 of fix a scooter tire", "seat the tire")]
refined = refine_action_labels(actions, refinements)
changed = [a for a in refined if a.refined_label != a.label]
print("refined:", [(a.id, a.refined_label) for a in changed])

# 5. The split holds out one event per verified cluster as novel; base
#    videos go 80/20 into train/test with a fifth of train as val.
samples = [(f"{e.id}-v{k}", e.id) for e in events for k in range(10)]
split = split_dataset(verified, events, samples, config)
print("\nnovel events:", split.novel_event_ids)
for name in ("train", "val", "test_base", "test_novel"):
    print(f"  {name:10s} {len(getattr(split, name)):3d} videos")

# 6. Everything lands in one manifest document; byte-stable for a seed.
doc = manifest_doc(events, refined, verified, refinements, split, config)
print("\nmanifest sections:", sorted(doc))
