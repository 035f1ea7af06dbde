"""Deterministic synthetic data: planning sets for training experiments and a
miniature benchmark corpus exercising the full build pipeline.

Planning sets place observation vectors near the text embeddings of the true
first and last actions, so the task is learnable from the boundary pair. The
corpus generator fabricates events, videos, votes, refinements, and all three
embedding tables with enough structure that clustering groups cluster-mates,
verification passes, and trained planners beat chance.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.typing import NDArray

from pathlib import Path

from procplan.benchmark import (
    BuilderConfig,
    Vote,
    cluster_events,
    write_refinements_csv,
    write_votes_csv,
)
from procplan.curation import Segment, VideoAnnotation, end_key, start_key, write_annotations
from procplan.embeddings import EmbeddingTable, save_table
from procplan.ioutil import write_json, write_jsonl
from procplan.planners import ActionSpace, action_key
from procplan.training import TrainingSet


@dataclass
class PlanningSetSpec:
    """Shape of a synthetic planning problem over random unit text vectors."""

    n_actions: int = 10
    dim: int = 32
    horizon: int = 3
    n_samples: int = 32
    noise: float = 0.02
    seed: int = 0
    # When set, middle steps are a fixed function of the endpoints, which
    # makes the mapping learnable rather than pure memorization.
    deterministic_middle: bool = True

    def __post_init__(self):
        if self.n_actions < 1 or self.dim < 1 or self.n_samples < 1:
            raise ValueError("n_actions, dim, and n_samples must be positive")
        if self.horizon < 2:
            raise ValueError(f"horizon must be >= 2, got {self.horizon}")
        if self.noise < 0:
            raise ValueError(f"noise must be >= 0, got {self.noise}")


def unit_rows(rng: np.random.Generator, n: int, dim: int) -> NDArray[np.float64]:
    rows = rng.normal(size=(n, dim))
    return rows / np.linalg.norm(rows, axis=1, keepdims=True)


def synth_planning_set(spec: PlanningSetSpec) -> tuple[ActionSpace, TrainingSet]:
    """Action space plus samples whose observations sit near the true
    endpoint text vectors (perturbed by `spec.noise`)."""
    rng = np.random.default_rng(spec.seed)
    text = unit_rows(rng, spec.n_actions, spec.dim)
    space = ActionSpace(
        action_ids=[f"act{i:03d}" for i in range(spec.n_actions)], text_vectors=text
    )
    gt = rng.integers(spec.n_actions, size=(spec.n_samples, spec.horizon))
    if spec.deterministic_middle:
        for j in range(1, spec.horizon - 1):
            gt[:, j] = (gt[:, 0] + gt[:, -1] + j) % spec.n_actions
    v_start = text[gt[:, 0]] + spec.noise * rng.normal(size=(spec.n_samples, spec.dim))
    v_end = text[gt[:, -1]] + spec.noise * rng.normal(size=(spec.n_samples, spec.dim))
    return space, TrainingSet(v_start=v_start, v_end=v_end, gt_idx=gt)


def perturbed_space(space: ActionSpace, scale: float = 0.05, seed: int = 1,
                    suffix: str = " (novel)") -> ActionSpace:
    """Paraphrase space: each vector is the matching base vector plus noise.

    Index i of the result corresponds to index i of `space`, so ground-truth
    indices carry over while every action id is new.
    """
    rng = np.random.default_rng(seed)
    vectors = space.text_vectors + scale * rng.normal(size=space.text_vectors.shape)
    return ActionSpace(
        action_ids=[f"{a}{suffix}" for a in space.action_ids], text_vectors=vectors
    )


@dataclass
class CorpusSpec:
    """Shape of the miniature benchmark corpus."""

    n_clusters: int = 3
    events_per_cluster: int = 2
    n_loner_events: int = 1
    actions_per_event: int = 4
    videos_per_event: int = 4
    dim: int = 24
    n_annotators: int = 3
    sentence_noise: float = 0.05
    observation_noise: float = 0.1
    seed: int = 0

    def __post_init__(self):
        if self.n_clusters < 1 or self.events_per_cluster < 2:
            raise ValueError("need at least one cluster of two events")
        if self.actions_per_event < 3:
            raise ValueError("events need at least 3 actions to survive screening")
        if self.videos_per_event < 1:
            raise ValueError("each event needs at least one video")
        if self.n_clusters + self.n_loner_events > self.dim:
            raise ValueError("dim too small for orthogonal sentence centers")

    def to_doc(self) -> dict:
        return {
            "n_clusters": self.n_clusters,
            "events_per_cluster": self.events_per_cluster,
            "n_loner_events": self.n_loner_events,
            "actions_per_event": self.actions_per_event,
            "videos_per_event": self.videos_per_event,
            "dim": self.dim,
            "n_annotators": self.n_annotators,
            "sentence_noise": self.sentence_noise,
            "observation_noise": self.observation_noise,
            "seed": self.seed,
        }


@dataclass
class SynthCorpus:
    event_rows: list[dict]
    annotations: list[VideoAnnotation]
    observations: EmbeddingTable
    actions: EmbeddingTable
    sentences: EmbeddingTable
    votes: list[Vote]
    refinements: list[tuple[str, str, str]] = field(default_factory=list)


def _event_grid(spec: CorpusSpec) -> list[tuple[str, str, str]]:
    """(event_id, name, domain) rows: clustered events then loners."""
    rows = []
    for c in range(spec.n_clusters):
        for k in range(spec.events_per_cluster):
            rows.append((f"c{c}e{k}", f"Task{c:02d}{k:02d}", f"domain{c}"))
    for j in range(spec.n_loner_events):
        rows.append((f"lone{j}", f"Solo{j:02d}", "misc"))
    return rows


def synth_corpus(spec: CorpusSpec) -> SynthCorpus:
    """Build the full miniature corpus; identical for identical specs."""
    rng = np.random.default_rng(spec.seed)
    grid = _event_grid(spec)

    # Raw step labels per event, with the final step of every clustered
    # event sharing a post-refinement label across its cluster.
    event_rows = []
    refinements: list[tuple[str, str, str]] = []
    refined_of: dict[tuple[str, str], str] = {}
    for event_id, name, domain in grid:
        labels = [f"step {j} of {event_id}" for j in range(spec.actions_per_event)]
        event_rows.append(
            {"id": event_id, "name": name, "domain": domain, "actions": labels}
        )
        if event_id.startswith("c"):
            cluster_tag = event_id.split("e")[0]
            unified = f"wrap up {cluster_tag}"
            refinements.append((event_id, labels[-1], unified))
            refined_of[(event_id, labels[-1])] = unified

    def refined(event_id: str, label: str) -> str:
        return refined_of.get((event_id, label), label)

    # Sentence vectors: orthonormal centers per cluster and per loner, with
    # small within-cluster jitter so greedy clustering groups cluster-mates.
    n_centers = spec.n_clusters + spec.n_loner_events
    centers, _ = np.linalg.qr(rng.normal(size=(spec.dim, n_centers)))
    centers = centers.T
    sentences = EmbeddingTable(dim=spec.dim)
    for event_id, _, _ in grid:
        if event_id.startswith("c"):
            center = centers[int(event_id[1:].split("e")[0])]
        else:
            center = centers[spec.n_clusters + int(event_id[4:])]
        vec = center + spec.sentence_noise * rng.normal(size=spec.dim)
        sentences.add(f"sentence/{event_id}", vec / np.linalg.norm(vec))

    # One text vector per distinct refined label.
    actions = EmbeddingTable(dim=spec.dim)
    for row in event_rows:
        for label in row["actions"]:
            key = action_key(refined(row["id"], label))
            if key not in actions:
                actions.add(key, unit_rows(rng, 1, spec.dim)[0])

    # Videos: full action sequence, except every third video drops the last
    # segment so curation sees variable lengths.
    annotations = []
    observations = EmbeddingTable(dim=spec.dim)
    for event_id, _, _ in grid:
        row = next(r for r in event_rows if r["id"] == event_id)
        steps = [refined(event_id, label) for label in row["actions"]]
        for k in range(spec.videos_per_event):
            m = len(steps) - 1 if k % 3 == 2 and len(steps) > 3 else len(steps)
            video_id = f"{event_id}-v{k:02d}"
            segments = [
                Segment(action_id=steps[j], ts=5.0 * j, te=5.0 * j + 4.0)
                for j in range(m)
            ]
            annotations.append(
                VideoAnnotation(video_id=video_id, event_id=event_id, segments=segments)
            )
            for j in range(m):
                base = actions.get(action_key(steps[j]))
                for key in (start_key(video_id, j), end_key(video_id, j)):
                    noise = spec.observation_noise * rng.normal(size=spec.dim)
                    observations.add(key, base + noise)

    # Unanimous yes votes on every multi-event candidate cluster.
    vecs = [
        (row["id"], sentences.get(f"sentence/{row['id']}")) for row in event_rows
    ]
    clusters = cluster_events(vecs, BuilderConfig())
    votes = [
        Vote(annotator_id=f"annotator{a}", cluster_id=c.id, transferable=True)
        for c in clusters
        if len(c.event_ids) >= 2
        for a in range(spec.n_annotators)
    ]

    return SynthCorpus(
        event_rows=event_rows,
        annotations=annotations,
        observations=observations,
        actions=actions,
        sentences=sentences,
        votes=votes,
        refinements=refinements,
    )


CORPUS_FILES = (
    "config.json",
    "events.jsonl",
    "annotations.jsonl",
    "observations.emb",
    "actions.emb",
    "sentences.emb",
    "votes.csv",
    "refinements.csv",
)


def write_corpus(corpus: SynthCorpus, out_dir: str | Path, spec: CorpusSpec) -> None:
    """Write the standard dataset directory layout; byte-identical per spec."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_json(out / "config.json", {"kind": "synthetic-corpus", "spec": spec.to_doc()})
    write_jsonl(out / "events.jsonl", corpus.event_rows)
    write_annotations(out / "annotations.jsonl", corpus.annotations)
    save_table(corpus.observations, out / "observations.emb")
    save_table(corpus.actions, out / "actions.emb")
    save_table(corpus.sentences, out / "sentences.emb")
    write_votes_csv(out / "votes.csv", corpus.votes)
    write_refinements_csv(out / "refinements.csv", corpus.refinements)
