"""Benchmark construction: sentence clustering, vote verification, label refinement, splits.

The pipeline turns a pool of events (each an ordered list of action labels)
into a transfer benchmark in four stages:

1. each event is rewritten as one sentence and greedily clustered by average
   cosine similarity against existing clusters (singletons are rejected),
2. annotator votes verify which clusters really share procedural knowledge,
   with manual edits (drop an event, add a cluster) applied before the tally,
3. action labels are refined through an old-label -> new-label mapping so the
   same action carries one description across events,
4. one event per verified cluster becomes a held-out novel event and the
   remaining base-event videos are split into train/val/test_base.

Downstream modules identify actions by refined label; the refined label is
the unified action id used in embedding keys ("action/<refined label>") and
in ground-truth sequences.
"""

from __future__ import annotations

import csv
import random
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np

from procplan.embeddings import cosine_similarity

CANDIDATE = "candidate"
VERIFIED = "verified"
REJECTED = "rejected"


@dataclass
class Action:
    """One step of one event. `id` is the per-event row id; `refined_label`
    is the unified cross-event identity."""

    id: str
    event_id: str
    label: str
    refined_label: str = ""

    def __post_init__(self):
        if not self.refined_label:
            self.refined_label = self.label


@dataclass
class Event:
    id: str
    name: str
    domain: str
    ordered_action_ids: list[str] = field(default_factory=list)


@dataclass
class Cluster:
    id: int
    event_ids: list[str]
    status: str = CANDIDATE


@dataclass(frozen=True)
class Vote:
    annotator_id: str
    cluster_id: int
    transferable: bool


@dataclass(frozen=True)
class RemoveEvent:
    event_id: str


@dataclass(frozen=True)
class AddCluster:
    event_ids: tuple[str, ...]


@dataclass
class BuilderConfig:
    theta: float = 0.6
    seed: int = 0
    train_fraction: float = 0.8
    val_fraction_of_train: float = 0.2

    def __post_init__(self):
        if not 0 < self.theta < 1:
            raise ValueError(f"theta must be in (0, 1), got {self.theta}")
        for name in ("train_fraction", "val_fraction_of_train"):
            v = getattr(self, name)
            if not 0 < v < 1:
                raise ValueError(f"{name} must be in (0, 1), got {v}")


@dataclass
class SplitManifest:
    train: list[str]
    val: list[str]
    test_base: list[str]
    test_novel: list[str]
    base_event_ids: list[str]
    novel_event_ids: list[str]
    seed: int

    def split_of_video(self) -> dict[str, str]:
        tags = {}
        for name in ("train", "val", "test_base", "test_novel"):
            for vid in getattr(self, name):
                tags[vid] = name
        return tags

    def to_doc(self) -> dict:
        return {
            "train": self.train,
            "val": self.val,
            "test_base": self.test_base,
            "test_novel": self.test_novel,
            "base_event_ids": self.base_event_ids,
            "novel_event_ids": self.novel_event_ids,
            "seed": self.seed,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "SplitManifest":
        return cls(**{k: doc[k] for k in (
            "train", "val", "test_base", "test_novel",
            "base_event_ids", "novel_event_ids", "seed")})


def parse_event_rows(rows: list[dict]) -> tuple[list[Event], list[Action]]:
    """Parse events from JSON-lines rows {id, name, domain, actions: [label, ...]}."""
    events, actions = [], []
    seen = set()
    for row in rows:
        eid = row["id"]
        if eid in seen:
            raise ValueError(f"duplicate event id {eid!r}")
        seen.add(eid)
        row_actions = []
        for i, label in enumerate(row["actions"]):
            row_actions.append(Action(id=f"{eid}:{i}", event_id=eid, label=label))
        events.append(Event(id=eid, name=row["name"], domain=row.get("domain", ""),
                            ordered_action_ids=[a.id for a in row_actions]))
        actions.extend(row_actions)
    return events, actions


def screen_events(events: list[Event], actions: list[Action],
                  min_actions: int = 3,
                  drop_event_ids: set[str] | None = None) -> tuple[list[Event], list[Action]]:
    """Preliminary screening: drop events with fewer than `min_actions` steps
    plus any manually named non-procedural events."""
    drop = set(drop_event_ids or ())
    counts: dict[str, int] = {}
    for a in actions:
        counts[a.event_id] = counts.get(a.event_id, 0) + 1
    kept_events = [e for e in events if e.id not in drop and counts.get(e.id, 0) >= min_actions]
    kept_ids = {e.id for e in kept_events}
    kept_actions = [a for a in actions if a.event_id in kept_ids]
    return kept_events, kept_actions


def compose_event_sentence(event: Event, actions: list[Action]) -> str:
    """Render an event as "<Name>: 1.<label> 2.<label> ..." in guide order."""
    if not actions:
        raise ValueError(f"event {event.id!r} has no actions to compose")
    for a in actions:
        if a.event_id != event.id:
            raise ValueError(f"action {a.id!r} does not belong to event {event.id!r}")
    steps = " ".join(f"{i}.{a.label}" for i, a in enumerate(actions, start=1))
    return f"{event.name}: {steps}"


def avg_text_sim(sentence_vec, cluster_members: list) -> float:
    """Mean cosine similarity between one sentence vector and cluster members."""
    if len(cluster_members) == 0:
        raise ValueError("cluster has no members")
    return float(np.mean([cosine_similarity(sentence_vec, m) for m in cluster_members]))


def cluster_events(sentence_vecs: list[tuple[str, np.ndarray]],
                   config: BuilderConfig) -> list[Cluster]:
    """Greedy sequential clustering of event sentences.

    Each sentence joins the first existing cluster whose average similarity
    strictly exceeds `config.theta`, otherwise it opens a new cluster.
    Clusters left with a single event are marked rejected. Order-sensitive by
    design: permuting the input can change the clustering.
    """
    members: list[list[tuple[str, np.ndarray]]] = []
    for event_id, vec in sentence_vecs:
        placed = False
        for group in members:
            sim = avg_text_sim(vec, [v for _, v in group])
            if sim > config.theta:
                group.append((event_id, vec))
                placed = True
                break
        if not placed:
            members.append([(event_id, vec)])
    clusters = []
    for i, group in enumerate(members):
        status = CANDIDATE if len(group) >= 2 else REJECTED
        clusters.append(Cluster(id=i, event_ids=[eid for eid, _ in group], status=status))
    return clusters


def apply_verification(clusters: list[Cluster], votes: list[Vote],
                       edits: list | None = None) -> list[Cluster]:
    """Apply manual edits, then verify clusters by strict annotator majority.

    A cluster is verified iff strictly more than half of the distinct
    annotators who voted on it marked it transferable; abstainers do not
    count. Clusters with fewer than two events can never be verified.
    """
    out = [replace(c, event_ids=list(c.event_ids)) for c in clusters]
    next_id = max((c.id for c in out), default=-1) + 1
    for edit in edits or []:
        if isinstance(edit, RemoveEvent):
            for c in out:
                if edit.event_id in c.event_ids:
                    c.event_ids.remove(edit.event_id)
        elif isinstance(edit, AddCluster):
            out.append(Cluster(id=next_id, event_ids=list(edit.event_ids), status=CANDIDATE))
            next_id += 1
        else:
            raise TypeError(f"unknown edit {edit!r}")

    by_id = {c.id: c for c in out}
    tally: dict[int, dict[str, bool]] = {}
    for vote in votes:
        if vote.cluster_id not in by_id:
            raise ValueError(f"vote on unknown cluster id {vote.cluster_id}")
        per = tally.setdefault(vote.cluster_id, {})
        if vote.annotator_id in per:
            raise ValueError(
                f"duplicate vote by annotator {vote.annotator_id!r} on cluster {vote.cluster_id}"
            )
        per[vote.annotator_id] = vote.transferable

    for c in out:
        if len(c.event_ids) < 2:
            c.status = REJECTED
            continue
        per = tally.get(c.id, {})
        yes = sum(per.values())
        c.status = VERIFIED if yes * 2 > len(per) else REJECTED
    return out


VOTES_HEADER = ["annotator_id", "cluster_id", "transferable"]


def read_votes_csv(path: str | Path) -> list[Vote]:
    """Read votes from a CSV file with header annotator_id,cluster_id,transferable."""
    votes = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != VOTES_HEADER:
            raise ValueError(
                f"votes file {path} has header {reader.fieldnames}, expected {VOTES_HEADER}"
            )
        for row in reader:
            flag = row["transferable"].strip().lower()
            if flag not in ("true", "false"):
                raise ValueError(f"bad transferable value {row['transferable']!r} in {path}")
            votes.append(Vote(annotator_id=row["annotator_id"],
                              cluster_id=int(row["cluster_id"]),
                              transferable=flag == "true"))
    return votes


def write_votes_csv(path: str | Path, votes: list[Vote]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(VOTES_HEADER)
        for v in votes:
            writer.writerow([v.annotator_id, v.cluster_id, "true" if v.transferable else "false"])


REFINEMENTS_HEADER = ["event", "old_label", "new_label"]


def read_refinements_csv(path: str | Path) -> list[tuple[str, str, str]]:
    """Read (event_id, old_label, new_label) rows from a CSV file."""
    rows = []
    with open(path, newline="", encoding="utf-8") as fh:
        reader = csv.DictReader(fh)
        if reader.fieldnames != REFINEMENTS_HEADER:
            raise ValueError(
                f"refinements file {path} has header {reader.fieldnames}, "
                f"expected {REFINEMENTS_HEADER}"
            )
        for row in reader:
            rows.append((row["event"], row["old_label"], row["new_label"]))
    return rows


def write_refinements_csv(path: str | Path, rows: list[tuple[str, str, str]]) -> None:
    with open(path, "w", newline="", encoding="utf-8") as fh:
        writer = csv.writer(fh)
        writer.writerow(REFINEMENTS_HEADER)
        for row in rows:
            writer.writerow(list(row))


def refine_action_labels(actions: list[Action],
                         mapping: list[tuple[str, str, str]]) -> list[Action]:
    """Set refined labels from (event_id, old_label, new_label) mapping rows.

    Actions absent from the mapping keep their original label. A mapping row
    that matches no action is an error listing the row.
    """
    lookup = {(a.event_id, a.label): a for a in actions}
    new_labels: dict[str, str] = {}
    for row in mapping:
        event_id, old, new = row
        hit = lookup.get((event_id, old))
        if hit is None:
            raise ValueError(f"refinement row matches no action: {row!r}")
        new_labels[hit.id] = new
    return [replace(a, refined_label=new_labels.get(a.id, a.label)) for a in actions]


def split_dataset(clusters: list[Cluster], events: list[Event],
                  samples: list[tuple[str, str]],
                  config: BuilderConfig) -> SplitManifest:
    """Pick one novel event per verified cluster, then split base videos.

    `samples` are (video_id, event_id) pairs; the split is per video so no
    video's windows straddle splits. Base videos go 80/20 to train/test_base
    (per `config.train_fraction`), then 20% of train moves to val. All novel
    videos land in test_novel. Deterministic for a given seed.
    """
    event_ids = {e.id for e in events}
    verified = [c for c in clusters if c.status == VERIFIED]
    for c in verified:
        if len(c.event_ids) < 2:
            raise ValueError(f"verified cluster {c.id} has fewer than 2 events")
        unknown = set(c.event_ids) - event_ids
        if unknown:
            raise ValueError(f"cluster {c.id} references unknown events {sorted(unknown)}")

    rng = random.Random(config.seed)
    novel = []
    for c in sorted(verified, key=lambda c: c.id):
        ordered = sorted(c.event_ids)
        novel.append(ordered[rng.randrange(len(ordered))])
    novel_set = set(novel)
    base_set = {eid for c in verified for eid in c.event_ids} - novel_set

    seen_videos = set()
    base_videos, novel_videos = [], []
    for video_id, event_id in samples:
        if video_id in seen_videos:
            raise ValueError(f"duplicate video id {video_id!r} in samples")
        seen_videos.add(video_id)
        if event_id in base_set:
            base_videos.append(video_id)
        elif event_id in novel_set:
            novel_videos.append(video_id)
        # videos of events outside every verified cluster are dropped

    base_videos.sort()
    rng.shuffle(base_videos)
    n = len(base_videos)
    n_train0 = int(n * config.train_fraction + 0.5)
    n_val = int(n_train0 * config.val_fraction_of_train + 0.5)
    val = base_videos[:n_val]
    train = base_videos[n_val:n_train0]
    test_base = base_videos[n_train0:]

    return SplitManifest(
        train=sorted(train),
        val=sorted(val),
        test_base=sorted(test_base),
        test_novel=sorted(novel_videos),
        base_event_ids=sorted(base_set),
        novel_event_ids=sorted(novel_set),
        seed=config.seed,
    )


def manifest_doc(events: list[Event], actions: list[Action], clusters: list[Cluster],
                 refinements: list[tuple[str, str, str]], split: SplitManifest,
                 config: BuilderConfig) -> dict:
    """Assemble the single benchmark document embedding all four stages."""
    by_event: dict[str, list[Action]] = {}
    for a in actions:
        by_event.setdefault(a.event_id, []).append(a)
    return {
        "config": {
            "theta": config.theta,
            "seed": config.seed,
            "train_fraction": config.train_fraction,
            "val_fraction_of_train": config.val_fraction_of_train,
        },
        "events": [
            {
                "id": e.id,
                "name": e.name,
                "domain": e.domain,
                "actions": [
                    {"id": a.id, "label": a.label, "refined_label": a.refined_label}
                    for a in by_event.get(e.id, [])
                ],
            }
            for e in events
        ],
        "clusters": [
            {"id": c.id, "event_ids": list(c.event_ids), "status": c.status}
            for c in clusters
        ],
        "refinements": [list(row) for row in refinements],
        "split": split.to_doc(),
    }
