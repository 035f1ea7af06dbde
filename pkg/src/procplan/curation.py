"""Turn annotated videos into fixed-horizon planning samples.

A video annotation lists M action segments with temporal boundaries. For a
horizon T, a video with M >= T yields M - T + 1 sliding windows; a shorter
video yields a single sample whose action list is padded by repeating the
last action. Samples carry embedding keys for the observations at the window
boundaries ("<video_id>/<segment_index>/start|end", zero-based) rather than
pixels, so curation never touches video files.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from pathlib import Path

from procplan.benchmark import SplitManifest
from procplan.ioutil import read_jsonl, write_jsonl


@dataclass(frozen=True)
class Segment:
    action_id: str
    ts: float
    te: float

    def __post_init__(self):
        if not 0 <= self.ts < self.te:
            raise ValueError(f"segment needs 0 <= ts < te, got ts={self.ts}, te={self.te}")


@dataclass
class VideoAnnotation:
    video_id: str
    event_id: str
    segments: list[Segment]

    def __post_init__(self):
        if not self.segments:
            raise ValueError(f"video {self.video_id!r} has no segments")
        starts = [s.ts for s in self.segments]
        if starts != sorted(starts):
            raise ValueError(f"video {self.video_id!r} segments are not ordered by start time")


@dataclass
class PlanSample:
    video_id: str
    event_id: str
    horizon: int
    start_key: str
    end_key: str
    gt_action_ids: list[str]
    split_tag: str = ""

    def __post_init__(self):
        if len(self.gt_action_ids) != self.horizon:
            raise ValueError(
                f"sample {self.video_id!r} has {len(self.gt_action_ids)} actions "
                f"for horizon {self.horizon}"
            )


def start_key(video_id: str, seg_index: int) -> str:
    return f"{video_id}/{seg_index}/start"


def end_key(video_id: str, seg_index: int) -> str:
    return f"{video_id}/{seg_index}/end"


def extract_windows(video: VideoAnnotation, horizon: int) -> list[PlanSample]:
    """Slide a window of `horizon` actions over the video's segment list.

    With M segments and M >= horizon this yields M - horizon + 1 samples;
    window j starts at segment j and ends at segment j + horizon - 1. With
    M < horizon it yields one sample padded by repeating the last action.
    """
    if horizon < 2:
        raise ValueError(f"horizon must be >= 2, got {horizon}")
    m = len(video.segments)
    actions = [s.action_id for s in video.segments]
    if m < horizon:
        gt = actions + [actions[-1]] * (horizon - m)
        return [PlanSample(
            video_id=video.video_id,
            event_id=video.event_id,
            horizon=horizon,
            start_key=start_key(video.video_id, 0),
            end_key=end_key(video.video_id, m - 1),
            gt_action_ids=gt,
        )]
    samples = []
    for j in range(m - horizon + 1):
        samples.append(PlanSample(
            video_id=video.video_id,
            event_id=video.event_id,
            horizon=horizon,
            start_key=start_key(video.video_id, j),
            end_key=end_key(video.video_id, j + horizon - 1),
            gt_action_ids=actions[j:j + horizon],
        ))
    return samples


def expected_sample_count(segment_counts: list[int], horizon: int) -> int:
    """Dataset size law: sum over videos of max(1, M - horizon + 1)."""
    return sum(max(1, m - horizon + 1) for m in segment_counts)


@dataclass
class CuratedDataset:
    horizon: int
    splits: dict[str, list[PlanSample]] = field(default_factory=dict)

    def counts(self) -> dict[str, int]:
        return {name: len(samples) for name, samples in self.splits.items()}


SPLIT_NAMES = ("train", "val", "test_base", "test_novel")


def build_dataset(manifest: SplitManifest, annotations: list[VideoAnnotation],
                  horizon: int,
                  event_actions: dict[str, set[str]] | None = None) -> CuratedDataset:
    """Window every annotated video and file the samples under its split.

    Every annotation must name an event and video present in the manifest.
    When `event_actions` maps event ids to their allowed action ids, each
    ground-truth entry is checked against the sample's event.
    """
    known_events = set(manifest.base_event_ids) | set(manifest.novel_event_ids)
    tags = manifest.split_of_video()
    dataset = CuratedDataset(horizon=horizon, splits={name: [] for name in SPLIT_NAMES})
    for ann in annotations:
        if ann.event_id not in known_events:
            raise ValueError(
                f"annotation for video {ann.video_id!r} references unknown event "
                f"{ann.event_id!r}"
            )
        tag = tags.get(ann.video_id)
        if tag is None:
            raise ValueError(f"video {ann.video_id!r} is not in any split of the manifest")
        if event_actions is not None:
            allowed = event_actions.get(ann.event_id, set())
            for seg in ann.segments:
                if seg.action_id not in allowed:
                    raise ValueError(
                        f"video {ann.video_id!r} segment action {seg.action_id!r} "
                        f"is not an action of event {ann.event_id!r}"
                    )
        for sample in extract_windows(ann, horizon):
            sample.split_tag = tag
            dataset.splits[tag].append(sample)
    return dataset


def annotation_to_row(ann: VideoAnnotation) -> dict:
    return {
        "video_id": ann.video_id,
        "event_id": ann.event_id,
        "segments": [{"action_id": s.action_id, "ts": s.ts, "te": s.te}
                     for s in ann.segments],
    }


def annotation_from_row(row: dict) -> VideoAnnotation:
    return VideoAnnotation(
        video_id=row["video_id"],
        event_id=row["event_id"],
        segments=[Segment(action_id=s["action_id"], ts=s["ts"], te=s["te"])
                  for s in row["segments"]],
    )


def sample_to_row(sample: PlanSample) -> dict:
    return {
        "video_id": sample.video_id,
        "event_id": sample.event_id,
        "horizon": sample.horizon,
        "start_key": sample.start_key,
        "end_key": sample.end_key,
        "gt_action_ids": list(sample.gt_action_ids),
        "split_tag": sample.split_tag,
    }


def sample_from_row(row: dict) -> PlanSample:
    return PlanSample(
        video_id=row["video_id"],
        event_id=row["event_id"],
        horizon=row["horizon"],
        start_key=row["start_key"],
        end_key=row["end_key"],
        gt_action_ids=list(row["gt_action_ids"]),
        split_tag=row.get("split_tag", ""),
    )


def write_annotations(path: str | Path, annotations: list[VideoAnnotation]) -> None:
    write_jsonl(path, [annotation_to_row(a) for a in annotations])


def read_annotations(path: str | Path) -> list[VideoAnnotation]:
    return [annotation_from_row(r) for r in read_jsonl(path)]


def write_samples(path: str | Path, samples: list[PlanSample]) -> None:
    write_jsonl(path, [sample_to_row(s) for s in samples])


def read_samples(path: str | Path) -> list[PlanSample]:
    return [sample_from_row(r) for r in read_jsonl(path)]
