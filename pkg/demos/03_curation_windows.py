"""
Curation: sliding windows over annotated videos
===============================================

Turns time-stamped action segments into fixed-horizon planning samples.
Every length-T window of consecutive segments becomes one sample whose
observations are the window's first start boundary and last end boundary,
so a video with M segments yields max(1, M - T + 1) samples.
"""

from __future__ import annotations

import numpy as np

from procplan.curation import (
    Segment,
    VideoAnnotation,
    expected_sample_count,
    extract_windows,
)

rng = np.random.default_rng(42)

# 1. One annotated video with five segments.
video = VideoAnnotation(
    video_id="omelet-v07",
    event_id="make-omelet",
    segments=[
        Segment(action_id="crack the eggs", ts=2.0, te=9.5),
        Segment(action_id="whisk the eggs", ts=10.0, te=21.0),
        Segment(action_id="heat the pan", ts=22.5, te=40.0),
        Segment(action_id="pour the eggs", ts=41.0, te=55.0),
        Segment(action_id="fold the omelet", ts=58.0, te=71.5),
    ],
)

# 2. Horizon 3 gives three windows; note the observation keys.
for s in extract_windows(video, horizon=3):
    print(f"{s.gt_action_ids}")
    print(f"    start obs {s.start_key}  end obs {s.end_key}")

# 3. A horizon longer than the video pads by repeating the last action, so
#    short videos still contribute one sample instead of disappearing.
[padded] = extract_windows(video, horizon=7)
print("\npadded to horizon 7:", padded.gt_action_ids)

# 4. The count law holds over any corpus; check it on 300 random lengths.
lengths = [int(rng.integers(1, 12)) for _ in range(300)]
videos = [
    VideoAnnotation(
        video_id=f"v{i}",
        event_id="e",
        segments=[Segment(action_id=f"a{j}", ts=3.0 * j, te=3.0 * j + 2.0)
                  for j in range(m)],
    )
    for i, m in enumerate(lengths)
]
for horizon in (3, 4, 5, 6):
    produced = sum(len(extract_windows(v, horizon)) for v in videos)
    law = expected_sample_count(lengths, horizon)
    print(f"T={horizon}: produced {produced:4d} samples, law says {law:4d}")
