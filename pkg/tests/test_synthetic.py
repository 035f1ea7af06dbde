"""Synthetic corpus and planning-set generators."""

from __future__ import annotations

import numpy as np
import pytest

from procplan.synthetic import (
    CorpusSpec,
    PlanningSetSpec,
    perturbed_space,
    synth_corpus,
    synth_planning_set,
)


def test_planning_set_shapes_and_targets():
    spec = PlanningSetSpec(n_actions=6, dim=16, horizon=4, n_samples=10, seed=3)
    space, ts = synth_planning_set(spec)
    assert space.text_vectors.shape == (6, 16)
    assert ts.v_start.shape == (10, 16)
    assert ts.gt_idx.shape == (10, 4)
    assert ts.gt_idx.min() >= 0 and ts.gt_idx.max() < 6
    norms = np.linalg.norm(space.text_vectors, axis=1)
    assert np.allclose(norms, 1.0)


def test_planning_set_deterministic_middle_rule():
    spec = PlanningSetSpec(n_actions=7, horizon=5, n_samples=8, seed=1,
                           deterministic_middle=True)
    _, ts = synth_planning_set(spec)
    for row in ts.gt_idx:
        for j in range(1, 4):
            assert row[j] == (row[0] + row[-1] + j) % 7


def test_planning_set_seed_reproducible():
    spec = PlanningSetSpec(seed=9)
    _, a = synth_planning_set(spec)
    _, b = synth_planning_set(spec)
    assert np.array_equal(a.v_start, b.v_start)
    assert np.array_equal(a.gt_idx, b.gt_idx)


def test_perturbed_space_alignment():
    space, _ = synth_planning_set(PlanningSetSpec(n_actions=5, seed=0))
    novel = perturbed_space(space, scale=0.05, seed=2)
    assert novel.action_ids == [f"{a} (novel)" for a in space.action_ids]
    cos = (novel.text_vectors * space.text_vectors).sum(axis=1)
    assert cos.min() > 0.9


def test_corpus_spec_validation():
    with pytest.raises(ValueError):
        CorpusSpec(n_clusters=0)
    with pytest.raises(ValueError):
        CorpusSpec(actions_per_event=1)


def test_corpus_counts():
    spec = CorpusSpec(seed=4)
    corpus = synth_corpus(spec)
    n_events = spec.n_clusters * spec.events_per_cluster + spec.n_loner_events
    assert len(corpus.event_rows) == n_events
    assert len(corpus.annotations) == n_events * spec.videos_per_event
    assert len(corpus.sentences) == n_events
    for row in corpus.event_rows:
        assert len(row["actions"]) == spec.actions_per_event


def test_corpus_observation_keys_cover_segments():
    corpus = synth_corpus(CorpusSpec(seed=0))
    for ann in corpus.annotations:
        for i in range(len(ann.segments)):
            assert f"{ann.video_id}/{i}/start" in corpus.observations
            assert f"{ann.video_id}/{i}/end" in corpus.observations


def test_corpus_votes_cover_multi_event_clusters():
    spec = CorpusSpec(seed=0)
    corpus = synth_corpus(spec)
    assert len(corpus.votes) > 0
    assert all(v.transferable for v in corpus.votes)
    annotators = {v.annotator_id for v in corpus.votes}
    assert len(annotators) == spec.n_annotators
