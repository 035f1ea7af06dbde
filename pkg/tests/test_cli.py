"""Subcommand wiring: artifacts, determinism, overrides, and exit codes."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest

from procplan.cli import main
from procplan.benchmark import read_votes_csv, write_refinements_csv, write_votes_csv, Vote
from procplan.curation import Segment, VideoAnnotation, read_samples, write_annotations
from procplan.embeddings import EmbeddingTable, load_table, save_table
from procplan.evaluation import action_space_from_manifest
from procplan.ioutil import read_json, read_jsonl, write_json, write_jsonl
from procplan.llm import build_prompt, chat_request, render_plan


def run(argv: list[str]) -> int:
    return main(argv)


@pytest.fixture(scope="module")
def dataset(tmp_path_factory) -> Path:
    root = tmp_path_factory.mktemp("data")
    out = root / "corpus"
    assert run(["synth-data", "--out", str(out), "--seed", "7"]) == 0
    assert run(["build-benchmark", "--data", str(out)]) == 0
    assert run(["curate", "--data", str(out), "--manifest",
                str(out / "manifest.json"), "--horizon", "3"]) == 0
    return out


def test_synth_data_is_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["synth-data", "--out", str(a), "--seed", "7"]) == 0
    assert run(["synth-data", "--out", str(b), "--seed", "7"]) == 0
    files_a = sorted(p.name for p in a.iterdir())
    files_b = sorted(p.name for p in b.iterdir())
    assert files_a == files_b
    for name in files_a:
        assert (a / name).read_bytes() == (b / name).read_bytes(), name


def test_synth_data_seed_changes_content(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    assert run(["synth-data", "--out", str(a), "--seed", "7"]) == 0
    assert run(["synth-data", "--out", str(b), "--seed", "8"]) == 0
    assert (a / "observations.emb").read_bytes() != (b / "observations.emb").read_bytes()


def test_set_overrides_apply(tmp_path):
    out = tmp_path / "big"
    assert run(["synth-data", "--out", str(out), "--seed", "0",
                "--set", "n_clusters=4", "--set", "events_per_cluster=3"]) == 0
    rows = read_jsonl(out / "events.jsonl")
    assert len(rows) == 4 * 3 + 1
    config = read_json(out / "config.json")
    assert config["spec"]["n_clusters"] == 4


def test_bad_set_syntax_fails(tmp_path, capsys):
    assert run(["synth-data", "--out", str(tmp_path / "x"), "--set", "oops"]) == 1
    assert "key=value" in capsys.readouterr().err


def unit(theta: float) -> np.ndarray:
    return np.array([np.cos(theta), np.sin(theta), 0.0])


@pytest.fixture()
def three_event_dir(tmp_path) -> Path:
    """Two events with similar guide sentences plus one distant loner."""
    data = tmp_path / "three"
    data.mkdir()
    write_jsonl(data / "events.jsonl", [
        {"id": "fix-bike", "name": "FixBike", "domain": "repair",
         "actions": ["flip the bike", "patch the tube", "pump the tire"]},
        {"id": "fix-scooter", "name": "FixScooter", "domain": "repair",
         "actions": ["flip the scooter", "patch the tube", "pump the tire"]},
        {"id": "bake-bread", "name": "BakeBread", "domain": "cooking",
         "actions": ["knead the dough", "proof the dough", "bake the loaf"]},
    ])
    sentences = EmbeddingTable(dim=3)
    sentences.add("sentence/fix-bike", unit(0.0))
    sentences.add("sentence/fix-scooter", unit(0.5))
    sentences.add("sentence/bake-bread", unit(1.5))
    save_table(sentences, data / "sentences.emb")
    save_table(EmbeddingTable(dim=3), data / "observations.emb")
    actions = EmbeddingTable(dim=3)
    for i, label in enumerate(["flip the bike", "patch the tube", "pump the tire",
                               "flip the scooter", "knead the dough",
                               "proof the dough", "bake the loaf"]):
        actions.add(f"action/{label}", unit(0.3 * i))
    save_table(actions, data / "actions.emb")
    write_votes_csv(data / "votes.csv", [
        Vote(annotator_id="a1", cluster_id=0, transferable=True),
    ])
    write_refinements_csv(data / "refinements.csv", [])
    annotations = []
    for eid in ("fix-bike", "fix-scooter", "bake-bread"):
        labels = {
            "fix-bike": ["flip the bike", "patch the tube", "pump the tire"],
            "fix-scooter": ["flip the scooter", "patch the tube", "pump the tire"],
            "bake-bread": ["knead the dough", "proof the dough", "bake the loaf"],
        }[eid]
        for v in range(3):
            segments = [Segment(action_id=a, ts=5.0 * j, te=5.0 * j + 4.0)
                        for j, a in enumerate(labels)]
            annotations.append(VideoAnnotation(video_id=f"{eid}-v{v}",
                                               event_id=eid, segments=segments))
    write_annotations(data / "annotations.jsonl", annotations)
    return data


def test_build_benchmark_keeps_one_cluster(three_event_dir, capsys):
    out = three_event_dir / "manifest.json"
    assert run(["build-benchmark", "--data", str(three_event_dir),
                "--out", str(out)]) == 0
    doc = read_json(out)
    kept = [c for c in doc["clusters"] if c["status"] == "verified"]
    assert len(kept) == 1
    assert sorted(kept[0]["event_ids"]) == ["fix-bike", "fix-scooter"]
    statuses = {c["status"] for c in doc["clusters"]}
    assert statuses == {"verified", "rejected"}
    assert len(doc["split"]["novel_event_ids"]) == 1
    assert doc["config"]["theta"] == 0.6
    meta = read_json(str(out) + ".meta.json")
    assert meta["subcommand"] == "build-benchmark"
    assert meta["config"]["theta"] == 0.6


def test_curate_counts_windows(dataset):
    samples = read_samples(dataset / "samples_T3.jsonl")
    manifest = read_json(dataset / "manifest.json")
    split_doc = manifest["split"]
    in_split = set(split_doc["train"] + split_doc["val"]
                   + split_doc["test_base"] + split_doc["test_novel"])
    annotations = read_jsonl(dataset / "annotations.jsonl")
    expected = sum(
        max(1, len(a["segments"]) - 3 + 1)
        for a in annotations if a["video_id"] in in_split
    )
    assert len(samples) == expected
    assert {s.split_tag for s in samples} == {"train", "val", "test_base", "test_novel"}


def test_train_eval_round_trip(dataset, tmp_path, capsys):
    ckpt = tmp_path / "mlp.ckpt"
    log = tmp_path / "log.csv"
    assert run(["train", "--data", str(dataset), "--manifest",
                str(dataset / "manifest.json"), "--samples",
                str(dataset / "samples_T3.jsonl"), "--kind", "mlp",
                "--out", str(ckpt), "--log", str(log),
                "--set", "epochs=5", "--set", "batch_size=8",
                "--set", "lr=0.003"]) == 0
    assert ckpt.exists() and log.exists()
    meta = read_json(str(ckpt) + ".meta.json")
    assert meta["config"]["epochs"] == 5 and meta["config"]["seed"] == 0
    assert log.read_text().splitlines()[0] == "epoch,train_loss,val_sr,val_acc,val_miou"

    report_path = tmp_path / "report.json"
    assert run(["eval", "--data", str(dataset), "--manifest",
                str(dataset / "manifest.json"), "--samples",
                str(dataset / "samples_T3.jsonl"), "--checkpoint", str(ckpt),
                "--split", "test_novel", "--space", "novel",
                "--out", str(report_path)]) == 0
    doc = read_json(report_path)
    assert doc["split"] == "test_novel" and doc["space"] == "novel"
    assert set(doc) == {"planner", "split", "space", "T", "seed", "n",
                        "sr", "acc", "miou"}
    out = capsys.readouterr().out
    assert "SR" in out and "mIoU" in out


def test_eval_random_baseline(dataset, capsys):
    assert run(["eval", "--data", str(dataset), "--manifest",
                str(dataset / "manifest.json"), "--samples",
                str(dataset / "samples_T3.jsonl"), "--planner", "random"]) == 0
    assert "random" in capsys.readouterr().out


def test_eval_requires_checkpoint(dataset, capsys):
    assert run(["eval", "--data", str(dataset), "--manifest",
                str(dataset / "manifest.json"), "--samples",
                str(dataset / "samples_T3.jsonl")]) == 1
    assert "needs --checkpoint" in capsys.readouterr().err


def test_sweep_baseline_over_seeds(dataset, tmp_path):
    out = tmp_path / "sweep.json"
    assert run(["sweep", "--data", str(dataset), "--manifest",
                str(dataset / "manifest.json"), "--samples",
                str(dataset / "samples_T3.jsonl"), "--planner", "random",
                "--seeds", "0,1,2", "--out", str(out)]) == 0
    doc = read_json(out)
    assert set(doc) == {"mean", "std", "runs"}
    assert len(doc["runs"]) == 3
    assert doc["runs"][0]["seed"] == 0 and doc["runs"][2]["seed"] == 2


def test_review_clusters_appends_votes(dataset, monkeypatch, capsys):
    votes_path = dataset / "review_votes.csv"
    answers = iter(["y", "n", "maybe", "y"])
    monkeypatch.setattr("builtins.input", lambda prompt="": next(answers))
    assert run(["review-clusters", "--data", str(dataset), "--annotator", "ann1",
                "--votes", str(votes_path)]) == 0
    votes = read_votes_csv(votes_path)
    assert [v.transferable for v in votes] == [True, False, True]
    assert all(v.annotator_id == "ann1" for v in votes)
    assert "please answer y or n" in capsys.readouterr().out

    answers2 = iter(["n", "n", "n"])
    monkeypatch.setattr("builtins.input", lambda prompt="": next(answers2))
    assert run(["review-clusters", "--data", str(dataset), "--annotator", "ann2",
                "--votes", str(votes_path)]) == 0
    votes = read_votes_csv(votes_path)
    assert len(votes) == 6
    assert {v.annotator_id for v in votes} == {"ann1", "ann2"}


def test_llm_eval_replays_fixture(dataset, tmp_path):
    manifest = read_json(dataset / "manifest.json")
    actions_table = load_table(dataset / "actions.emb")
    space = action_space_from_manifest(manifest, actions_table, "base")
    samples = [s for s in read_samples(dataset / "samples_T3.jsonl")
               if s.split_tag == "test_base"][:2]
    rows = []
    for s in samples:
        prompt = build_prompt(space, s.horizon)
        rows.append({
            "request": chat_request(prompt, "mock"),
            "response": render_plan(s.gt_action_ids),
        })
    fixture = tmp_path / "fixture.jsonl"
    write_jsonl(fixture, rows)
    report_path = tmp_path / "llm_report.json"
    assert run(["llm-eval", "--data", str(dataset), "--manifest",
                str(dataset / "manifest.json"), "--samples",
                str(dataset / "samples_T3.jsonl"), "--fixture", str(fixture),
                "--set", "limit=2", "--set", "in_flight=1",
                "--out", str(report_path)]) == 0
    doc = read_json(report_path)
    assert doc["planner"] == "llm:mock"
    assert doc["n"] == 2
    assert doc["sr"] == 1.0


def test_llm_eval_needs_transport(dataset, capsys):
    assert run(["llm-eval", "--data", str(dataset), "--manifest",
                str(dataset / "manifest.json"), "--samples",
                str(dataset / "samples_T3.jsonl")]) == 1
    assert "fixture or endpoint" in capsys.readouterr().err


def test_plan_prints_comparison(dataset, capsys):
    assert run(["plan", "--data", str(dataset), "--manifest",
                str(dataset / "manifest.json"), "--samples",
                str(dataset / "samples_T3.jsonl"), "--planner", "matching",
                "--index", "0"]) == 0
    out = capsys.readouterr().out
    assert "gt:" in out and "1." in out


def test_unknown_subcommand_exits_nonzero():
    with pytest.raises(SystemExit):
        main(["made-up-command"])


def test_help_exists_for_every_subcommand(capsys):
    for name in ("synth-data", "build-benchmark", "review-clusters", "curate",
                 "train", "eval", "sweep", "plan", "llm-eval"):
        with pytest.raises(SystemExit) as info:
            main([name, "--help"])
        assert info.value.code == 0
        assert "usage" in capsys.readouterr().out


def test_missing_data_dir_fails(tmp_path, capsys):
    assert run(["build-benchmark", "--data", str(tmp_path / "nope")]) == 1
    assert "missing" in capsys.readouterr().err
