"""Command-line entry point wiring every stage of the pipeline.

Subcommands: synth-data, build-benchmark, review-clusters, curate, train,
eval, sweep, plan, llm-eval. Every subcommand accepts `--config <path>` (a
JSON file) plus repeatable `--set key=value` overrides; explicit flags win
over both. Artifacts are written atomically, each JSONL/CSV/binary artifact
gets a sidecar `<name>.meta.json` recording the effective config, and JSON
artifacts embed the config directly. Exit status is 0 iff all requested work
succeeded.
"""

from __future__ import annotations

import argparse
import json
import os
import sys
from pathlib import Path

from procplan import benchmark as bm
from procplan import curation as cur
from procplan.embeddings import load_table
from procplan.evaluation import (
    EvalReport,
    action_space_from_manifest,
    compute_metrics,
    evaluate_split,
    plans_for_samples,
    resolve_observations,
    seed_sweep,
)
from procplan.ioutil import read_json, read_jsonl, write_json
from procplan.llm import HttpChatTransport, LlmSample, MockTransport, run_llm_eval
from procplan.planners import ActionSpace, matching_plan, random_plan
from procplan.synthetic import CorpusSpec, synth_corpus, write_corpus
from procplan.training import (
    TrainConfig,
    load_checkpoint,
    make_planner,
    prepare_training_set,
    save_checkpoint,
    train,
)

DATA_FILES = {
    "events": "events.jsonl",
    "annotations": "annotations.jsonl",
    "observations": "observations.emb",
    "actions": "actions.emb",
    "sentences": "sentences.emb",
    "votes": "votes.csv",
    "refinements": "refinements.csv",
}


def parse_set_value(raw: str):
    """`--set` values parse as JSON when possible, else stay strings."""
    try:
        return json.loads(raw)
    except json.JSONDecodeError:
        return raw


def apply_sets(config: dict, sets: list[str]) -> dict:
    for item in sets:
        key, sep, raw = item.partition("=")
        if not sep or not key:
            raise ValueError(f"--set needs key=value, got {item!r}")
        node = config
        parts = key.split(".")
        for part in parts[:-1]:
            node = node.setdefault(part, {})
            if not isinstance(node, dict):
                raise ValueError(f"--set key {key!r} crosses a non-dict value")
        node[parts[-1]] = parse_set_value(raw)
    return config


def effective_config(args: argparse.Namespace, defaults: dict) -> dict:
    config = dict(defaults)
    if getattr(args, "config", None):
        loaded = read_json(args.config)
        if not isinstance(loaded, dict):
            raise ValueError(f"config file {args.config} must hold a JSON object")
        config.update(loaded)
    apply_sets(config, getattr(args, "set", None) or [])
    return config


def write_meta(artifact_path: str | Path, subcommand: str, config: dict) -> None:
    path = Path(str(artifact_path) + ".meta.json")
    write_json(path, {"subcommand": subcommand, "config": config})


def data_path(data_dir: str, name: str) -> Path:
    path = Path(data_dir) / DATA_FILES[name]
    if not path.exists():
        raise FileNotFoundError(f"dataset directory is missing {path}")
    return path


def load_manifest(path: str) -> dict:
    doc = read_json(path)
    for key in ("config", "events", "clusters", "split"):
        if key not in doc:
            raise ValueError(f"manifest {path} is missing the {key!r} section")
    return doc


def build_stages(data_dir: str, config: dict, votes: list[bm.Vote]):
    """Stages shared by build-benchmark and review-clusters: parse, screen,
    compose, cluster; verification applies only when votes exist."""
    rows = read_jsonl(data_path(data_dir, "events"))
    events, actions = bm.parse_event_rows(rows)
    events, actions = bm.screen_events(events, actions,
                                       min_actions=config["min_actions"])
    sentences = load_table(data_path(data_dir, "sentences"))
    vecs = []
    for event in events:
        key = f"sentence/{event.id}"
        if key not in sentences:
            raise KeyError(f"sentence table is missing {key!r}")
        vecs.append((event.id, sentences.get(key)))
    builder = bm.BuilderConfig(
        theta=config["theta"], seed=config["seed"],
        train_fraction=config["train_fraction"],
        val_fraction_of_train=config["val_fraction_of_train"],
    )
    clusters = bm.cluster_events(vecs, builder)
    verified = bm.apply_verification(clusters, votes)
    return events, actions, clusters, verified, builder


BUILD_DEFAULTS = {
    "theta": 0.6, "seed": 0, "train_fraction": 0.8,
    "val_fraction_of_train": 0.2, "min_actions": 3,
}


def cmd_build_benchmark(args: argparse.Namespace) -> int:
    config = effective_config(args, BUILD_DEFAULTS)
    votes_path = data_path(args.data, "votes")
    votes = bm.read_votes_csv(votes_path)
    events, actions, _, verified, builder = build_stages(args.data, config, votes)
    refinements = bm.read_refinements_csv(data_path(args.data, "refinements"))
    actions = bm.refine_action_labels(actions, refinements)
    annotations = cur.read_annotations(data_path(args.data, "annotations"))
    pairs = [(a.video_id, a.event_id) for a in annotations]
    split = bm.split_dataset(verified, events, pairs, builder)
    doc = bm.manifest_doc(events, actions, verified, refinements, split, builder)
    out = args.out or str(Path(args.data) / "manifest.json")
    write_json(out, doc)
    write_meta(out, "build-benchmark", config)
    kept = [c for c in verified if c.status == bm.VERIFIED]
    print(f"{'clusters':<14}{'kept':>6}{'events':>8}{'novel':>7}")
    print(f"{len(verified):<14}{len(kept):>6}{len(events):>8}"
          f"{len(split.novel_event_ids):>7}")
    print(f"wrote {out}")
    return 0


def cmd_review_clusters(args: argparse.Namespace) -> int:
    config = effective_config(args, BUILD_DEFAULTS)
    events, actions, clusters, _, _ = build_stages(args.data, config, votes=[])
    by_event = {e.id: e for e in events}
    actions_of: dict[str, list[bm.Action]] = {}
    for a in actions:
        actions_of.setdefault(a.event_id, []).append(a)
    votes_path = Path(args.votes) if args.votes \
        else Path(args.data) / DATA_FILES["votes"]
    existing = bm.read_votes_csv(votes_path) if votes_path.exists() else []
    fresh: list[bm.Vote] = []
    candidates = [c for c in clusters if c.status == bm.CANDIDATE]
    print(f"{len(candidates)} candidate clusters to review as {args.annotator!r}")
    for cluster in candidates:
        print(f"\ncluster {cluster.id}:")
        for eid in cluster.event_ids:
            event = by_event[eid]
            print(f"  {bm.compose_event_sentence(event, actions_of[eid])}")
        while True:
            answer = input("transferable? [y/n] ").strip().lower()
            if answer in ("y", "yes", "n", "no"):
                break
            print("please answer y or n")
        fresh.append(bm.Vote(annotator_id=args.annotator, cluster_id=cluster.id,
                             transferable=answer.startswith("y")))
    bm.write_votes_csv(votes_path, existing + fresh)
    write_meta(votes_path, "review-clusters", config)
    print(f"\nrecorded {len(fresh)} votes to {votes_path}")
    return 0


CURATE_DEFAULTS = {"horizon": 3}


def cmd_curate(args: argparse.Namespace) -> int:
    config = effective_config(args, CURATE_DEFAULTS)
    if args.horizon is not None:
        config["horizon"] = args.horizon
    manifest = load_manifest(args.manifest)
    split = bm.SplitManifest.from_doc(manifest["split"])
    annotations = cur.read_annotations(data_path(args.data, "annotations"))
    in_split = set(split.train + split.val + split.test_base + split.test_novel)
    annotations = [a for a in annotations if a.video_id in in_split]
    dataset = cur.build_dataset(split, annotations, config["horizon"])
    rows = dataset.counts()
    out = args.out or str(Path(args.data) / f"samples_T{config['horizon']}.jsonl")
    flat = [s for name in cur.SPLIT_NAMES for s in dataset.splits[name]]
    cur.write_samples(out, flat)
    write_meta(out, "curate", config)
    print(f"{'split':<12}{'samples':>8}")
    for name in cur.SPLIT_NAMES:
        print(f"{name:<12}{rows[name]:>8}")
    print(f"wrote {out}")
    return 0


SYNTH_DEFAULTS = {
    "n_clusters": 3, "events_per_cluster": 2, "n_loner_events": 1,
    "actions_per_event": 4, "videos_per_event": 4, "dim": 24,
    "n_annotators": 3, "sentence_noise": 0.05, "observation_noise": 0.1,
    "seed": 0,
}


def cmd_synth_data(args: argparse.Namespace) -> int:
    config = effective_config(args, SYNTH_DEFAULTS)
    if args.seed is not None:
        config["seed"] = args.seed
    spec = CorpusSpec(**config)
    corpus = synth_corpus(spec)
    write_corpus(corpus, args.out, spec)
    print(f"{'events':<10}{'videos':>8}{'actions':>9}{'votes':>7}")
    print(f"{len(corpus.event_rows):<10}{len(corpus.annotations):>8}"
          f"{len(corpus.actions):>9}{len(corpus.votes):>7}")
    print(f"wrote {args.out}")
    return 0


def read_split_samples(samples_path: str, split: str) -> list[cur.PlanSample]:
    samples = [s for s in cur.read_samples(samples_path) if s.split_tag == split]
    if not samples:
        raise ValueError(f"no samples with split {split!r} in {samples_path}")
    return samples


TRAIN_DEFAULTS = {
    "theta1": 1.0, "theta2": 0.2, "lr": None, "epochs": 200, "batch_size": 64,
    "seed": 0, "planner_kind": "mlp", "planner_options": {},
}


def train_once(args, config: dict, seed: int | None = None):
    manifest = load_manifest(args.manifest)
    table = load_table(data_path(args.data, "observations"))
    actions_table = load_table(data_path(args.data, "actions"))
    space = action_space_from_manifest(manifest, actions_table, "base")
    cfg = TrainConfig(**{**config, **({"seed": seed} if seed is not None else {})})
    train_set = prepare_training_set(read_split_samples(args.samples, "train"),
                                     table, space)
    val_set = prepare_training_set(read_split_samples(args.samples, "val"),
                                   table, space)
    return train(train_set, val_set, space, cfg), space, cfg


def cmd_train(args: argparse.Namespace) -> int:
    config = effective_config(args, TRAIN_DEFAULTS)
    if args.kind:
        config["planner_kind"] = args.kind
    result, _, _ = train_once(args, config)
    save_checkpoint(result.checkpoint, args.out)
    write_meta(args.out, "train", config)
    if args.log:
        result.write_log(args.log)
        write_meta(args.log, "train", config)
    m = result.checkpoint.metrics
    print(f"{'kind':<12}{'epoch':>6}{'val SR':>9}{'val Acc':>9}{'val mIoU':>10}")
    print(f"{result.checkpoint.kind:<12}{result.checkpoint.epoch:>6}"
          f"{m['val_sr'] * 100:>9.2f}{m['val_acc'] * 100:>9.2f}"
          f"{m['val_miou'] * 100:>10.2f}")
    print(f"wrote {args.out}")
    return 0


EVAL_DEFAULTS = {"seed": 0}


def baseline_report(planner_name: str, samples, space, table, *, split, space_name,
                    seed) -> EvalReport:
    horizon = samples[0].horizon
    if planner_name == "random":
        plans = [random_plan(space, horizon, seed + i) for i in range(len(samples))]
    else:
        vs, ve = resolve_observations(samples, table)
        plans = [matching_plan(vs[i], ve[i], space, horizon)
                 for i in range(len(samples))]
    metrics = compute_metrics(plans, [s.gt_action_ids for s in samples])
    return EvalReport(planner=planner_name, split=split, space=space_name,
                      horizon=horizon, seed=seed, n=len(samples), metrics=metrics)


def eval_once(args, config: dict, seed: int) -> EvalReport:
    manifest = load_manifest(args.manifest)
    table = load_table(data_path(args.data, "observations"))
    actions_table = load_table(data_path(args.data, "actions"))
    space = action_space_from_manifest(manifest, actions_table, args.space)
    samples = read_split_samples(args.samples, args.split)
    if args.planner in ("random", "matching"):
        return baseline_report(args.planner, samples, space, table,
                               split=args.split, space_name=args.space, seed=seed)
    checkpoint = load_checkpoint(args.checkpoint)
    planner = checkpoint.build_planner()
    return evaluate_split(planner, samples, space, table, split=args.split,
                          space_name=args.space, seed=seed)


def cmd_eval(args: argparse.Namespace) -> int:
    config = effective_config(args, EVAL_DEFAULTS)
    if args.planner == "checkpoint" and not args.checkpoint:
        raise ValueError("eval needs --checkpoint unless --planner random|matching")
    report = eval_once(args, config, config["seed"])
    print(report.table())
    if args.out:
        write_json(args.out, report.to_doc())
        write_meta(args.out, "eval", config)
        print(f"wrote {args.out}")
    return 0


def cmd_sweep(args: argparse.Namespace) -> int:
    config = effective_config(args, {**TRAIN_DEFAULTS, **EVAL_DEFAULTS})
    seeds = [int(s) for s in args.seeds.split(",") if s != ""]

    def run(seed: int) -> EvalReport:
        if args.planner in ("random", "matching"):
            return eval_once(args, config, seed)
        result, _, _ = train_once(args, {k: config[k] for k in TRAIN_DEFAULTS},
                                  seed=seed)
        manifest = load_manifest(args.manifest)
        table = load_table(data_path(args.data, "observations"))
        actions_table = load_table(data_path(args.data, "actions"))
        space = action_space_from_manifest(manifest, actions_table, args.space)
        samples = read_split_samples(args.samples, args.split)
        planner = result.checkpoint.build_planner()
        return evaluate_split(planner, samples, space, table, split=args.split,
                              space_name=args.space, seed=seed)

    sweep = seed_sweep(run, seeds)
    print(f"{'seeds':<10}{'mean SR':>9}{'std SR':>9}{'mean Acc':>10}{'mean mIoU':>11}")
    print(f"{len(seeds):<10}{sweep.mean.sr * 100:>9.2f}{sweep.std.sr * 100:>9.2f}"
          f"{sweep.mean.acc * 100:>10.2f}{sweep.mean.miou * 100:>11.2f}")
    if args.out:
        write_json(args.out, sweep.to_doc())
        write_meta(args.out, "sweep", config)
        print(f"wrote {args.out}")
    return 0


def cmd_plan(args: argparse.Namespace) -> int:
    config = effective_config(args, EVAL_DEFAULTS)
    samples = read_split_samples(args.samples, args.split)
    if not 0 <= args.index < len(samples):
        raise ValueError(f"--index {args.index} outside 0..{len(samples) - 1}")
    sample = samples[args.index]
    manifest = load_manifest(args.manifest)
    table = load_table(data_path(args.data, "observations"))
    actions_table = load_table(data_path(args.data, "actions"))
    space = action_space_from_manifest(manifest, actions_table, args.space)
    if args.planner == "random":
        plan = random_plan(space, sample.horizon, config["seed"])
    elif args.planner == "matching":
        vs, ve = resolve_observations([sample], table)
        plan = matching_plan(vs[0], ve[0], space, sample.horizon)
    else:
        planner = load_checkpoint(args.checkpoint).build_planner()
        plan = plans_for_samples(planner, [sample], space, table,
                                 seed=config["seed"])[0]
    print(f"video {sample.video_id} event {sample.event_id} ({sample.split_tag})")
    for i, (got, want) in enumerate(zip(plan, sample.gt_action_ids), start=1):
        mark = "=" if got == want else "!"
        print(f"  {i}. {got:<40}{mark} gt: {want}")
    return 0


LLM_DEFAULTS = {
    "seed": 0, "in_flight": 4, "max_attempts": 3, "backoff_base": 0.5,
    "backoff_cap": 8.0, "endpoint": "", "model": "", "api_key_env": "",
    "limit": 0,
}


def cmd_llm_eval(args: argparse.Namespace) -> int:
    config = effective_config(args, LLM_DEFAULTS)
    manifest = load_manifest(args.manifest)
    actions_table = load_table(data_path(args.data, "actions"))
    space = action_space_from_manifest(manifest, actions_table, args.space)
    samples = read_split_samples(args.samples, args.split)
    if config["limit"]:
        samples = samples[:config["limit"]]
    llm_samples = [
        LlmSample(sample_id=f"{s.video_id}:{s.start_key}", gt_action_ids=s.gt_action_ids)
        for s in samples
    ]
    if args.fixture:
        transport = MockTransport.from_fixture(args.fixture)
    else:
        if not config["endpoint"] or not config["model"]:
            raise ValueError("llm-eval needs --fixture or endpoint+model config")
        api_key = os.environ.get(config["api_key_env"]) if config["api_key_env"] else None
        transport = HttpChatTransport(config["endpoint"], config["model"], api_key)
    result = run_llm_eval(
        llm_samples, space, transport, split=args.split, space_name=args.space,
        seed=config["seed"], in_flight=config["in_flight"],
        max_attempts=config["max_attempts"], backoff_base=config["backoff_base"],
        backoff_cap=config["backoff_cap"], fixture_path=args.record,
    )
    print(result.report.table())
    print(f"failures: {len(result.failures)} of {result.report.n}")
    if args.out:
        write_json(args.out, result.report.to_doc())
        write_meta(args.out, "llm-eval", config)
        print(f"wrote {args.out}")
    return 0


def add_common(parser: argparse.ArgumentParser) -> None:
    parser.add_argument("--config", help="JSON config file")
    parser.add_argument("--set", action="append", default=[],
                        metavar="KEY=VALUE", help="override a config key")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="procplan",
        description="Open-event procedure planning over embedding tables",
    )
    sub = parser.add_subparsers(dest="subcommand", required=True)

    p = sub.add_parser("synth-data", help="generate a deterministic dataset directory")
    p.add_argument("--out", required=True)
    p.add_argument("--seed", type=int, default=None)
    add_common(p)
    p.set_defaults(func=cmd_synth_data)

    p = sub.add_parser("build-benchmark",
                       help="cluster, verify, refine, and split a dataset")
    p.add_argument("--data", required=True)
    p.add_argument("--out")
    add_common(p)
    p.set_defaults(func=cmd_build_benchmark)

    p = sub.add_parser("review-clusters",
                       help="interactively vote on candidate clusters")
    p.add_argument("--data", required=True)
    p.add_argument("--annotator", required=True)
    p.add_argument("--votes")
    add_common(p)
    p.set_defaults(func=cmd_review_clusters)

    p = sub.add_parser("curate", help="extract sliding-window planning samples")
    p.add_argument("--data", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--horizon", type=int, default=None)
    p.add_argument("--out")
    add_common(p)
    p.set_defaults(func=cmd_curate)

    p = sub.add_parser("train", help="train a planner on the train split")
    p.add_argument("--data", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--kind", choices=["mlp", "transformer", "diffusion"])
    p.add_argument("--out", required=True)
    p.add_argument("--log")
    add_common(p)
    p.set_defaults(func=cmd_train)

    p = sub.add_parser("eval", help="evaluate a checkpoint or baseline on a split")
    p.add_argument("--data", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--checkpoint")
    p.add_argument("--planner", default="checkpoint",
                   choices=["checkpoint", "random", "matching"])
    p.add_argument("--split", default="test_base",
                   choices=list(cur.SPLIT_NAMES))
    p.add_argument("--space", default="base", choices=["base", "novel", "all"])
    p.add_argument("--out")
    add_common(p)
    p.set_defaults(func=cmd_eval)

    p = sub.add_parser("sweep", help="repeat train+eval over seeds")
    p.add_argument("--data", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--seeds", required=True, help="comma-separated list")
    p.add_argument("--planner", default="checkpoint",
                   choices=["checkpoint", "random", "matching"])
    p.add_argument("--split", default="test_base", choices=list(cur.SPLIT_NAMES))
    p.add_argument("--space", default="base", choices=["base", "novel", "all"])
    p.add_argument("--out")
    add_common(p)
    p.set_defaults(func=cmd_sweep)

    p = sub.add_parser("plan", help="plan one sample and compare to ground truth")
    p.add_argument("--data", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--index", type=int, default=0)
    p.add_argument("--checkpoint")
    p.add_argument("--planner", default="checkpoint",
                   choices=["checkpoint", "random", "matching"])
    p.add_argument("--split", default="test_base", choices=list(cur.SPLIT_NAMES))
    p.add_argument("--space", default="base", choices=["base", "novel", "all"])
    add_common(p)
    p.set_defaults(func=cmd_plan)

    p = sub.add_parser("llm-eval", help="score a chat model on a split")
    p.add_argument("--data", required=True)
    p.add_argument("--manifest", required=True)
    p.add_argument("--samples", required=True)
    p.add_argument("--split", default="test_base", choices=list(cur.SPLIT_NAMES))
    p.add_argument("--space", default="base", choices=["base", "novel", "all"])
    p.add_argument("--fixture", help="replay responses from this fixture")
    p.add_argument("--record", help="write exchanges to this fixture")
    p.add_argument("--out")
    add_common(p)
    p.set_defaults(func=cmd_llm_eval)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        return args.func(args)
    except (ValueError, KeyError, RuntimeError, OSError, EOFError) as err:
        print(f"error: {err}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
