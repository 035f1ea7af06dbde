"""Plan-quality metrics and the split-aware evaluation protocol.

Three metrics per sample set: SR (fraction of exactly matching sequences),
Acc (mean per-sample fraction of positions that match), and mIoU (mean
per-sample IoU between the sets of predicted and ground-truth ids, so
repeated actions collapse). SR and Acc are accumulated as exact rationals
and converted to float once; mIoU is float64 in sample order.

Evaluation always decodes under the action space it is given: base test
samples under the base space, novel test samples under the novel space,
never the union. Swapping the space never changes planner step vectors,
only their decoding.
"""

from __future__ import annotations

from dataclasses import dataclass
from fractions import Fraction
from typing import Callable, Sequence

import numpy as np

from procplan.curation import PlanSample
from procplan.embeddings import EmbeddingTable
from procplan.planners import ActionSpace, Plan, decode_plan

KindPlanner = object


@dataclass(frozen=True)
class Metrics:
    sr: float
    acc: float
    miou: float


def compute_metrics(preds: Sequence[Sequence[str]], gts: Sequence[Sequence[str]]) -> Metrics:
    """Aggregate SR, Acc, and mIoU over aligned prediction/ground-truth pairs."""
    if len(preds) != len(gts):
        raise ValueError(f"got {len(preds)} predictions for {len(gts)} ground truths")
    n = len(preds)
    if n == 0:
        return Metrics(sr=0.0, acc=0.0, miou=0.0)
    exact = 0
    acc_sum = Fraction(0)
    ious: list[float] = []
    for i, (pred, gt) in enumerate(zip(preds, gts)):
        if len(pred) != len(gt):
            raise ValueError(
                f"sample {i}: prediction length {len(pred)} != ground truth length {len(gt)}"
            )
        horizon = len(gt)
        hits = sum(p == g for p, g in zip(pred, gt))
        if hits == horizon:
            exact += 1
        acc_sum += Fraction(hits, horizon)
        pred_set, gt_set = set(pred), set(gt)
        ious.append(len(pred_set & gt_set) / len(pred_set | gt_set))
    return Metrics(
        sr=float(Fraction(exact, n)),
        acc=float(acc_sum / n),
        miou=float(np.mean(np.asarray(ious, dtype=np.float64))),
    )


@dataclass
class EvalReport:
    planner: str
    split: str
    space: str
    horizon: int
    seed: int
    n: int
    metrics: Metrics

    def to_doc(self) -> dict:
        return {
            "planner": self.planner,
            "split": self.split,
            "space": self.space,
            "T": self.horizon,
            "seed": self.seed,
            "n": self.n,
            "sr": self.metrics.sr,
            "acc": self.metrics.acc,
            "miou": self.metrics.miou,
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "EvalReport":
        return cls(
            planner=doc["planner"],
            split=doc["split"],
            space=doc["space"],
            horizon=doc["T"],
            seed=doc["seed"],
            n=doc["n"],
            metrics=Metrics(sr=doc["sr"], acc=doc["acc"], miou=doc["miou"]),
        )

    def table(self) -> str:
        """Render like the reference tables: percentages with two decimals."""
        m = self.metrics
        header = f"{'planner':<14}{'split':<12}{'space':<8}{'T':>3}{'n':>7}" \
                 f"{'SR':>9}{'Acc':>9}{'mIoU':>9}"
        row = f"{self.planner:<14}{self.split:<12}{self.space:<8}{self.horizon:>3}" \
              f"{self.n:>7}{m.sr * 100:>9.2f}{m.acc * 100:>9.2f}{m.miou * 100:>9.2f}"
        return header + "\n" + row


def action_space_from_manifest(doc: dict, table: EmbeddingTable,
                               which: str) -> ActionSpace:
    """Base, novel, or combined action space from a benchmark manifest.

    Action identity is the refined label; ids are sorted for a stable order.
    """
    split = doc["split"]
    if which == "base":
        chosen = set(split["base_event_ids"])
    elif which == "novel":
        chosen = set(split["novel_event_ids"])
    elif which == "all":
        chosen = set(split["base_event_ids"]) | set(split["novel_event_ids"])
    else:
        raise ValueError(f"unknown space {which!r}, expected base, novel, or all")
    labels = sorted({
        a["refined_label"]
        for event in doc["events"] if event["id"] in chosen
        for a in event["actions"]
    })
    if not labels:
        raise ValueError(f"no actions found for the {which} space")
    return ActionSpace.from_table(table, labels)


def resolve_observations(samples: Sequence[PlanSample],
                         table: EmbeddingTable) -> tuple[np.ndarray, np.ndarray]:
    """Stack (v_start, v_end) for every sample; unknown keys raise by name."""
    starts, ends = [], []
    for sample in samples:
        for key, sink in ((sample.start_key, starts), (sample.end_key, ends)):
            if key not in table:
                raise KeyError(f"embedding table is missing observation key {key!r}")
            sink.append(table.get(key))
    return np.stack(starts), np.stack(ends)


def plans_for_samples(planner, samples: Sequence[PlanSample], space: ActionSpace,
                      table: EmbeddingTable, seed: int = 0) -> list[Plan]:
    """Run a planner over samples and decode under the given space.

    Diffusion planners sample per-sample with seed `seed + index`, fixed
    regardless of batch composition; other planners run batched forwards.
    """
    if not samples:
        return []
    vs, ve = resolve_observations(samples, table)
    if vs.shape[1] != space.dim:
        raise ValueError(
            f"observation dim {vs.shape[1]} does not match space dim {space.dim}"
        )
    kind = getattr(planner, "kind", None)
    if kind == "diffusion":
        outs = planner.sample_batch(vs, ve, seeds=[seed + i for i in range(len(samples))])
        return [decode_plan(out, space) for out in outs]
    outs = planner.step_vectors(vs, ve)
    return [decode_plan(out, space) for out in outs]


def evaluate_split(planner, samples: Sequence[PlanSample], space: ActionSpace,
                   table: EmbeddingTable, *, split: str, space_name: str,
                   seed: int = 0, planner_name: str | None = None) -> EvalReport:
    """Plan every sample, decode under `space`, and aggregate the metrics."""
    horizons = {s.horizon for s in samples}
    if len(horizons) > 1:
        raise ValueError(f"samples mix horizons {sorted(horizons)}")
    horizon = horizons.pop() if horizons else 0
    plans = plans_for_samples(planner, samples, space, table, seed=seed)
    metrics = compute_metrics(plans, [s.gt_action_ids for s in samples])
    return EvalReport(
        planner=planner_name or getattr(planner, "kind", type(planner).__name__),
        split=split,
        space=space_name,
        horizon=horizon,
        seed=seed,
        n=len(samples),
        metrics=metrics,
    )


@dataclass
class SweepReport:
    runs: list[EvalReport]
    mean: Metrics
    std: Metrics

    def to_doc(self) -> dict:
        return {
            "mean": {"sr": self.mean.sr, "acc": self.mean.acc, "miou": self.mean.miou},
            "std": {"sr": self.std.sr, "acc": self.std.acc, "miou": self.std.miou},
            "runs": [r.to_doc() for r in self.runs],
        }


def seed_sweep(run: Callable[[int], EvalReport], seeds: Sequence[int]) -> SweepReport:
    """Repeat a full run per seed and report population mean/std per metric."""
    if len(seeds) < 2:
        raise ValueError(f"a sweep needs at least 2 seeds, got {len(seeds)}")
    runs = [run(seed) for seed in seeds]
    values = {
        name: np.array([getattr(r.metrics, name) for r in runs], dtype=np.float64)
        for name in ("sr", "acc", "miou")
    }
    mean = Metrics(**{k: float(v.mean()) for k, v in values.items()})
    std = Metrics(**{k: float(v.std(ddof=0)) for k, v in values.items()})
    return SweepReport(runs=runs, mean=mean, std=std)
