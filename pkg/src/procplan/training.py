"""Loss, backprop, Adam, the training loop, and checkpoint persistence.

The per-sample loss is a weighted sum of two parts over the T planned steps:
cross entropy between the row-softmax of the cosine similarity matrix and the
one-hot ground truth (natural log, no temperature on the cosine logits), and
the per-step mean squared error between planned vectors and the ground-truth
text embeddings. Batch loss is the mean over samples.

Training runs seeded shuffled minibatches, evaluates SR on the validation
split after every epoch, and keeps the parameters of the best validation SR
(ties go to the earliest epoch). Diffusion planners train by denoising: each
sample draws a uniform timestep and noise, and the loss applies to the
denoiser's clean-state prediction.

Checkpoints are a little-endian u32 header length, a JSON header (kind,
hyperparameters, config, epoch, metrics, parameter manifest, RNG state,
schedule), and all parameters as float64 little-endian in manifest order.
Nothing time-dependent is stored, so equal-seed runs write identical bytes.
"""

from __future__ import annotations

import copy
import json
import struct
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
from numpy.typing import NDArray

from procplan import autodiff as ad
from procplan.autodiff import Var
from procplan.curation import PlanSample
from procplan.diffusion import DiffusionPlanner, DiffusionSchedule
from procplan.embeddings import EmbeddingTable
from procplan.evaluation import Metrics, compute_metrics, resolve_observations
from procplan.ioutil import atomic_write_bytes, atomic_write_text, stable_json
from procplan.planners import ActionSpace, MlpPlanner, TransformerPlanner, decode_plan

CHECKPOINT_VERSION = 1
PLANNER_KINDS = ("mlp", "transformer", "diffusion")


class NonFiniteGradientError(RuntimeError):
    pass


class TrainingDivergedError(RuntimeError):
    pass


@dataclass
class TrainConfig:
    theta1: float = 1.0
    theta2: float = 0.2
    lr: float | None = None
    epochs: int = 200
    batch_size: int = 64
    seed: int = 0
    planner_kind: str = "mlp"
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    planner_options: dict = field(default_factory=dict)

    def __post_init__(self):
        if self.theta1 < 0 or self.theta2 < 0:
            raise ValueError("loss weights must be non-negative")
        if self.theta1 == 0 and self.theta2 == 0:
            raise ValueError("loss weights cannot both be zero")
        if self.planner_kind not in PLANNER_KINDS:
            raise ValueError(f"unknown planner kind {self.planner_kind!r}")
        if self.lr is None:
            self.lr = 5e-4 if self.planner_kind == "diffusion" else 1e-4
        if self.lr <= 0:
            raise ValueError(f"lr must be positive, got {self.lr}")
        if self.epochs < 0:
            raise ValueError(f"epochs must be >= 0, got {self.epochs}")
        if self.batch_size < 1:
            raise ValueError(f"batch_size must be >= 1, got {self.batch_size}")

    def to_doc(self) -> dict:
        return {
            "theta1": self.theta1,
            "theta2": self.theta2,
            "lr": self.lr,
            "epochs": self.epochs,
            "batch_size": self.batch_size,
            "seed": self.seed,
            "planner_kind": self.planner_kind,
            "adam_beta1": self.adam_beta1,
            "adam_beta2": self.adam_beta2,
            "adam_eps": self.adam_eps,
            "planner_options": dict(self.planner_options),
        }

    @classmethod
    def from_doc(cls, doc: dict) -> "TrainConfig":
        return cls(**doc)


def make_planner(kind: str, dim: int, horizon: int, seed: int = 0, **options):
    if kind == "mlp":
        return MlpPlanner(dim=dim, horizon=horizon, seed=seed, **options)
    if kind == "transformer":
        return TransformerPlanner(dim=dim, horizon=horizon, seed=seed, **options)
    if kind == "diffusion":
        schedule = options.pop("schedule", None)
        if isinstance(schedule, dict):
            schedule = DiffusionSchedule.from_doc(schedule)
        return DiffusionPlanner(dim=dim, horizon=horizon, schedule=schedule,
                                seed=seed, **options)
    raise ValueError(f"unknown planner kind {kind!r}")


def one_hot_targets(gt_idx: NDArray[np.int64], n_actions: int) -> NDArray[np.float64]:
    """One-hot ground-truth matrix rows from action indices, shape (..., N)."""
    gt_idx = np.asarray(gt_idx)
    if gt_idx.min() < 0 or gt_idx.max() >= n_actions:
        raise ValueError(f"action index outside [0, {n_actions})")
    out = np.zeros(gt_idx.shape + (n_actions,))
    np.put_along_axis(out, gt_idx[..., None], 1.0, axis=-1)
    return out


def similarity_logits(step_vectors: NDArray[np.float64],
                      space: ActionSpace) -> NDArray[np.float64]:
    """S[i, j] = cosine(x_i, t_j) for T step vectors against N text vectors."""
    from procplan.embeddings import cosine_matrix

    return cosine_matrix(np.asarray(step_vectors, dtype=np.float64), space.text_vectors)


def _check_one_hot(g: NDArray[np.float64]) -> None:
    ok = np.all(np.isin(g, (0.0, 1.0))) and np.all(g.sum(axis=-1) == 1.0)
    if not ok:
        raise ValueError("ground-truth rows must be one-hot")


def total_loss(sims: NDArray[np.float64], gt_matrix: NDArray[np.float64],
               step_vectors: NDArray[np.float64], targets: NDArray[np.float64],
               cfg: TrainConfig) -> float:
    """Single-sample loss: theta1 * sum CE(softmax(S_i), G_i) + theta2 * sum MSE_i."""
    sims = np.asarray(sims, dtype=np.float64)
    gt_matrix = np.asarray(gt_matrix, dtype=np.float64)
    _check_one_hot(gt_matrix)
    loss = 0.0
    if cfg.theta1 != 0.0:
        lse = np.logaddexp.reduce(sims, axis=-1)
        picked = (sims * gt_matrix).sum(axis=-1)
        loss += cfg.theta1 * float((lse - picked).sum())
    if cfg.theta2 != 0.0:
        x = np.asarray(step_vectors, dtype=np.float64)
        t = np.asarray(targets, dtype=np.float64)
        loss += cfg.theta2 * float(((x - t) ** 2).mean(axis=-1).sum())
    return loss


@dataclass
class TrainingSet:
    """Vectorized samples: boundary observations plus ground-truth indices."""

    v_start: NDArray[np.float64]
    v_end: NDArray[np.float64]
    gt_idx: NDArray[np.int64]

    def __post_init__(self):
        if not len(self.v_start) == len(self.v_end) == len(self.gt_idx):
            raise ValueError("observation and ground-truth counts differ")

    def __len__(self) -> int:
        return len(self.gt_idx)

    @property
    def horizon(self) -> int:
        return self.gt_idx.shape[1]


def prepare_training_set(samples: list[PlanSample], table: EmbeddingTable,
                         space: ActionSpace) -> TrainingSet:
    """Resolve observation keys and map ground-truth ids to space indices."""
    vs, ve = resolve_observations(samples, table)
    index = {a: i for i, a in enumerate(space.action_ids)}
    gt = np.empty((len(samples), samples[0].horizon), dtype=np.int64)
    for i, sample in enumerate(samples):
        for j, action_id in enumerate(sample.gt_action_ids):
            if action_id not in index:
                raise ValueError(
                    f"sample {sample.video_id!r} ground truth {action_id!r} "
                    f"is not in the action space"
                )
            gt[i, j] = index[action_id]
    return TrainingSet(v_start=vs, v_end=ve, gt_idx=gt)


@dataclass
class TrainBatch:
    v_start: NDArray[np.float64]
    v_end: NDArray[np.float64]
    gt_idx: NDArray[np.int64]
    # Diffusion only: noised states at per-sample steps ks.
    states: NDArray[np.float64] | None = None
    ks: NDArray[np.float64] | None = None


def make_diffusion_batch(base: TrainBatch, space: ActionSpace,
                         schedule: DiffusionSchedule,
                         rng: np.random.Generator) -> TrainBatch:
    """Noise each sample's clean state to a uniformly drawn timestep."""
    targets = space.text_vectors[base.gt_idx]
    batch, horizon, dim = targets.shape
    obs = np.zeros((batch, horizon, dim))
    obs[:, 0] = base.v_start
    obs[:, horizon - 1] = base.v_end
    ks = rng.integers(1, schedule.steps + 1, size=batch)
    noise = rng.standard_normal(targets.shape)
    a_bar = schedule.alpha_bar[ks][:, None, None]
    text = np.sqrt(a_bar) * targets + np.sqrt(1.0 - a_bar) * noise
    states = np.concatenate([text, obs], axis=2)
    return TrainBatch(v_start=base.v_start, v_end=base.v_end, gt_idx=base.gt_idx,
                      states=states, ks=ks.astype(np.float64))


def loss_graph(planner, params: dict[str, Var], batch: TrainBatch, space: ActionSpace,
               cfg: TrainConfig) -> Var:
    """Batch-mean loss as an autodiff graph over the planner parameters."""
    if planner.kind == "diffusion":
        x = planner.graph(params, batch.states, batch.ks)
    else:
        x = planner.graph(params, batch.v_start, batch.v_end)
    targets = space.text_vectors[batch.gt_idx]
    per_sample = None
    if cfg.theta1 != 0.0:
        xn = ad.l2_normalize(x, eps=1e-12)
        sq = (space.text_vectors ** 2).sum(axis=1, keepdims=True)
        tn = space.text_vectors / np.sqrt(sq + 1e-12)
        sims = ad.matmul(xn, Var(tn.T))
        g = one_hot_targets(batch.gt_idx, space.size)
        lse = ad.logsumexp(sims, axis=-1)
        picked = ad.vsum(ad.mul(sims, Var(g)), axis=-1)
        ce = ad.vsum(lse - picked, axis=1)
        per_sample = ad.mul(ce, cfg.theta1)
    if cfg.theta2 != 0.0:
        mse = ad.vsum(ad.vmean(ad.square(x - Var(targets)), axis=2), axis=1)
        weighted = ad.mul(mse, cfg.theta2)
        per_sample = weighted if per_sample is None else ad.add(per_sample, weighted)
    return ad.vmean(per_sample)


def backprop(planner, batch: TrainBatch, space: ActionSpace,
             cfg: TrainConfig) -> tuple[float, dict[str, NDArray[np.float64]]]:
    """Loss value and exact analytic gradients for every planner parameter."""
    params = {name: Var(value, name=name) for name, value in planner.params.items()}
    loss = loss_graph(planner, params, batch, space, cfg)
    value = float(loss.value)
    if not np.isfinite(value):
        raise NonFiniteGradientError(f"loss is not finite: {value}")
    loss.backward()
    grads = {}
    for name, var in params.items():
        if not np.isfinite(var.grad).all():
            raise NonFiniteGradientError(f"non-finite gradient in parameter {name!r}")
        grads[name] = var.grad
    return value, grads


@dataclass
class AdamState:
    m: dict[str, NDArray[np.float64]]
    v: dict[str, NDArray[np.float64]]
    step: int = 0


def adam_init(params: dict[str, NDArray[np.float64]]) -> AdamState:
    return AdamState(
        m={name: np.zeros_like(value) for name, value in params.items()},
        v={name: np.zeros_like(value) for name, value in params.items()},
        step=0,
    )


def adam_step(params: dict[str, NDArray[np.float64]],
              grads: dict[str, NDArray[np.float64]], state: AdamState,
              cfg: TrainConfig) -> tuple[dict[str, NDArray[np.float64]], AdamState]:
    """Bias-corrected Adam update; mutates params and state in place."""
    state.step += 1
    b1, b2, eps = cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps
    correction1 = 1.0 - b1 ** state.step
    correction2 = 1.0 - b2 ** state.step
    for name, g in grads.items():
        if g.shape != params[name].shape:
            raise ValueError(f"gradient shape mismatch for {name!r}")
        state.m[name] = b1 * state.m[name] + (1.0 - b1) * g
        state.v[name] = b2 * state.v[name] + (1.0 - b2) * g * g
        m_hat = state.m[name] / correction1
        v_hat = state.v[name] / correction2
        params[name] -= cfg.lr * m_hat / (np.sqrt(v_hat) + eps)
    return params, state


@dataclass
class Checkpoint:
    kind: str
    hyperparams: dict
    config: dict
    epoch: int
    metrics: dict
    params: dict[str, NDArray[np.float64]]
    rng_state: dict
    schedule: dict | None = None
    format_version: int = CHECKPOINT_VERSION

    def build_planner(self):
        options = dict(self.hyperparams)
        dim = options.pop("dim")
        horizon = options.pop("horizon")
        if self.kind == "diffusion" and self.schedule is not None:
            options["schedule"] = self.schedule
        planner = make_planner(self.kind, dim=dim, horizon=horizon, **options)
        expected = set(planner.params)
        if expected != set(self.params):
            raise ValueError("checkpoint parameters do not match the planner layout")
        planner.params = {name: value.copy() for name, value in self.params.items()}
        return planner


def save_checkpoint(ckpt: Checkpoint, path: str | Path) -> None:
    names = list(ckpt.params)
    header = {
        "format_version": ckpt.format_version,
        "kind": ckpt.kind,
        "hyperparams": ckpt.hyperparams,
        "config": ckpt.config,
        "epoch": ckpt.epoch,
        "metrics": ckpt.metrics,
        "params": [{"name": n, "shape": list(ckpt.params[n].shape)} for n in names],
        "rng_state": ckpt.rng_state,
        "schedule": ckpt.schedule,
    }
    header_bytes = stable_json(header).encode("utf-8")
    payload = b"".join(
        np.ascontiguousarray(ckpt.params[n], dtype="<f8").tobytes() for n in names
    )
    atomic_write_bytes(path, struct.pack("<I", len(header_bytes)) + header_bytes + payload)


def load_checkpoint(path: str | Path) -> Checkpoint:
    blob = Path(path).read_bytes()
    if len(blob) < 4:
        raise ValueError(f"checkpoint {path}: header section truncated")
    (header_len,) = struct.unpack_from("<I", blob, 0)
    if len(blob) < 4 + header_len:
        raise ValueError(f"checkpoint {path}: header section truncated")
    try:
        header = json.loads(blob[4:4 + header_len].decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as err:
        raise ValueError(f"checkpoint {path}: header section is not valid JSON") from err
    if header.get("format_version") != CHECKPOINT_VERSION:
        raise ValueError(
            f"checkpoint {path}: header section has unsupported format version "
            f"{header.get('format_version')}"
        )
    manifest = header["params"]
    counts = [int(np.prod(entry["shape"])) if entry["shape"] else 1 for entry in manifest]
    expected = sum(counts) * 8
    payload = blob[4 + header_len:]
    if len(payload) != expected:
        raise ValueError(
            f"checkpoint {path}: payload section has {len(payload)} bytes, "
            f"expected {expected}"
        )
    params = {}
    offset = 0
    for entry, count in zip(manifest, counts):
        flat = np.frombuffer(payload, dtype="<f8", count=count, offset=offset)
        params[entry["name"]] = np.array(flat, dtype=np.float64).reshape(entry["shape"])
        offset += count * 8
    return Checkpoint(
        kind=header["kind"],
        hyperparams=header["hyperparams"],
        config=header["config"],
        epoch=header["epoch"],
        metrics=header["metrics"],
        params=params,
        rng_state=header["rng_state"],
        schedule=header.get("schedule"),
        format_version=header["format_version"],
    )


@dataclass
class TrainResult:
    checkpoint: Checkpoint
    history: list[dict]

    def history_csv(self) -> str:
        lines = ["epoch,train_loss,val_sr,val_acc,val_miou"]
        for row in self.history:
            lines.append(
                f"{row['epoch']},{row['train_loss']},{row['val_sr']},"
                f"{row['val_acc']},{row['val_miou']}"
            )
        return "\n".join(lines) + "\n"

    def write_log(self, path: str | Path) -> None:
        atomic_write_text(path, self.history_csv())


def _validate_set(name: str, data: TrainingSet, space: ActionSpace) -> None:
    if len(data) == 0:
        raise ValueError(f"{name} set is empty")
    if data.v_start.shape[1] != space.dim:
        raise ValueError(
            f"{name} observations have dim {data.v_start.shape[1]}, space has {space.dim}"
        )


def _gt_ids(data: TrainingSet, space: ActionSpace) -> list[list[str]]:
    return [[space.action_ids[j] for j in row] for row in data.gt_idx]


def _val_metrics(planner, data: TrainingSet, space: ActionSpace, cfg: TrainConfig) -> Metrics:
    if planner.kind == "diffusion":
        outs = planner.sample_batch(data.v_start, data.v_end,
                                    seeds=[cfg.seed + i for i in range(len(data))])
    else:
        outs = planner.step_vectors(data.v_start, data.v_end)
    plans = [decode_plan(out, space) for out in outs]
    return compute_metrics(plans, _gt_ids(data, space))


def train(train_set: TrainingSet, val_set: TrainingSet, space: ActionSpace,
          cfg: TrainConfig, planner=None) -> TrainResult:
    """Train a planner and return the best-validation-SR checkpoint.

    The space must be the base action space only; novel actions never enter
    training. Deterministic for a given config and seed.
    """
    _validate_set("train", train_set, space)
    _validate_set("val", val_set, space)
    if planner is None:
        planner = make_planner(cfg.planner_kind, dim=space.dim, horizon=train_set.horizon,
                               seed=cfg.seed, **cfg.planner_options)
    if planner.kind != cfg.planner_kind:
        raise ValueError(f"planner kind {planner.kind!r} != config {cfg.planner_kind!r}")

    rng = np.random.default_rng(cfg.seed)
    adam = adam_init(planner.params)
    history: list[dict] = []
    best: dict | None = None

    def snapshot(epoch: int, metrics: Metrics, train_loss: float) -> dict:
        return {
            "epoch": epoch,
            "params": copy.deepcopy(planner.params),
            "metrics": {
                "train_loss": train_loss,
                "val_sr": metrics.sr,
                "val_acc": metrics.acc,
                "val_miou": metrics.miou,
            },
            "rng_state": copy.deepcopy(rng.bit_generator.state),
        }

    if cfg.epochs == 0:
        metrics = _val_metrics(planner, val_set, space, cfg)
        history.append({"epoch": 0, "train_loss": float("nan"), "val_sr": metrics.sr,
                        "val_acc": metrics.acc, "val_miou": metrics.miou})
        best = snapshot(0, metrics, float("nan"))

    n = len(train_set)
    for epoch in range(1, cfg.epochs + 1):
        perm = rng.permutation(n)
        loss_sum = 0.0
        for step, lo in enumerate(range(0, n, cfg.batch_size)):
            idx = perm[lo:lo + cfg.batch_size]
            batch = TrainBatch(v_start=train_set.v_start[idx], v_end=train_set.v_end[idx],
                               gt_idx=train_set.gt_idx[idx])
            if planner.kind == "diffusion":
                batch = make_diffusion_batch(batch, space, planner.schedule, rng)
            try:
                loss, grads = backprop(planner, batch, space, cfg)
            except NonFiniteGradientError as err:
                raise TrainingDivergedError(
                    f"training diverged at epoch {epoch}, step {step}: {err}"
                ) from err
            adam_step(planner.params, grads, adam, cfg)
            loss_sum += loss * len(idx)
        train_loss = loss_sum / n
        metrics = _val_metrics(planner, val_set, space, cfg)
        history.append({"epoch": epoch, "train_loss": train_loss, "val_sr": metrics.sr,
                        "val_acc": metrics.acc, "val_miou": metrics.miou})
        if best is None or metrics.sr > best["metrics"]["val_sr"]:
            best = snapshot(epoch, metrics, train_loss)

    checkpoint = Checkpoint(
        kind=planner.kind,
        hyperparams=planner.hyperparams(),
        config=cfg.to_doc(),
        epoch=best["epoch"],
        metrics=best["metrics"],
        params=best["params"],
        rng_state=best["rng_state"],
        schedule=planner.schedule.to_doc() if planner.kind == "diffusion" else None,
    )
    return TrainResult(checkpoint=checkpoint, history=history)
