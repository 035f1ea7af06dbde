"""Planner zoo: random, matching, MLP, and transformer planners plus decoding.

Every planner maps a pair of boundary observations (v_start, v_end) to T step
vectors in the text-embedding space; `decode_plan` turns step vectors into
action ids by per-step cosine argmax against an ActionSpace. Swapping the
decode space is how base-trained planners are evaluated on novel actions; no
planner ever retrains for that.

Trainable planners keep parameters in an ordered {name: array} dict and
expose `graph` for the autodiff engine, so training and inference share one
forward implementation.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from procplan import autodiff as ad
from procplan.autodiff import Var
from procplan.embeddings import EmbeddingTable, cosine_matrix

ACTION_KEY_PREFIX = "action/"


def action_key(action_id: str) -> str:
    return f"{ACTION_KEY_PREFIX}{action_id}"


@dataclass
class ActionSpace:
    action_ids: list[str]
    text_vectors: NDArray[np.float64]

    def __post_init__(self):
        self.text_vectors = np.asarray(self.text_vectors, dtype=np.float64)
        if len(self.action_ids) != len(set(self.action_ids)):
            raise ValueError("action ids must be unique")
        if self.text_vectors.ndim != 2 or self.text_vectors.shape[0] != len(self.action_ids):
            raise ValueError(
                f"need one text vector per action, got {self.text_vectors.shape} "
                f"for {len(self.action_ids)} ids"
            )
        if not np.isfinite(self.text_vectors).all():
            raise ValueError("text vectors must be finite")

    @property
    def size(self) -> int:
        return len(self.action_ids)

    @property
    def dim(self) -> int:
        return self.text_vectors.shape[1]

    def index_of(self, action_id: str) -> int:
        return self.action_ids.index(action_id)

    @classmethod
    def from_table(cls, table: EmbeddingTable, action_ids: list[str]) -> "ActionSpace":
        vectors = np.stack([table.get(action_key(a)) for a in action_ids])
        return cls(action_ids=list(action_ids), text_vectors=vectors)


Plan = list[str]


def random_plan(space: ActionSpace, horizon: int, rng_seed: int) -> Plan:
    """T iid uniform draws over the action ids; deterministic per seed."""
    if space.size < 1:
        raise ValueError("action space is empty")
    rng = np.random.default_rng(rng_seed)
    picks = rng.integers(space.size, size=horizon)
    return [space.action_ids[int(j)] for j in picks]


def matching_plan(v_start: NDArray[np.float64], v_end: NDArray[np.float64],
                  space: ActionSpace, horizon: int) -> Plan:
    """Training-free baseline from per-step similarity ranking.

    Step 1 is the action most similar to v_start and step T the one most
    similar to v_end. Middle slot i holds the action achieving the i-th
    largest similarity against the mean of the two observations, so the
    slots run in descending similarity; tied values collapse to the lowest
    action index. When the space is smaller than T-2 the ranking repeats
    cyclically.
    """
    if horizon < 2:
        raise ValueError(f"horizon must be >= 2, got {horizon}")
    v_start = np.asarray(v_start, dtype=np.float64).reshape(1, -1)
    v_end = np.asarray(v_end, dtype=np.float64).reshape(1, -1)
    first = int(np.argmax(cosine_matrix(v_start, space.text_vectors)[0]))
    last = int(np.argmax(cosine_matrix(v_end, space.text_vectors)[0]))
    middle_count = horizon - 2
    middle: list[int] = []
    if middle_count:
        pooled = (v_start + v_end) / 2.0
        sims = cosine_matrix(pooled, space.text_vectors)[0]
        ranking = sorted(range(space.size), key=lambda j: (-sims[j], j))
        lowest_for_value: dict[float, int] = {}
        for j in ranking:
            lowest_for_value.setdefault(float(sims[j]), j)
        middle = [lowest_for_value[float(sims[ranking[i % space.size]])]
                  for i in range(middle_count)]
    picks = [first] + middle + [last]
    return [space.action_ids[j] for j in picks]


def decode_plan(step_vectors: NDArray[np.float64], space: ActionSpace) -> Plan:
    """Per-step argmax of cosine similarity; ties break to the lowest index."""
    out = np.asarray(step_vectors, dtype=np.float64)
    if out.ndim != 2 or out.shape[1] != space.dim:
        raise ValueError(f"expected (T, {space.dim}) step vectors, got {out.shape}")
    if not np.isfinite(out).all():
        raise ValueError("step vectors must be finite")
    sims = cosine_matrix(out, space.text_vectors)
    return [space.action_ids[int(j)] for j in np.argmax(sims, axis=1)]


def decode_plans(step_vectors: NDArray[np.float64], space: ActionSpace) -> list[Plan]:
    return [decode_plan(out, space) for out in np.asarray(step_vectors, dtype=np.float64)]


def _glorot(rng: np.random.Generator, fan_in: int, fan_out: int) -> NDArray[np.float64]:
    return rng.normal(0.0, 1.0 / np.sqrt(fan_in), size=(fan_in, fan_out))


def _as_batch(v: NDArray[np.float64]) -> tuple[NDArray[np.float64], bool]:
    v = np.asarray(v, dtype=np.float64)
    if v.ndim == 1:
        return v[None, :], True
    return v, False


class MlpPlanner:
    """Three affine trunk layers with tanh, then one linear head per step."""

    kind = "mlp"

    def __init__(self, dim: int, horizon: int, hidden: int | None = None, seed: int = 0):
        if horizon < 2:
            raise ValueError(f"horizon must be >= 2, got {horizon}")
        self.dim = dim
        self.horizon = horizon
        self.hidden = hidden if hidden is not None else 2 * dim
        rng = np.random.default_rng(seed)
        h = self.hidden
        sizes = [(2 * dim, h), (h, h), (h, h)]
        self.params: dict[str, NDArray[np.float64]] = {}
        for i, (fan_in, fan_out) in enumerate(sizes):
            self.params[f"trunk{i}.w"] = _glorot(rng, fan_in, fan_out)
            self.params[f"trunk{i}.b"] = np.zeros(fan_out)
        for t in range(horizon):
            self.params[f"head{t}.w"] = _glorot(rng, h, dim)
            self.params[f"head{t}.b"] = np.zeros(dim)

    def hyperparams(self) -> dict:
        return {"dim": self.dim, "horizon": self.horizon, "hidden": self.hidden}

    def graph(self, p: dict[str, Var], v_start: NDArray[np.float64],
              v_end: NDArray[np.float64]) -> Var:
        """Step vectors (B, T, d) as an autodiff graph over parameters `p`."""
        x = Var(np.concatenate([v_start, v_end], axis=1))
        for i in range(3):
            x = ad.tanh(ad.affine(x, p[f"trunk{i}.w"], p[f"trunk{i}.b"]))
        batch = v_start.shape[0]
        heads = [
            ad.reshape(ad.affine(x, p[f"head{t}.w"], p[f"head{t}.b"]), (batch, 1, self.dim))
            for t in range(self.horizon)
        ]
        return ad.concatenate(heads, axis=1)

    def step_vectors(self, v_start: NDArray[np.float64],
                     v_end: NDArray[np.float64]) -> NDArray[np.float64]:
        vs, single = _as_batch(v_start)
        ve, _ = _as_batch(v_end)
        p = {name: Var(value) for name, value in self.params.items()}
        out = self.graph(p, vs, ve).value
        return out[0] if single else out


class TransformerPlanner:
    """Pre-norm encoder over [v_start, T query tokens, v_end] with learned positions."""

    kind = "transformer"

    def __init__(self, dim: int, horizon: int, width: int | None = None,
                 n_blocks: int = 2, n_heads: int = 4, ffn_mult: int = 4, seed: int = 0):
        if horizon < 2:
            raise ValueError(f"horizon must be >= 2, got {horizon}")
        if n_blocks < 1:
            raise ValueError(f"need at least one block, got {n_blocks}")
        self.dim = dim
        self.horizon = horizon
        self.width = width if width is not None else dim
        self.n_blocks = n_blocks
        self.n_heads = n_heads
        self.ffn_mult = ffn_mult
        if self.width % n_heads != 0:
            raise ValueError(f"width {self.width} not divisible by {n_heads} heads")
        rng = np.random.default_rng(seed)
        w = self.width
        p: dict[str, NDArray[np.float64]] = {}
        p["in_proj.w"] = _glorot(rng, dim, w)
        p["in_proj.b"] = np.zeros(w)
        p["queries"] = rng.normal(0.0, 0.02, size=(horizon, w))
        p["pos"] = rng.normal(0.0, 0.02, size=(horizon + 2, w))
        for e in range(n_blocks):
            for ln in ("ln1", "ln2"):
                p[f"block{e}.{ln}.g"] = np.ones(w)
                p[f"block{e}.{ln}.b"] = np.zeros(w)
            for name in ("wq", "wk", "wv", "wo"):
                p[f"block{e}.attn.{name}"] = _glorot(rng, w, w)
            for name in ("bq", "bk", "bv", "bo"):
                p[f"block{e}.attn.{name}"] = np.zeros(w)
            p[f"block{e}.ffn.w1"] = _glorot(rng, w, ffn_mult * w)
            p[f"block{e}.ffn.b1"] = np.zeros(ffn_mult * w)
            p[f"block{e}.ffn.w2"] = _glorot(rng, ffn_mult * w, w)
            p[f"block{e}.ffn.b2"] = np.zeros(w)
        p["ln_f.g"] = np.ones(w)
        p["ln_f.b"] = np.zeros(w)
        p["out_proj.w"] = _glorot(rng, w, dim)
        p["out_proj.b"] = np.zeros(dim)
        self.params = p

    def hyperparams(self) -> dict:
        return {
            "dim": self.dim,
            "horizon": self.horizon,
            "width": self.width,
            "n_blocks": self.n_blocks,
            "n_heads": self.n_heads,
            "ffn_mult": self.ffn_mult,
        }

    def _attention(self, p: dict[str, Var], x: Var, e: int, batch: int, seq: int) -> Var:
        w, heads = self.width, self.n_heads
        dh = w // heads
        q = ad.affine(x, p[f"block{e}.attn.wq"], p[f"block{e}.attn.bq"])
        k = ad.affine(x, p[f"block{e}.attn.wk"], p[f"block{e}.attn.bk"])
        v = ad.affine(x, p[f"block{e}.attn.wv"], p[f"block{e}.attn.bv"])

        def split_heads(t: Var) -> Var:
            return ad.transpose(ad.reshape(t, (batch, seq, heads, dh)), (0, 2, 1, 3))

        q, k, v = split_heads(q), split_heads(k), split_heads(v)
        scores = ad.mul(ad.matmul(q, ad.transpose(k, (0, 1, 3, 2))), 1.0 / np.sqrt(dh))
        attn = ad.matmul(ad.softmax(scores, axis=-1), v)
        merged = ad.reshape(ad.transpose(attn, (0, 2, 1, 3)), (batch, seq, w))
        return ad.affine(merged, p[f"block{e}.attn.wo"], p[f"block{e}.attn.bo"])

    def graph(self, p: dict[str, Var], v_start: NDArray[np.float64],
              v_end: NDArray[np.float64]) -> Var:
        """Step vectors (B, T, d) as an autodiff graph over parameters `p`."""
        batch = v_start.shape[0]
        seq = self.horizon + 2
        obs = Var(np.stack([v_start, v_end], axis=1))
        proj = ad.affine(obs, p["in_proj.w"], p["in_proj.b"])
        queries = ad.reshape(p["queries"], (1, self.horizon, self.width))
        queries = ad.mul(queries, Var(np.ones((batch, 1, 1))))
        x = ad.concatenate([proj[:, 0:1, :], queries, proj[:, 1:2, :]], axis=1)
        x = ad.add(x, ad.reshape(p["pos"], (1, seq, self.width)))
        for e in range(self.n_blocks):
            normed = ad.layer_norm(x, p[f"block{e}.ln1.g"], p[f"block{e}.ln1.b"])
            x = ad.add(x, self._attention(p, normed, e, batch, seq))
            normed = ad.layer_norm(x, p[f"block{e}.ln2.g"], p[f"block{e}.ln2.b"])
            h = ad.tanh(ad.affine(normed, p[f"block{e}.ffn.w1"], p[f"block{e}.ffn.b1"]))
            x = ad.add(x, ad.affine(h, p[f"block{e}.ffn.w2"], p[f"block{e}.ffn.b2"]))
        x = ad.layer_norm(x, p["ln_f.g"], p["ln_f.b"])
        steps = x[:, 1:self.horizon + 1, :]
        return ad.affine(steps, p["out_proj.w"], p["out_proj.b"])

    def step_vectors(self, v_start: NDArray[np.float64],
                     v_end: NDArray[np.float64]) -> NDArray[np.float64]:
        vs, single = _as_batch(v_start)
        ve, _ = _as_batch(v_end)
        p = {name: Var(value) for name, value in self.params.items()}
        out = self.graph(p, vs, ve).value
        return out[0] if single else out
