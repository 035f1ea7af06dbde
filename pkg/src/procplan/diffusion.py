"""Diffusion planner: denoise T step vectors conditioned on boundary observations.

The sample state is a (T, 2d) matrix. Row i holds the step-i text embedding in
the first d columns and a conditioning observation in the last d columns:
v_start in row 0, v_end in row T-1, zeros between. The forward process noises
only the text columns; observation columns are frozen conditions. The
denoiser is a small MLP over the flattened state plus a sinusoidal timestep
embedding and predicts the clean text rows directly (x0-prediction). Reverse
sampling runs the standard posterior update, adding no noise on the final
step, so a given seed always yields the same plan.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from numpy.typing import NDArray

from procplan import autodiff as ad
from procplan.autodiff import Var


@dataclass
class DiffusionSchedule:
    betas: NDArray[np.float64]

    def __post_init__(self):
        self.betas = np.asarray(self.betas, dtype=np.float64)
        if self.betas.ndim != 1 or self.betas.size < 1:
            raise ValueError("betas must be a non-empty 1-D array")
        if not np.all((self.betas > 0) & (self.betas < 1)):
            raise ValueError("betas must lie strictly inside (0, 1)")
        if not np.all(np.diff(self.betas) >= 0):
            raise ValueError("betas must be non-decreasing")
        alphas = 1.0 - self.betas
        # alpha_bar[0] = 1 is the k=0 no-noise convention.
        self.alpha_bar = np.concatenate([[1.0], np.cumprod(alphas)])
        if self.alpha_bar[-1] <= 0:
            raise ValueError("cumulative alpha product underflowed to zero")

    @property
    def steps(self) -> int:
        return self.betas.size

    @classmethod
    def linear(cls, steps: int = 200, beta_start: float = 1e-4,
               beta_end: float = 0.02) -> "DiffusionSchedule":
        return cls(betas=np.linspace(beta_start, beta_end, steps))

    def to_doc(self) -> dict:
        return {"betas": self.betas.tolist()}

    @classmethod
    def from_doc(cls, doc: dict) -> "DiffusionSchedule":
        return cls(betas=np.asarray(doc["betas"], dtype=np.float64))


def build_state(text_rows: NDArray[np.float64], v_start: NDArray[np.float64],
                v_end: NDArray[np.float64]) -> NDArray[np.float64]:
    """Assemble the (T, 2d) state from text rows and the two observations."""
    text_rows = np.asarray(text_rows, dtype=np.float64)
    horizon, dim = text_rows.shape
    if horizon < 2:
        raise ValueError(f"state needs at least 2 rows, got {horizon}")
    obs = np.zeros((horizon, dim))
    obs[0] = v_start
    obs[horizon - 1] = v_end
    return np.concatenate([text_rows, obs], axis=1)


def text_part(state: NDArray[np.float64]) -> NDArray[np.float64]:
    dim = state.shape[-1] // 2
    return state[..., :dim]


def obs_part(state: NDArray[np.float64]) -> NDArray[np.float64]:
    dim = state.shape[-1] // 2
    return state[..., dim:]


def q_sample(x0_state: NDArray[np.float64], k: int, schedule: DiffusionSchedule,
             noise: NDArray[np.float64]) -> NDArray[np.float64]:
    """Noise the text columns to step k; observation columns stay fixed."""
    if not 0 <= k <= schedule.steps:
        raise ValueError(f"step k={k} outside [0, {schedule.steps}]")
    x0_state = np.asarray(x0_state, dtype=np.float64)
    a_bar = schedule.alpha_bar[k]
    text = np.sqrt(a_bar) * text_part(x0_state) + np.sqrt(1.0 - a_bar) * noise
    return np.concatenate([text, obs_part(x0_state)], axis=-1)


def invert_q_sample(xk_state: NDArray[np.float64], k: int, schedule: DiffusionSchedule,
                    noise: NDArray[np.float64]) -> NDArray[np.float64]:
    """Recover x0's text rows from x_k and the exact noise used to produce it."""
    if not 1 <= k <= schedule.steps:
        raise ValueError(f"step k={k} outside [1, {schedule.steps}]")
    a_bar = schedule.alpha_bar[k]
    return (text_part(xk_state) - np.sqrt(1.0 - a_bar) * noise) / np.sqrt(a_bar)


def time_embedding(k: NDArray[np.float64] | float, dim: int = 16) -> NDArray[np.float64]:
    """Sinusoidal embedding of diffusion timesteps; shape (..., dim)."""
    k = np.atleast_1d(np.asarray(k, dtype=np.float64))
    half = dim // 2
    freqs = np.exp(-np.log(10000.0) * np.arange(half) / half)
    angles = k[..., None] * freqs
    return np.concatenate([np.sin(angles), np.cos(angles)], axis=-1)


class DiffusionPlanner:
    """x0-predicting MLP denoiser over the flattened state matrix."""

    kind = "diffusion"

    def __init__(self, dim: int, horizon: int, schedule: DiffusionSchedule | None = None,
                 hidden: int | None = None, time_dim: int = 16, seed: int = 0):
        if horizon < 2:
            raise ValueError(f"horizon must be >= 2, got {horizon}")
        self.dim = dim
        self.horizon = horizon
        self.schedule = schedule if schedule is not None else DiffusionSchedule.linear()
        self.hidden = hidden if hidden is not None else 4 * dim
        self.time_dim = time_dim
        rng = np.random.default_rng(seed)
        in_dim = horizon * 2 * dim + time_dim
        h = self.hidden
        out_dim = horizon * dim
        self.params: dict[str, NDArray[np.float64]] = {
            "layer0.w": rng.normal(0.0, 1.0 / np.sqrt(in_dim), size=(in_dim, h)),
            "layer0.b": np.zeros(h),
            "layer1.w": rng.normal(0.0, 1.0 / np.sqrt(h), size=(h, h)),
            "layer1.b": np.zeros(h),
            "out.w": rng.normal(0.0, 1.0 / np.sqrt(h), size=(h, out_dim)),
            "out.b": np.zeros(out_dim),
        }

    def hyperparams(self) -> dict:
        return {
            "dim": self.dim,
            "horizon": self.horizon,
            "hidden": self.hidden,
            "time_dim": self.time_dim,
        }

    def graph(self, p: dict[str, Var], states: NDArray[np.float64],
              ks: NDArray[np.float64]) -> Var:
        """Predicted clean text rows (B, T, d) for noised states at steps `ks`."""
        states = np.asarray(states, dtype=np.float64)
        batch = states.shape[0]
        flat = states.reshape(batch, self.horizon * 2 * self.dim)
        emb = time_embedding(np.asarray(ks, dtype=np.float64), self.time_dim)
        x = Var(np.concatenate([flat, emb], axis=1))
        x = ad.tanh(ad.affine(x, p["layer0.w"], p["layer0.b"]))
        x = ad.tanh(ad.affine(x, p["layer1.w"], p["layer1.b"]))
        out = ad.affine(x, p["out.w"], p["out.b"])
        return ad.reshape(out, (batch, self.horizon, self.dim))

    def denoise(self, states: NDArray[np.float64], ks) -> NDArray[np.float64]:
        p = {name: Var(value) for name, value in self.params.items()}
        return self.graph(p, states, np.atleast_1d(ks)).value

    def sample(self, v_start: NDArray[np.float64], v_end: NDArray[np.float64],
               rng_seed: int) -> NDArray[np.float64]:
        """Run the reverse process; returns (T, d) step vectors, deterministic per seed."""
        sched = self.schedule
        rng = np.random.default_rng(rng_seed)
        text = rng.standard_normal((self.horizon, self.dim))
        alphas = 1.0 - sched.betas
        for k in range(sched.steps, 0, -1):
            state = build_state(text, v_start, v_end)
            x0_pred = self.denoise(state[None], np.array([k], dtype=np.float64))[0]
            a_bar_k = sched.alpha_bar[k]
            a_bar_prev = sched.alpha_bar[k - 1]
            beta_k = sched.betas[k - 1]
            coef_x0 = np.sqrt(a_bar_prev) * beta_k / (1.0 - a_bar_k)
            coef_xk = np.sqrt(alphas[k - 1]) * (1.0 - a_bar_prev) / (1.0 - a_bar_k)
            mean = coef_x0 * x0_pred + coef_xk * text
            if k > 1:
                var = (1.0 - a_bar_prev) / (1.0 - a_bar_k) * beta_k
                text = mean + np.sqrt(var) * rng.standard_normal((self.horizon, self.dim))
            else:
                text = mean
        return text

    def step_vectors(self, v_start: NDArray[np.float64], v_end: NDArray[np.float64],
                     rng_seed: int = 0) -> NDArray[np.float64]:
        return self.sample(v_start, v_end, rng_seed)

    def sample_batch(self, v_starts: NDArray[np.float64], v_ends: NDArray[np.float64],
                     seeds) -> NDArray[np.float64]:
        """Reverse process over a batch; sample i uses its own rng from seeds[i],
        so results do not depend on how samples are batched."""
        v_starts = np.asarray(v_starts, dtype=np.float64)
        v_ends = np.asarray(v_ends, dtype=np.float64)
        batch = v_starts.shape[0]
        if len(seeds) != batch:
            raise ValueError(f"need one seed per sample, got {len(seeds)} for {batch}")
        sched = self.schedule
        rngs = [np.random.default_rng(s) for s in seeds]
        text = np.stack([r.standard_normal((self.horizon, self.dim)) for r in rngs])
        obs = np.zeros((batch, self.horizon, self.dim))
        obs[:, 0] = v_starts
        obs[:, self.horizon - 1] = v_ends
        alphas = 1.0 - sched.betas
        for k in range(sched.steps, 0, -1):
            states = np.concatenate([text, obs], axis=2)
            x0_pred = self.denoise(states, np.full(batch, float(k)))
            a_bar_k = sched.alpha_bar[k]
            a_bar_prev = sched.alpha_bar[k - 1]
            beta_k = sched.betas[k - 1]
            coef_x0 = np.sqrt(a_bar_prev) * beta_k / (1.0 - a_bar_k)
            coef_xk = np.sqrt(alphas[k - 1]) * (1.0 - a_bar_prev) / (1.0 - a_bar_k)
            mean = coef_x0 * x0_pred + coef_xk * text
            if k > 1:
                var = (1.0 - a_bar_prev) / (1.0 - a_bar_k) * beta_k
                noise = np.stack([r.standard_normal((self.horizon, self.dim)) for r in rngs])
                text = mean + np.sqrt(var) * noise
            else:
                text = mean
        return text
