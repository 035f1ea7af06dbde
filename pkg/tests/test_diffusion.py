"""Tests for the diffusion schedule, forward noising, and reverse sampling."""

from __future__ import annotations

import numpy as np
import pytest
from gradcheck import check_gradients

from procplan.autodiff import vsum
from procplan.diffusion import (
    DiffusionPlanner,
    DiffusionSchedule,
    build_state,
    invert_q_sample,
    obs_part,
    q_sample,
    text_part,
    time_embedding,
)


class TestSchedule:
    def test_linear_defaults(self):
        sched = DiffusionSchedule.linear()
        assert sched.steps == 200
        assert sched.betas[0] == pytest.approx(1e-4)
        assert sched.betas[-1] == pytest.approx(0.02)

    def test_alpha_bar_starts_at_one_and_decreases(self):
        sched = DiffusionSchedule.linear(steps=50)
        assert sched.alpha_bar[0] == 1.0
        assert np.all(np.diff(sched.alpha_bar) < 0)
        assert sched.alpha_bar[-1] > 0

    def test_rejects_bad_betas(self):
        with pytest.raises(ValueError):
            DiffusionSchedule(betas=np.array([0.5, 0.1]))
        with pytest.raises(ValueError):
            DiffusionSchedule(betas=np.array([0.0, 0.1]))
        with pytest.raises(ValueError):
            DiffusionSchedule(betas=np.array([0.5, 1.0]))
        with pytest.raises(ValueError):
            DiffusionSchedule(betas=np.array([]))

    def test_doc_round_trip(self):
        sched = DiffusionSchedule.linear(steps=10)
        back = DiffusionSchedule.from_doc(sched.to_doc())
        np.testing.assert_array_equal(back.betas, sched.betas)


class TestStateLayout:
    def test_observation_columns(self):
        text = np.arange(12, dtype=np.float64).reshape(4, 3)
        vs = np.array([1.0, 2.0, 3.0])
        ve = np.array([4.0, 5.0, 6.0])
        state = build_state(text, vs, ve)
        assert state.shape == (4, 6)
        np.testing.assert_array_equal(text_part(state), text)
        obs = obs_part(state)
        np.testing.assert_array_equal(obs[0], vs)
        np.testing.assert_array_equal(obs[3], ve)
        np.testing.assert_array_equal(obs[1:3], np.zeros((2, 3)))


class TestQSample:
    def test_k_zero_is_identity(self):
        sched = DiffusionSchedule.linear(steps=5)
        state = build_state(np.ones((3, 2)), np.ones(2), np.ones(2))
        noise = np.full((3, 2), 7.0)
        np.testing.assert_array_equal(q_sample(state, 0, sched, noise), state)

    def test_quarter_alpha_bar_closed_form(self):
        sched = DiffusionSchedule(betas=np.array([0.75]))
        assert sched.alpha_bar[1] == pytest.approx(0.25)
        state = build_state(np.ones((2, 2)), np.zeros(2), np.zeros(2))
        noised = q_sample(state, 1, sched, np.ones((2, 2)))
        want = 0.5 * 1.0 + np.sqrt(0.75) * 1.0
        assert want == pytest.approx(1.3660254, abs=1e-6)
        np.testing.assert_allclose(text_part(noised), np.full((2, 2), want), atol=1e-12)

    def test_observation_rows_frozen_for_every_k(self):
        sched = DiffusionSchedule.linear(steps=17)
        rng = np.random.default_rng(0)
        state = build_state(rng.normal(size=(4, 3)), rng.normal(size=3), rng.normal(size=3))
        for k in range(sched.steps + 1):
            noised = q_sample(state, k, sched, rng.normal(size=(4, 3)))
            np.testing.assert_array_equal(obs_part(noised), obs_part(state))

    def test_out_of_range_k(self):
        sched = DiffusionSchedule.linear(steps=5)
        state = build_state(np.ones((2, 2)), np.zeros(2), np.zeros(2))
        with pytest.raises(ValueError):
            q_sample(state, 6, sched, np.ones((2, 2)))
        with pytest.raises(ValueError):
            q_sample(state, -1, sched, np.ones((2, 2)))

    def test_inversion_recovers_x0(self):
        sched = DiffusionSchedule.linear(steps=30)
        rng = np.random.default_rng(1)
        text = rng.normal(size=(3, 5))
        state = build_state(text, rng.normal(size=5), rng.normal(size=5))
        for k in range(1, sched.steps + 1):
            noise = rng.normal(size=(3, 5))
            noised = q_sample(state, k, sched, noise)
            recovered = invert_q_sample(noised, k, sched, noise)
            np.testing.assert_allclose(recovered, text, atol=1e-9)


class TestTimeEmbedding:
    def test_shape_and_bounds(self):
        emb = time_embedding(np.array([0.0, 1.0, 199.0]), dim=16)
        assert emb.shape == (3, 16)
        assert np.all(np.abs(emb) <= 1.0)

    def test_distinct_steps_distinct_embeddings(self):
        emb = time_embedding(np.arange(200, dtype=np.float64), dim=16)
        assert len({tuple(row) for row in np.round(emb, 9)}) == 200


class TestDiffusionPlanner:
    def test_zero_denoiser_samples_exact_zeros(self):
        planner = DiffusionPlanner(dim=3, horizon=4,
                                   schedule=DiffusionSchedule.linear(steps=20), seed=0)
        for name in planner.params:
            planner.params[name] = np.zeros_like(planner.params[name])
        out = planner.sample(np.ones(3), np.ones(3), rng_seed=5)
        np.testing.assert_array_equal(out, np.zeros((4, 3)))

    def test_deterministic_per_seed(self):
        planner = DiffusionPlanner(dim=3, horizon=3,
                                   schedule=DiffusionSchedule.linear(steps=15), seed=1)
        vs, ve = np.ones(3), -np.ones(3)
        a = planner.sample(vs, ve, rng_seed=9)
        b = planner.sample(vs, ve, rng_seed=9)
        np.testing.assert_array_equal(a, b)
        c = planner.sample(vs, ve, rng_seed=10)
        assert not np.array_equal(a, c)

    def test_output_shape(self):
        planner = DiffusionPlanner(dim=5, horizon=3,
                                   schedule=DiffusionSchedule.linear(steps=10), seed=2)
        out = planner.sample(np.ones(5), np.zeros(5), rng_seed=0)
        assert out.shape == (3, 5)
        assert np.isfinite(out).all()

    def test_denoiser_gradients(self):
        planner = DiffusionPlanner(dim=3, horizon=3, hidden=8,
                                   schedule=DiffusionSchedule.linear(steps=10), seed=3)
        rng = np.random.default_rng(4)
        states = rng.normal(size=(2, 3, 6))
        ks = np.array([3.0, 7.0])

        def build(p):
            return vsum(planner.graph(p, states, ks))

        check_gradients(build, planner.params, rng, n_probes=50)

    def test_sample_batch_matches_single(self):
        planner = DiffusionPlanner(dim=3, horizon=3,
                                   schedule=DiffusionSchedule.linear(steps=12), seed=7)
        rng = np.random.default_rng(8)
        vs = rng.normal(size=(4, 3))
        ve = rng.normal(size=(4, 3))
        batched = planner.sample_batch(vs, ve, seeds=[10, 11, 12, 13])
        for i in range(4):
            single = planner.sample(vs[i], ve[i], rng_seed=10 + i)
            np.testing.assert_allclose(batched[i], single, atol=1e-9)

    def test_sample_batch_independent_of_composition(self):
        planner = DiffusionPlanner(dim=2, horizon=3,
                                   schedule=DiffusionSchedule.linear(steps=8), seed=9)
        rng = np.random.default_rng(10)
        vs = rng.normal(size=(3, 2))
        ve = rng.normal(size=(3, 2))
        full = planner.sample_batch(vs, ve, seeds=[1, 2, 3])
        solo = planner.sample_batch(vs[1:2], ve[1:2], seeds=[2])
        np.testing.assert_allclose(full[1], solo[0], atol=1e-9)

    def test_denoise_batches(self):
        planner = DiffusionPlanner(dim=2, horizon=3,
                                   schedule=DiffusionSchedule.linear(steps=10), seed=5)
        rng = np.random.default_rng(6)
        states = rng.normal(size=(4, 3, 4))
        ks = np.array([1.0, 2.0, 3.0, 4.0])
        batched = planner.denoise(states, ks)
        for i in range(4):
            single = planner.denoise(states[i:i + 1], ks[i:i + 1])[0]
            np.testing.assert_allclose(batched[i], single, atol=1e-12)
