import numpy as np
import pytest

from sparsebip.basis import decode_series, fit, uniform_basis
from sparsebip.filtering import (FilterError, ObservationFrame, ProcessNoise, filter_steps, infer,
                                 init_ensemble, mean_model, observe, predict, run_session,
                                 update)
from sparsebip.model import BasisSpace, EnsembleState, LatentModel
from sparsebip.pipeline import VariantConfig, train

from conftest import make_interaction
from oracles import kalman_update

NO_NOISE = ProcessNoise(velocity=0.0)


def state(members, basis, Q=None, R=1e-6, observed=(0,)):
    members = np.asarray(members, dtype=float)
    Q = np.zeros(members.shape[1]) if Q is None else Q
    return EnsembleState(members, Q, np.full(len(observed), R), basis, observed)


def single_center_basis(n_channels):
    return BasisSpace(tuple(np.array([0.5]) for _ in range(n_channels)), (0.5,) * n_channels)


@pytest.fixture(scope="module")
def trained(small_dataset):
    return train(small_dataset.demos, VariantConfig.named("group-ols"))


class TestInitEnsemble:
    def test_velocities_are_inverse_lengths(self):
        b = uniform_basis(2, 3)
        demos = [LatentModel(np.arange(6.0), b), LatentModel(np.ones(6), b)]
        s = init_ensemble(demos, [100, 200], NO_NOISE, 0.1, [0])
        assert s.velocity.tolist() == [0.01, 0.005]
        assert s.phase.tolist() == [0.0, 0.0]
        assert np.array_equal(s.weights[0], np.arange(6.0))

    def test_default_velocity_noise_uses_mean_length(self):
        b = uniform_basis(2, 2)
        demos = [LatentModel(np.zeros(4), b)] * 2
        s = init_ensemble(demos, [100, 300], ProcessNoise(), 0.1, [0])
        assert s.process_noise[1] == pytest.approx((0.1 / 200) ** 2, rel=1e-15)
        assert s.process_noise[0] == 0 and np.all(s.process_noise[2:] == 0)

    def test_identical_demos_give_zero_weight_gain(self):
        b = uniform_basis(2, 4)
        w = np.random.default_rng(0).standard_normal(8)
        s = init_ensemble([LatentModel(w, b)] * 5, [50] * 5, NO_NOISE, 0.01, [0])
        after = update(s, ObservationFrame.from_values([123.0]), np.random.default_rng(1))
        assert np.array_equal(after.members, s.members)

    def test_rejects_single_demo_and_mixed_bases(self):
        b1, b2 = uniform_basis(2, 2), uniform_basis(2, 3)
        with pytest.raises(ValueError):
            init_ensemble([LatentModel(np.zeros(4), b1)], [10], NO_NOISE, 0.1, [0])
        with pytest.raises(ValueError, match="basis"):
            init_ensemble([LatentModel(np.zeros(4), b1), LatentModel(np.zeros(6), b2)],
                          [10, 10], NO_NOISE, 0.1, [0])


class TestPredict:
    def test_constant_velocity_step(self):
        b = single_center_basis(1)
        s = predict(state([[0.5, 0.01, 2.0], [0.1, 0.02, 3.0]], b))
        np.testing.assert_allclose(s.members, [[0.51, 0.01, 2.0], [0.12, 0.02, 3.0]], rtol=0, atol=1e-15)

    def test_phase_holds_at_one(self):
        s = predict(state([[1.0, 0.05, 0.0], [0.98, 0.05, 0.0]], single_center_basis(1)))
        assert s.phase.tolist() == [1.0, 1.0]

    def test_velocity_variance_grows_by_q(self):
        sigma2 = 4e-6
        E = 100_000
        rng = np.random.default_rng(2)
        members = np.column_stack([np.full(E, 0.2), rng.uniform(0.004, 0.006, E), np.zeros(E)])
        s = state(members, single_center_basis(1), Q=np.array([0.0, sigma2, 0.0]))
        after = predict(s, np.random.default_rng(3))
        growth = after.velocity.var() - s.velocity.var()
        assert growth == pytest.approx(sigma2, rel=0.03)

    def test_velocity_stays_non_negative(self):
        members = np.column_stack([np.zeros(50), np.full(50, 1e-6), np.zeros(50)])
        s = state(members, single_center_basis(1), Q=np.array([0.0, 1.0, 0.0]))
        assert np.all(predict(s, np.random.default_rng(0)).velocity >= 0)


def gaussian_ensemble(mean, cov, E, seed):
    """Members frozen at phase 0.5 so that every basis row is known in closed form."""
    W = np.random.default_rng(seed).multivariate_normal(mean, cov, size=E)
    return np.column_stack([np.full(E, 0.5), np.zeros(E), W])


LINEAR_CASES = {
    # state dim: (basis, observed channels, prior mean, prior covariance)
    1: (single_center_basis(1), (0,), [2.0], [[1.0]]),
    2: (single_center_basis(2), (0,), [1.0, -3.0], [[1.0, 0.6], [0.6, 2.0]]),
    5: (BasisSpace((np.array([0.2, 0.5, 0.8]), np.array([0.3, 0.6])), (0.3, 0.3)), (0, 1),
        [1.0, 2.0, 3.0, -1.0, 4.0],
        np.diag([1.0, 0.5, 2.0, 1.5, 0.8]) + 0.3),
}


@pytest.mark.parametrize("dim", sorted(LINEAR_CASES))
def test_update_matches_kalman_filter(dim):
    basis, obs, mean, cov = LINEAR_CASES[dim]
    mean, cov = np.asarray(mean, float), np.asarray(cov, float)
    R = np.array([0.5, 0.8][:len(obs)])
    E = 100_000
    s = EnsembleState(gaussian_ensemble(mean, cov, E, seed=dim), np.zeros(2 + dim), R, basis, obs)
    # observation rows at phase 0.5, evaluated directly from the Gaussian definition
    H = np.zeros((len(obs), dim))
    for row, d in enumerate(obs):
        seg = basis.segment(d)
        H[row, seg] = np.exp(-0.5 * ((0.5 - basis.centers[d]) / basis.widths[d]) ** 2)
    y = H @ mean + np.array([1.0, -0.7][:len(obs)])

    post = update(s, ObservationFrame.from_values(y), np.random.default_rng(100 + dim))
    m_true, P_true = kalman_update(mean, cov, H, np.diag(R), y)
    np.testing.assert_allclose(post.weights.mean(axis=0), m_true, rtol=0.02)
    np.testing.assert_allclose(post.weights.var(axis=0, ddof=1), np.diag(P_true), rtol=0.02)


def test_zero_innovation_leaves_symmetric_mean():
    basis = single_center_basis(1)
    base = np.random.default_rng(4).standard_normal(5000)
    w = np.concatenate([base, -base]) + 3.0  # symmetric about 3
    members = np.column_stack([np.full(w.size, 0.5), np.zeros(w.size), w])
    s = EnsembleState(members, np.zeros(3), np.array([1e-9]), basis, (0,))
    post = update(s, ObservationFrame.from_values([3.0]), np.random.default_rng(5))
    assert abs(post.weights.mean() - 3.0) <= 1e-3


class TestUpdateErrors:
    def test_zero_noise_with_no_spread_is_singular(self):
        s = state([[0.5, 0.0, 1.0], [0.5, 0.0, 1.0]], single_center_basis(1), R=0.0)
        with pytest.raises(FilterError, match="R > 0"):
            update(s, ObservationFrame.from_values([2.0]), np.random.default_rng(0))

    def test_empty_mask_is_rejected(self):
        s = state([[0.5, 0.0, 1.0], [0.5, 0.0, 2.0]], single_center_basis(1))
        with pytest.raises(ValueError, match="skip"):
            update(s, ObservationFrame.from_values([np.nan]))

    def test_frame_width_must_match(self):
        s = state([[0.5, 0.0, 1.0], [0.5, 0.0, 2.0]], single_center_basis(1))
        with pytest.raises(ValueError, match="channels"):
            update(s, ObservationFrame.from_values([1.0, 2.0]))


class TestInfer:
    def test_decodes_at_mean_phase(self):
        b = uniform_basis(2, 4)
        w = np.random.default_rng(6).standard_normal((3, 8))
        members = np.column_stack([[0.2, 0.3, 0.4], [0.01, 0.02, 0.03], w])
        out = infer(state(members, b))
        assert out.phase == pytest.approx(0.3)
        assert out.phase_velocity == pytest.approx(0.02)
        expected = decode_series(LatentModel(w.mean(0), b), [0.3])[0]
        np.testing.assert_allclose(out.decoded, expected, rtol=1e-12)

    def test_look_ahead_is_clamped(self):
        b = uniform_basis(2, 4)
        w = np.random.default_rng(7).standard_normal((2, 8))
        members = np.column_stack([[0.97, 0.97], [0.01, 0.01], w])
        out = infer(state(members, b), look_ahead=0.1)
        expected = decode_series(LatentModel(w.mean(0), b), [1.0])[0]
        np.testing.assert_allclose(out.decoded, expected, rtol=1e-12)
        assert out.phase == pytest.approx(0.97)

    def test_negative_look_ahead(self):
        s = state([[0.5, 0.0, 1.0], [0.5, 0.0, 2.0]], single_center_basis(1))
        with pytest.raises(ValueError):
            infer(s, -0.01)


def test_observe_uses_each_members_phase():
    b = BasisSpace((np.array([0.0, 1.0]),), (0.5,))
    members = np.array([[0.0, 0.0, 1.0, 0.0], [1.0, 0.0, 1.0, 0.0]])
    h = observe(b, members, [0])
    assert h[0, 0] == 1.0
    assert h[1, 0] == pytest.approx(np.exp(-2.0), rel=1e-15)


class TestRunSession:
    def test_replaying_a_training_demo_reaches_the_end(self, trained, small_dataset):
        demo = small_dataset.demos[3]
        out = run_session(trained.initial_state(), trained.frames(demo.samples), seed=0)
        assert abs(out[-1].phase - 1.0) <= 0.05

    def test_frozen_posture_halts_phase(self, trained, small_dataset):
        first = small_dataset.demos[0].samples[:1]
        frames = trained.frames(np.repeat(first, 150, axis=0))
        out = run_session(trained.initial_state(), frames, seed=0)
        v0 = out[0].phase_velocity
        assert min(o.phase_velocity for o in out[:101]) < 0.1 * v0

    def test_masked_frames_only_predict(self):
        b = single_center_basis(1)
        s = state([[0.0, 0.01, 1.0], [0.0, 0.03, 2.0]], b)
        frames = [ObservationFrame.from_values([np.nan])] * 5
        out = run_session(s, frames, seed=0)
        # the first frame is the prior itself; each later frame advances by the mean velocity
        assert [o.phase for o in out] == pytest.approx([0.0, 0.02, 0.04, 0.06, 0.08])

    def test_masked_frames_widen_phase_spread(self):
        b = single_center_basis(1)
        E = 200
        members = np.column_stack([np.zeros(E), np.full(E, 0.01), np.ones(E)])
        s = state(members, b, Q=np.array([0.0, 1e-6, 0.0]))
        frames = [ObservationFrame.from_values([np.nan])] * 20
        spread = [step.state.phase.std() for step in filter_steps(s, frames, np.random.default_rng(0))]
        assert spread[-1] > spread[5] > spread[1]

    def test_same_seed_same_outputs(self, trained, small_dataset):
        frames = trained.frames(small_dataset.demos[1].samples[:60])
        a = run_session(trained.initial_state(), frames, 0.05, seed=11)
        b = run_session(trained.initial_state(), frames, 0.05, seed=11)
        assert all(np.array_equal(x.decoded, y.decoded) and x.phase == y.phase for x, y in zip(a, b))

    def test_no_frames(self, trained):
        with pytest.raises(ValueError):
            run_session(trained.initial_state(), [])

    def test_invariants_hold_every_step(self, trained, small_dataset):
        frames = trained.frames(small_dataset.demos[2].samples)
        s0 = trained.initial_state()
        for step in filter_steps(s0, frames, np.random.default_rng(1)):
            assert step.state.E == s0.E
            assert np.all((step.state.phase >= 0) & (step.state.phase <= 1))
            assert np.all(step.state.velocity >= 0)

    def test_exact_demo_tracking_converges(self):
        # noise-free demos, Q = 0, small R, and more members than latent dimensions
        rng = np.random.default_rng(0)
        b = uniform_basis(2, 6)
        inter = []
        for _ in range(60):
            T, a = int(rng.integers(80, 121)), rng.uniform(0.5, 1.5)
            ph = np.linspace(0, 1, T)
            inter.append(make_interaction(np.column_stack(
                [a * np.sin(np.pi * ph) ** 2, 2 * a * np.sin(np.pi * ph) * ph])))
        demos = [fit(i, b).model for i in inter]
        s = init_ensemble(demos, [i.T for i in inter], NO_NOISE, 1e-4, [0])
        prior = decode_series(mean_model(s), inter[7].phases())[:, 1]
        target = inter[7].samples[:, 1]
        out = run_session(s, [ObservationFrame.from_values(r[:1]) for r in inter[7].samples])
        err = np.abs([o.decoded[1] for o in out] - target)
        prior_err = np.abs(prior - target)
        T = len(err)
        early = err[:T // 4].mean() / prior_err[:T // 4].mean()
        late = err[T // 2:].mean() / prior_err[T // 2:].mean()
        assert late < early
        assert late < 0.1
        assert abs(out[-1].phase - 1.0) <= 0.01


class TestObservationFrame:
    def test_mask_from_nan(self):
        f = ObservationFrame.from_values([1.0, np.nan, 3.0])
        assert f.mask.tolist() == [True, False, True]

    def test_available_values_must_be_finite(self):
        with pytest.raises(ValueError):
            ObservationFrame([1.0, np.inf], [True, True])

    def test_masked_values_are_hidden(self):
        f = ObservationFrame([1.0, 2.0], [True, False])
        assert np.isnan(f.values[1])
