import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from glyphforge.errors import ConfigError, ShapeError
from glyphforge.flow_core import (
    FlowBatch,
    FlowSchedule,
    SamplerConfig,
    TrainConfig,
    VelocityModel,
    flow_loss,
    interpolate,
    load_checkpoint,
    sample_ode,
    save_checkpoint,
    train_sft,
    velocity_target,
    write_loss_trace,
)


def make_batch(rng, n=4, d=3, c=2):
    return FlowBatch(x0=rng.standard_normal((n, d)),
                     eps=rng.standard_normal((n, d)),
                     t=rng.uniform(0, 1, n),
                     cond=rng.standard_normal((n, c)))


class TestSchedule:
    def test_rectified_endpoints(self):
        s = FlowSchedule()
        assert s.alpha(0.0) == 1.0 and s.alpha(1.0) == 0.0
        assert s.sigma(0.0) == 0.0 and s.sigma(1.0) == 1.0

    def test_unknown_kind_rejected(self):
        with pytest.raises(ConfigError):
            FlowSchedule(kind="cosine")


class TestInterpolate:
    def test_t0_returns_x0(self):
        rng = np.random.default_rng(0)
        b = FlowBatch(x0=rng.standard_normal((3, 2)), eps=rng.standard_normal((3, 2)),
                      t=np.zeros(3), cond=np.zeros((3, 0)))
        np.testing.assert_array_equal(interpolate(b, FlowSchedule()), b.x0)

    def test_t1_returns_eps(self):
        rng = np.random.default_rng(1)
        b = FlowBatch(x0=rng.standard_normal((3, 2)), eps=rng.standard_normal((3, 2)),
                      t=np.ones(3), cond=np.zeros((3, 0)))
        np.testing.assert_array_equal(interpolate(b, FlowSchedule()), b.eps)

    def test_midpoint(self):
        b = FlowBatch(x0=[[1.0, 0.0]], eps=[[0.0, 1.0]], t=[0.5], cond=np.zeros((1, 0)))
        np.testing.assert_allclose(interpolate(b, FlowSchedule()), [[0.5, 0.5]])

    def test_shape_mismatch_rejected(self):
        with pytest.raises(ShapeError):
            FlowBatch(x0=[[1.0, 2.0]], eps=[[1.0]], t=[0.5], cond=[[0.0]])

    @given(t=st.floats(0, 1), seed=st.integers(0, 10_000))
    @settings(max_examples=50, deadline=None)
    def test_straight_line_property(self, t, seed):
        rng = np.random.default_rng(seed)
        x0 = rng.standard_normal((2, 3))
        eps = rng.standard_normal((2, 3))
        cond = np.zeros((2, 0))
        bt = FlowBatch(x0=x0, eps=eps, t=np.full(2, t), cond=cond)
        b0 = FlowBatch(x0=x0, eps=eps, t=np.zeros(2), cond=cond)
        s = FlowSchedule()
        np.testing.assert_allclose(
            interpolate(bt, s) - interpolate(b0, s), t * (eps - x0), atol=1e-12)


class TestVelocityTarget:
    def test_direct_subtraction(self):
        b = FlowBatch(x0=[[1.0, 2.0]], eps=[[3.0, 4.0]], t=[0.3], cond=np.zeros((1, 0)))
        np.testing.assert_array_equal(velocity_target(b, FlowSchedule()), [[2.0, 2.0]])

    def test_identity_case(self):
        x = np.random.default_rng(2).standard_normal((2, 4))
        b = FlowBatch(x0=x, eps=x, t=[0.1, 0.9], cond=np.zeros((2, 0)))
        np.testing.assert_array_equal(velocity_target(b, FlowSchedule()), np.zeros((2, 4)))

    def test_t_free(self):
        rng = np.random.default_rng(3)
        x0, eps = rng.standard_normal((2, 2)), rng.standard_normal((2, 2))
        outs = []
        for t in (0.0, 0.25, 0.5, 1.0):
            b = FlowBatch(x0=x0, eps=eps, t=np.full(2, t), cond=np.zeros((2, 0)))
            outs.append(velocity_target(b, FlowSchedule()))
        for o in outs[1:]:
            np.testing.assert_array_equal(o, outs[0])


class TestFlowLoss:
    def test_exact_fit_zero_loss(self):
        # zero-weight final layer, bias set to the constant target
        m = VelocityModel([4, 3, 1])
        m.params[:] = 0.0
        m.params[-1] = 2.0  # output bias
        b = FlowBatch(x0=[[1.0]], eps=[[3.0]], t=[0.4], cond=[[0.0, 0.0]])
        loss, grad = flow_loss(m, b, FlowSchedule())
        assert loss == pytest.approx(0.0, abs=1e-15)
        np.testing.assert_allclose(grad, 0.0, atol=1e-15)

    def test_single_sample_squared_error(self):
        m = VelocityModel([4, 3, 1])
        m.params[:] = 0.0
        m.params[-1] = 3.0
        b = FlowBatch(x0=[[1.0]], eps=[[2.0]], t=[0.4], cond=[[0.0, 0.0]])
        loss, _ = flow_loss(m, b, FlowSchedule())  # target v = 1, output 3
        assert loss == pytest.approx(4.0)

    def test_nonnegative_and_zero_iff_exact(self):
        rng = np.random.default_rng(4)
        m = VelocityModel([6, 5, 2], seed=7)
        loss, _ = flow_loss(m, make_batch(rng, d=2, c=3), FlowSchedule())
        assert loss > 0

    @pytest.mark.parametrize("seed", range(5))
    def test_gradient_matches_finite_differences(self, seed):
        rng = np.random.default_rng(seed)
        m = VelocityModel([5, 6, 2], seed=seed)
        assert m.n_params <= 200
        batch = make_batch(rng, n=5, d=2, c=2)
        _, grad = flow_loss(m, batch, FlowSchedule())
        h = 1e-5
        fd = np.zeros_like(grad)
        for i in range(m.n_params):
            p = m.params[i]
            m.params[i] = p + h
            lp, _ = flow_loss(m, batch, FlowSchedule())
            m.params[i] = p - h
            lm, _ = flow_loss(m, batch, FlowSchedule())
            m.params[i] = p
            fd[i] = (lp - lm) / (2 * h)
        rel = np.abs(grad - fd) / np.maximum(np.abs(fd), 1e-8)
        assert rel.max() < 1e-4


class TestSampler:
    def test_zero_field_returns_noise(self):
        m = VelocityModel([3, 4, 2])
        m.params[:] = 0.0
        cfg = SamplerConfig(steps=10, seed=42)
        out = sample_ode(m, np.zeros((1, 0)), cfg)
        expected = np.random.default_rng(42).standard_normal(2)
        np.testing.assert_allclose(out, expected)

    def test_constant_field_exact_euler(self):
        # linear model with zero weights and bias k outputs constant velocity
        m = VelocityModel([3, 2])
        m.params[:] = 0.0
        m.params[-2:] = [1.5, -0.5]
        cfg = SamplerConfig(steps=7, seed=3)
        out = sample_ode(m, np.zeros((1, 0)), cfg)
        noise = np.random.default_rng(3).standard_normal(2)
        np.testing.assert_allclose(out, noise - np.array([1.5, -0.5]), atol=1e-12)

    def test_determinism_byte_identical(self):
        m = VelocityModel([4, 8, 2], seed=1)
        cfg = SamplerConfig(steps=20, method="midpoint", seed=9)
        a = sample_ode(m, np.zeros((1, 1)) + 0.3, cfg)
        b = sample_ode(m, np.zeros((1, 1)) + 0.3, cfg)
        assert a.tobytes() == b.tobytes()

    def test_zero_steps_rejected(self):
        with pytest.raises(ConfigError):
            SamplerConfig(steps=0)


class TestTrainSft:
    def test_lr_zero_no_update(self):
        m = VelocityModel([3, 4, 2], seed=5)
        before = m.params.copy()
        dataset = [(np.zeros(2), np.zeros(0))]
        train_sft(m, dataset, FlowSchedule(),
                  TrainConfig(steps=1, learning_rate=0.0, seed=0))
        np.testing.assert_array_equal(m.params, before)

    def test_empty_dataset_rejected(self):
        with pytest.raises(ConfigError):
            train_sft(VelocityModel([3, 2]), [], FlowSchedule(), TrainConfig())

    def test_loss_decreases_on_twomode(self):
        from glyphforge.tasks import train_twomode

        _, trace = train_twomode(steps=2000, seed=0)
        assert np.mean(trace[-100:]) < 0.5 * np.mean(trace[:100])

    def test_deterministic_under_seed(self):
        from glyphforge.tasks import train_twomode

        m1, t1 = train_twomode(steps=50, seed=3)
        m2, t2 = train_twomode(steps=50, seed=3)
        assert m1.params.tobytes() == m2.params.tobytes()
        assert t1 == t2


class TestCheckpoint:
    def test_roundtrip(self, tmp_path):
        m = VelocityModel([5, 7, 3], seed=11)
        path = tmp_path / "model.gfvm"
        save_checkpoint(path, m)
        with open(path, "rb") as f:
            assert f.read(4) == b"GFVM"
        m2 = load_checkpoint(path)
        assert m2.widths == m.widths
        assert m2.params.tobytes() == m.params.tobytes()

    def test_loss_trace_csv(self, tmp_path):
        path = tmp_path / "trace.csv"
        write_loss_trace(path, [1.5, 0.25])
        lines = path.read_text().splitlines()
        assert lines[0] == "step,loss"
        assert lines[1].startswith("0,1.5")
