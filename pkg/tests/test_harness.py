import math

import numpy as np
import pytest

from factorcast import checkpoint, harness, narma
from factorcast.data import MinMaxStats, SegmentBatch, make_segments
from factorcast.errors import AggregationError, FormatError, ParameterError, UsageError
from factorcast.forecaster import VARIANTS, Forecaster, ModelConfig
from factorcast.tensor import Tensor


@pytest.fixture(scope="module")
def tiny():
    sset = narma.generate_series_set(narma.scenario(1), narma.ControlRegime.iid(), 6, 120, seed=0)
    stats = MinMaxStats.fit(sset)
    return make_segments(sset, 11, 5, 256, seed=0, stats=stats), stats


class Oracle:
    """Returns the true targets; stands in for a perfect model."""

    def __init__(self, segments):
        self.segments = segments

    def rollout(self, x_past, u_past, u_future, horizon):
        idx = [np.flatnonzero((self.segments.x_past == xp).all(axis=(1, 2)))[0] for xp in x_past]
        return self.segments.x_future[idx, :, :horizon]


class Zero:
    def rollout(self, x_past, u_past, u_future, horizon):
        return np.zeros((len(x_past), x_past.shape[1], horizon))


def params_equal(a, b):
    return all(np.array_equal(a.params[k].data, b.params[k].data) for k in a.params)


def test_zero_epochs_returns_initialization(tiny):
    segs, _ = tiny
    cfg = ModelConfig("Ours")
    result = harness.train(cfg, segs, seed=3, config=harness.TrainConfig(epochs=0))
    fresh = Forecaster(cfg, harness.seed_streams(3)[0])
    assert result.ok and result.trace == [] and params_equal(result.model, fresh)


@pytest.mark.parametrize("variant", VARIANTS)
def test_loss_decreases_over_100_steps(variant, tiny):
    segs, _ = tiny
    model = Forecaster(ModelConfig(variant), seed=0)
    from factorcast.optim import Adam

    opt = Adam(model.parameters(), lr=1e-3)
    batch = segs.subset(np.arange(64))
    losses = []
    for _ in range(100):
        opt.zero_grad()
        loss = harness.multistep_loss(model, batch)
        losses.append(float(loss.data))
        loss.backward()
        opt.step()
    assert np.mean(losses[-10:]) < 0.5 * np.mean(losses[:10])


def test_training_is_deterministic(tiny):
    segs, _ = tiny
    cfg, tc = ModelConfig("BaselineSC"), harness.TrainConfig(epochs=2, batch_size=64)
    a = harness.train(cfg, segs, 5, tc, val_segments=segs)
    b = harness.train(cfg, segs, 5, tc, val_segments=segs)
    assert a.trace == b.trace and params_equal(a.model, b.model)
    assert set(a.trace[0]) == {"epoch", "train_loss", "val_loss"}


def test_non_finite_data_marks_run_failed(tiny):
    segs, _ = tiny
    bad = segs.subset(np.arange(32))
    bad.x_future[0, 0, 0] = np.inf
    result = harness.train(ModelConfig("Baseline"), bad, 0, harness.TrainConfig(epochs=1))
    assert result.status == "failed" and "non-finite" in result.failure


def test_oracle_model_has_zero_mse(tiny):
    segs, _ = tiny
    out = harness.evaluate_forecast(Oracle(segs), segs, 5)
    assert out["mean"] == 0 and out["per_step"] == [0.0] * 5


def test_zero_predictor_mse_is_mean_square_target(tiny):
    segs, _ = tiny
    out = harness.evaluate_forecast(Zero(), segs, 3)
    assert math.isclose(out["mean"], float(np.mean(segs.x_future[:, :, :3] ** 2)), rel_tol=1e-12)


def test_horizon_beyond_segments(tiny):
    segs, _ = tiny
    with pytest.raises(ParameterError):
        harness.evaluate_forecast(Zero(), segs, 6)
    with pytest.raises(ParameterError):
        harness.evaluate_forecast(Zero(), segs, 0)


def test_intervention_starts_at_unperturbed_mse(tiny):
    segs, _ = tiny
    model = Forecaster(ModelConfig("Baseline"), seed=1)
    curve = harness.intervention_test(model, segs, control=2, noise_stds=[0, 0.5], state=1)
    pred = harness.predict(model, segs, 5)
    assert curve[0] == (0.0, float(np.mean((pred[:, 0] - segs.x_future[:, 0]) ** 2)))
    assert curve[1][1] != curve[0][1]


def test_intervention_premise(tiny):
    segs, _ = tiny
    model = Forecaster(ModelConfig("Ours"), seed=1)
    with pytest.raises(UsageError):
        harness.intervention_test(model, segs, 2, [0, 1], 2, coupling=narma.scenario(1).coupling)
    harness.intervention_test(model, segs, 2, [0], 1, coupling=narma.scenario(1).coupling)


def test_structurally_isolated_model_gives_flat_curve(tiny):
    # OursHD with every path from block 2 into block 1 removed
    segs, _ = tiny
    model = Forecaster(ModelConfig("OursHD"), seed=2)
    model.params["f1.21.w"].data[:] = 0
    model.params["f1.21.b"].data[:] = 0
    curve = harness.intervention_test(model, segs, 2, [0, 0.1, 0.5, 1.0], 1)
    assert len({mse for _, mse in curve}) == 1


def test_horizon_sweep(tiny):
    segs, _ = tiny
    model = Forecaster(ModelConfig("Ours"), seed=0)
    one = harness.horizon_sweep(model, segs, 1)
    assert one == [(1, harness.evaluate_forecast(model, segs, 1)["mean"])]
    curve = harness.horizon_sweep(model, segs, 5)
    assert [h for h, _ in curve] == [1, 2, 3, 4, 5] and all(v >= 0 for _, v in curve)
    per_step = harness.evaluate_forecast(model, segs, 5)["per_step"]
    assert math.isclose(curve[-1][1], np.mean(per_step), rel_tol=1e-12)


def test_aggregate_single_seed():
    run = {"seed": 0, "status": "ok", "mse_iid": 2.0, "mse_ood": 5.0, "relative_error": 1.5}
    agg = harness.aggregate([run])
    assert agg["mse_iid"] == 2.0 and agg["mse_iid_std"] == 0.0 and agg["relative_error"] == 1.5


def test_aggregate_sample_std_and_recomputation():
    runs = [
        {"seed": 0, "status": "ok", "mse_iid": 1.0, "mse_ood": 2.0, "relative_error": 1.0},
        {"seed": 1, "status": "ok", "mse_iid": 3.0, "mse_ood": 9.0, "relative_error": 2.0},
        {"seed": 2, "status": "failed"},
    ]
    agg = harness.aggregate(runs)
    assert agg["mse_iid"] == 2.0 and math.isclose(agg["mse_iid_std"], math.sqrt(2))
    assert agg["relative_error"] == harness.relative_error(agg["mse_iid"], agg["mse_ood"]) == 1.75
    assert agg["relative_error_seed_mean"] == 1.5
    assert agg["failed_seeds"] == [2] and agg["n_seeds"] == 2


def test_aggregate_nothing():
    with pytest.raises(AggregationError):
        harness.aggregate([{"seed": 0, "status": "failed"}])


@pytest.mark.parametrize("variant", VARIANTS)
def test_checkpoint_round_trip(variant, tiny, tmp_path):
    segs, stats = tiny
    model = Forecaster(ModelConfig(variant, L=4), seed=9)
    path = tmp_path / "model.ckpt"
    checkpoint.save(path, model, stats)
    back, back_stats = checkpoint.load(path)
    assert back.config == model.config and list(back.params) == list(model.params)
    assert params_equal(back, model)
    assert back_stats.to_dict() == stats.to_dict()
    assert np.array_equal(harness.predict(back, segs, 2), harness.predict(model, segs, 2))
    assert path.read_bytes() == checkpoint.encode(back, back_stats)


def test_checkpoint_rejects_garbage(tmp_path):
    model = Forecaster(ModelConfig("Ours", L=2), seed=0)
    raw = checkpoint.encode(model)
    with pytest.raises(FormatError):
        checkpoint.decode(b"nope" + raw)
    with pytest.raises(FormatError):
        checkpoint.decode(raw[:-8])


def test_subset_and_truncate(tiny):
    segs, _ = tiny
    part = segs.subset([3, 1])
    assert isinstance(part, SegmentBatch) and len(part) == 2
    assert np.array_equal(part.x_past[0], segs.x_past[3])
    short = segs.truncate(2)
    assert short.M == 2 and np.array_equal(short.x_future, segs.x_future[:, :, :2])


def test_predict_accepts_tensors(tiny):
    segs, _ = tiny
    model = Forecaster(ModelConfig("Baseline"), seed=0)
    out = harness.predict(model, segs.subset(np.arange(4)), 5)
    direct = model.rollout(Tensor(segs.x_past[:4]), segs.u_past[:4], segs.u_future[:4]).data
    assert np.array_equal(out, direct)
