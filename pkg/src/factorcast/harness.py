"""Training loop and evaluation metrics."""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np

from . import tensor as tf
from .data import SegmentBatch
from .errors import AggregationError, NonFiniteError, ParameterError, UsageError
from .forecaster import Forecaster, ModelConfig
from .optim import Adam

log = logging.getLogger(__name__)

EVAL_CHUNK = 1024
SCHEDULES = ("constant", "cosine")


@dataclass(frozen=True)
class TrainConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    epochs: int = 30
    batch_size: int = 64
    schedule: str = "constant"  # or "cosine": lr decays to 0 over the run

    def __post_init__(self):
        if self.schedule not in SCHEDULES:
            raise ParameterError(f"unknown lr schedule {self.schedule!r}; expected one of {SCHEDULES}")
        if self.lr <= 0 or self.epochs < 0 or self.batch_size < 1:
            raise ParameterError(f"invalid training settings: {self}")

    def lr_at(self, step: int, total: int) -> float:
        """Learning rate for 0-based update ``step`` out of ``total``."""
        if self.schedule == "constant" or total <= 1:
            return self.lr
        return 0.5 * self.lr * (1.0 + math.cos(math.pi * step / total))


@dataclass
class TrainResult:
    model: Forecaster
    trace: list[dict] = field(default_factory=list)
    status: str = "ok"
    failure: str | None = None

    @property
    def ok(self) -> bool:
        return self.status == "ok"


def seed_streams(seed: int) -> tuple[int, int]:
    """(init seed, shuffle seed) derived from one run seed."""
    a, b = np.random.SeedSequence(seed).generate_state(2)
    return int(a), int(b)


def multistep_loss(model: Forecaster, batch: SegmentBatch) -> tf.Tensor:
    """Mean over steps of the per-step MSE (all steps weigh equally)."""
    pred = model.rollout(batch.x_past, batch.u_past, batch.u_future, batch.M)
    return tf.mse(pred, batch.x_future)


def train(
    model_config: ModelConfig,
    train_segments: SegmentBatch,
    seed: int,
    config: TrainConfig = TrainConfig(),
    val_segments: SegmentBatch | None = None,
) -> TrainResult:
    """Fit a freshly initialised model with Adam on the M-step loss.

    A non-finite loss or gradient ends the run with ``status="failed"``
    instead of raising, so batch drivers can carry on.
    """
    init_seed, shuffle_seed = seed_streams(seed)
    model = Forecaster(model_config, init_seed)
    result = TrainResult(model)
    opt = Adam(model.parameters(), lr=config.lr, beta1=config.beta1, beta2=config.beta2, eps=config.eps)
    rng = np.random.default_rng(shuffle_seed)
    count = len(train_segments)
    per_epoch = -(-count // config.batch_size)
    total_steps, step = per_epoch * config.epochs, 0
    for epoch in range(1, config.epochs + 1):
        order = rng.permutation(count)
        total = 0.0
        for start in range(0, count, config.batch_size):
            batch = train_segments.subset(order[start : start + config.batch_size])
            opt.zero_grad()
            opt.state.lr = config.lr_at(step, total_steps)
            step += 1
            loss = multistep_loss(model, batch)
            value = float(loss.data)
            if not math.isfinite(value):
                return _failed(result, f"non-finite loss at epoch {epoch}")
            loss.backward()
            try:
                opt.step()
            except NonFiniteError as exc:
                return _failed(result, f"{exc} {exc.diagnostics}")
            total += value * len(batch)
        row = {"epoch": epoch, "train_loss": total / count}
        if val_segments is not None:
            row["val_loss"] = evaluate_forecast(model, val_segments, val_segments.M)["mean"]
        result.trace.append(row)
        log.debug("epoch %d %s", epoch, row)
    return result


def _failed(result: TrainResult, reason: str) -> TrainResult:
    log.warning("training failed: %s", reason)
    result.status = "failed"
    result.failure = reason
    return result


# ----------------------------------------------------------------------------
# evaluation


def predict(model, segments: SegmentBatch, horizon: int, u_future=None) -> np.ndarray:
    """Rollout predictions (count, n, horizon), evaluated in chunks without a tape."""
    u_future = segments.u_future if u_future is None else u_future
    out = []
    with tf.no_grad():
        for lo in range(0, len(segments), EVAL_CHUNK):
            sl = slice(lo, lo + EVAL_CHUNK)
            pred = model.rollout(segments.x_past[sl], segments.u_past[sl], u_future[sl, :, :horizon], horizon)
            out.append(np.asarray(getattr(pred, "data", pred)))
    return np.concatenate(out, axis=0)


def evaluate_forecast(model, segments: SegmentBatch, horizon: int) -> dict:
    """Per-step MSE (over segments and states) and its mean over steps 1..horizon."""
    if horizon < 1:
        raise ParameterError(f"horizon must be >= 1, got {horizon}")
    if horizon > segments.M:
        raise ParameterError(f"segments carry {segments.M} future steps, horizon {horizon} requested")
    pred = predict(model, segments, horizon)
    err = (pred - segments.x_future[:, :, :horizon]) ** 2
    per_step = err.mean(axis=(0, 1))
    return {"per_step": per_step.tolist(), "mean": float(per_step.mean())}


def relative_error(mse_iid: float, mse_ood: float) -> float:
    return (mse_ood - mse_iid) / mse_iid


def intervention_test(
    model,
    segments: SegmentBatch,
    control: int,
    noise_stds,
    state: int,
    coupling=None,
    horizon: int = 5,
    seed: int = 0,
) -> list[tuple[float, float]]:
    """MSE of ``state`` when white noise is added to ``control``'s future window.

    ``control`` and ``state`` are 1-based.  Targets stay untouched, which is
    only valid if the control does not drive the state, so ``coupling`` (the
    generating C matrix) must have a zero at [state, control].
    """
    if coupling is not None and coupling[state - 1][control - 1] != 0:
        raise UsageError(
            f"u{control} drives x{state} (c={coupling[state - 1][control - 1]}); intervention premise fails"
        )
    if horizon > segments.M:
        raise ParameterError(f"segments carry {segments.M} future steps, horizon {horizon} requested")
    target = segments.x_future[:, state - 1, :horizon]
    curve = []
    for k, std in enumerate(noise_stds):
        u_future = segments.u_future[:, :, :horizon].copy()
        if std > 0:
            rng = np.random.default_rng([seed, k])
            u_future[:, control - 1, :] += rng.normal(0.0, std, u_future[:, control - 1, :].shape)
        pred = predict(model, segments, horizon, u_future)
        curve.append((float(std), float(np.mean((pred[:, state - 1, :] - target) ** 2))))
    return curve


def horizon_sweep(model, segments: SegmentBatch, max_horizon: int) -> list[tuple[int, float]]:
    """Accumulated MSE: cumulative mean of per-step MSE over steps 1..h."""
    per_step = np.asarray(evaluate_forecast(model, segments, max_horizon)["per_step"])
    cum = np.cumsum(per_step) / np.arange(1, max_horizon + 1)
    return [(h + 1, float(v)) for h, v in enumerate(cum)]


# ----------------------------------------------------------------------------
# aggregation


def aggregate(runs: list[dict]) -> dict:
    """Across-seed mean and sample std (ddof=1; 0.0 for a single seed) per metric.

    ``runs`` are flat metric dicts with ``seed`` and ``status`` keys; failed
    runs are listed and left out.
    """
    ok = [r for r in runs if r.get("status", "ok") == "ok"]
    failed = [r.get("seed") for r in runs if r.get("status", "ok") != "ok"]
    if failed:
        log.warning("excluding failed seeds %s from aggregates", failed)
    if not ok:
        raise AggregationError("no successful runs to aggregate")
    keys = [k for k, v in ok[0].items() if isinstance(v, (int, float)) and not isinstance(v, bool) and k != "seed"]
    out = {"n_seeds": len(ok), "seeds": [r.get("seed") for r in ok], "failed_seeds": failed}
    for k in keys:
        vals = np.array([r[k] for r in ok], dtype=float)
        out[k] = float(vals.mean())
        out[f"{k}_std"] = float(vals.std(ddof=1)) if len(vals) > 1 else 0.0
    # relative error of the means, per metric suffix ("", "_h1", ...)
    for k in keys:
        if not k.startswith("mse_iid"):
            continue
        sfx = k[len("mse_iid") :]
        if f"mse_ood{sfx}" not in out:
            continue
        rel = f"relative_error{sfx}"
        if rel in out:
            out[f"{rel}_seed_mean"] = out[rel]
            out[f"{rel}_seed_mean_std"] = out.pop(f"{rel}_std")
        out[rel] = relative_error(out[k], out[f"mse_ood{sfx}"])
    return out
