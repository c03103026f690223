"""End-to-end pipeline: dataset files, per-run training/evaluation, reports.

Directory layout under an output root::

    config.yaml                  resolved config
    data/<split>.csv             train, val, test_iid, test_ood
    data/manifest.json           hashes, seeds, normalization stats
    runs/<Variant>-seed<k>/      config.yaml, model.ckpt, loss_trace.csv, metrics.json
    report/                      aggregate.json and table/figure CSVs

metrics.json and every report file are deterministic functions of the config:
no timestamps, no absolute paths, sorted keys.
"""

from __future__ import annotations

import csv
import json
import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from . import checkpoint, harness, narma, pmsm
from .config import ExperimentConfig, dump
from .data import MinMaxStats, SegmentBatch, SeriesSet, canonical_hash, file_sha256, make_segments, read_series_csv
from .errors import AggregationError, FormatError, StaleDataError
from .forecaster import ModelConfig

log = logging.getLogger(__name__)

SPLITS = ("train", "val", "test_iid", "test_ood")


@dataclass
class Dataset:
    splits: dict[str, SeriesSet]
    stats: MinMaxStats
    manifest: dict

    @property
    def manifest_hash(self) -> str:
        return self.manifest["content_hash"]


# ----------------------------------------------------------------------------
# dataset


def split_seeds(seed: int) -> dict[str, int]:
    states = np.random.SeedSequence(seed).generate_state(len(SPLITS))
    return {name: int(s) for name, s in zip(SPLITS, states)}


def scenario_for(cfg: ExperimentConfig) -> narma.ScenarioSpec:
    ds = cfg.dataset
    return narma.scenario(ds.scenario_id).with_coefficients(a=ds.a, b=ds.b, d=ds.d, m=ds.m)


def coupling_for(cfg: ExperimentConfig):
    """Generating C matrix, or None when the dependency graph is unknown."""
    return scenario_for(cfg).coupling if cfg.dataset.kind == "narma" else None


def generate_splits(cfg: ExperimentConfig) -> dict[str, SeriesSet]:
    ds = cfg.dataset
    seeds = split_seeds(ds.seed)
    sizes = {"train": ds.train.series, "val": ds.val.series, "test_iid": ds.test.series, "test_ood": ds.test.series}
    out = {}
    if ds.kind == "narma":
        spec = scenario_for(cfg)
        for name in SPLITS:
            regime = narma.ControlRegime.ood() if name == "test_ood" else narma.ControlRegime.iid()
            out[name] = narma.generate_series_set(spec, regime, sizes[name], ds.series_length, seeds[name], ds.warmup)
    elif ds.kind == "motor":
        params = pmsm.MotorParams(**ds.motor)
        split = pmsm.QuadrantSplit()
        for name in SPLITS:
            mode = "ood" if name == "test_ood" else "iid"
            out[name] = pmsm.generate_series_set(
                split,
                mode,
                sizes[name],
                ds.series_length,
                seeds[name],
                params,
                substeps=ds.substeps,
                warmup=ds.warmup,
                omega_range=tuple(ds.omega_range),
            )
    else:
        keys = {"train": "train", "val": "val", "test_iid": "test-iid", "test_ood": "test-ood"}
        for name in SPLITS:
            out[name] = pmsm.ingest_csv(ds.csv[keys[name]], ds.column_map)
    return out


def write_dataset(root, cfg: ExperimentConfig) -> Dataset:
    """Generate all splits, write CSVs and the manifest; returns the dataset."""
    root = Path(root)
    data_dir = root / "data"
    data_dir.mkdir(parents=True, exist_ok=True)
    (root / "config.yaml").write_text(dump(cfg))
    splits = generate_splits(cfg)
    stats = MinMaxStats.fit(splits["train"])
    files = {}
    for name, sset in splits.items():
        path = data_dir / f"{name}.csv"
        pmsm.export_csv(path, sset)
        files[name] = {"file": path.name, "sha256": file_sha256(path), "series": len(sset)}
    first = splits["train"]
    manifest = {
        "dataset_hash": cfg.dataset_hash(),
        "dataset": cfg.resolved()["dataset"],
        "split_seeds": split_seeds(cfg.dataset.seed),
        "stats": stats.to_dict(),
        "files": files,
        "names": {"states": list(first.state_names), "controls": list(first.control_names), "param": first.param_name},
    }
    manifest["content_hash"] = canonical_hash(manifest)
    (data_dir / "manifest.json").write_text(json.dumps(manifest, indent=2, sort_keys=True) + "\n")
    log.info("wrote dataset %s to %s", manifest["content_hash"][:12], data_dir)
    return Dataset(splits, stats, manifest)


def load_dataset(root, cfg: ExperimentConfig) -> Dataset:
    """Read the dataset back, refusing stale or tampered files."""
    data_dir = Path(root) / "data"
    mpath = data_dir / "manifest.json"
    if not mpath.exists():
        raise StaleDataError(f"no dataset at {data_dir}; run `factorcast generate` first")
    manifest = json.loads(mpath.read_text())
    if manifest.get("dataset_hash") != cfg.dataset_hash():
        raise StaleDataError(f"dataset at {data_dir} was generated from a different dataset config")
    names = manifest["names"]
    splits = {}
    for name in SPLITS:
        entry = manifest["files"][name]
        path = data_dir / entry["file"]
        if not path.exists() or file_sha256(path) != entry["sha256"]:
            raise StaleDataError(f"{path} is missing or does not match its manifest hash")
        try:
            splits[name] = read_series_csv(path, tuple(names["states"]), tuple(names["controls"]), names["param"])
        except FormatError as exc:
            raise StaleDataError(f"{path}: {exc}") from None
    return Dataset(splits, MinMaxStats.from_dict(manifest["stats"]), manifest)


def build_segments(ds: Dataset, cfg: ExperimentConfig) -> dict[str, SegmentBatch]:
    d = cfg.dataset
    seeds = split_seeds(d.seed + 1)
    future = {"train": d.M, "val": d.M, "test_iid": cfg.evaluation.test_future, "test_ood": cfg.evaluation.test_future}
    count = {"train": d.train.segments, "val": d.val.segments, "test_iid": d.test.segments, "test_ood": d.test.segments}
    return {
        name: make_segments(ds.splits[name], d.T, future[name], count[name], seeds[name], ds.stats) for name in SPLITS
    }


# ----------------------------------------------------------------------------
# runs


def model_config(cfg: ExperimentConfig, variant: str) -> ModelConfig:
    m = cfg.model
    return ModelConfig(variant, n=2, T=cfg.dataset.T, L=m.L, kernel_size=m.kernel_size, dilations=tuple(m.dilations))


def train_config(cfg: ExperimentConfig) -> harness.TrainConfig:
    t = cfg.training
    return harness.TrainConfig(
        lr=t.lr, beta1=t.beta1, beta2=t.beta2, eps=t.eps, epochs=t.epochs, batch_size=t.batch_size, schedule=t.schedule
    )


def run_name(variant: str, seed: int) -> str:
    return f"{variant}-seed{seed}"


def evaluate_model(model, segs: dict[str, SegmentBatch], cfg: ExperimentConfig) -> dict:
    """All per-run metrics for a trained model."""
    ev = cfg.evaluation
    scalars, per_step = {}, {}
    for h in sorted(set(ev.horizons)):
        iid = harness.evaluate_forecast(model, segs["test_iid"], h)
        ood = harness.evaluate_forecast(model, segs["test_ood"], h)
        scalars[f"mse_iid_h{h}"] = iid["mean"]
        scalars[f"mse_ood_h{h}"] = ood["mean"]
        scalars[f"relative_error_h{h}"] = harness.relative_error(iid["mean"], ood["mean"])
        per_step[f"h{h}"] = {"iid": iid["per_step"], "ood": ood["per_step"]}
    interventions = []
    coupling = coupling_for(cfg)
    for pair in ev.interventions:
        curve = harness.intervention_test(
            model,
            segs["test_iid"],
            pair.control,
            ev.noise_stds,
            pair.state,
            coupling=coupling,
            horizon=ev.intervention_horizon,
            seed=ev.noise_seed,
        )
        interventions.append({"control": pair.control, "state": pair.state, "curve": [list(p) for p in curve]})
    horizon = []
    if ev.max_horizon:
        horizon = [list(p) for p in harness.horizon_sweep(model, segs["test_ood"], ev.max_horizon)]
        scalars[f"acc_mse_ood_h{ev.max_horizon}"] = horizon[-1][1]
    trajectories = []
    if ev.trajectories:
        ood = segs["test_ood"].subset(np.arange(min(ev.trajectories, len(segs["test_ood"]))))
        pred = harness.predict(model, ood, ood.M)
        for k in range(len(ood)):
            trajectories.append({"segment": k, "truth": ood.x_future[k].tolist(), "pred": pred[k].tolist()})
    return {
        "scalars": scalars,
        "per_step": per_step,
        "interventions": interventions,
        "horizon_curve": horizon,
        "trajectories": trajectories,
    }


def run_one(cfg: ExperimentConfig, root, variant: str, seed: int) -> dict:
    """Train and evaluate one (variant, seed); writes its run directory."""
    root = Path(root)
    ds = load_dataset(root, cfg)
    segs = build_segments(ds, cfg)
    run_dir = root / "runs" / run_name(variant, seed)
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / "config.yaml").write_text(dump(cfg))
    log.info("training %s seed %d", variant, seed)
    result = harness.train(model_config(cfg, variant), segs["train"], seed, train_config(cfg), segs["val"])
    with open(run_dir / "loss_trace.csv", "w", newline="") as fh:
        writer = csv.writer(fh)
        writer.writerow(["epoch", "train_loss", "val_loss"])
        for row in result.trace:
            writer.writerow([row["epoch"], repr(row["train_loss"]), repr(row.get("val_loss", float("nan")))])
    metrics = {
        "variant": variant,
        "seed": seed,
        "status": result.status,
        "failure": result.failure,
        "manifest_hash": ds.manifest_hash,
        "config_hash": cfg.config_hash(),
        "protocols": protocols(cfg),
        "final_train_loss": result.trace[-1]["train_loss"] if result.trace else None,
    }
    ckpt = run_dir / "model.ckpt"
    if result.ok:
        checkpoint.save(ckpt, result.model, ds.stats)
        metrics.update(evaluate_model(result.model, segs, cfg))
    elif ckpt.exists():
        ckpt.unlink()
    write_json(run_dir / "metrics.json", metrics)
    return metrics


def _run_job(args):
    cfg, root, variant, seed = args
    return run_one(cfg, root, variant, seed)


def run_all(cfg: ExperimentConfig, root, jobs: int = 1, variants=None, seeds=None) -> list[dict]:
    variants = variants or cfg.model.variants
    seeds = cfg.training.seeds if seeds is None else seeds
    tasks = [(cfg, str(root), v, s) for v in variants for s in seeds]
    if jobs <= 1:
        return [_run_job(t) for t in tasks]
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        return list(pool.map(_run_job, tasks))


def protocols(cfg: ExperimentConfig) -> dict:
    ev = cfg.evaluation
    return {
        "table1": f"single-step: horizon {min(ev.horizons)} MSE",
        "table2": f"{max(ev.horizons)}-step: mean MSE over steps 1..{max(ev.horizons)}",
        "intervention": f"IID test segments, noise on future control window, mean MSE over {ev.intervention_horizon} steps",
        "horizon": "OOD test segments, accumulated MSE = cumulative mean of per-step MSE",
        "normalization": "min-max on the training split",
    }


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=1, sort_keys=True) + "\n")


# ----------------------------------------------------------------------------
# reports


def collect_runs(run_dirs, manifest_hash: str | None = None) -> list[dict]:
    """Load metrics.json from each run directory, skipping stale or empty ones."""
    runs = []
    for d in run_dirs:
        path = Path(d) / "metrics.json"
        if not path.exists():
            log.warning("skipping %s: no metrics.json", d)
            continue
        m = json.loads(path.read_text())
        if manifest_hash and m.get("manifest_hash") != manifest_hash:
            log.warning("skipping %s: computed on a different dataset", d)
            continue
        if m.get("status") == "ok" and not (Path(d) / "model.ckpt").exists():
            log.warning("skipping %s: checkpoint missing", d)
            continue
        runs.append(m)
    return runs


def report(runs: list[dict], out_dir, cfg: ExperimentConfig) -> dict:
    """Aggregate runs per variant and write aggregate.json plus the CSV tables."""
    if not runs:
        raise AggregationError("no run metrics to aggregate")
    out_dir = Path(out_dir)
    out_dir.mkdir(parents=True, exist_ok=True)
    ev = cfg.evaluation
    order = [v for v in cfg.model.variants if any(r["variant"] == v for r in runs)]
    order += sorted({r["variant"] for r in runs} - set(order))
    variants = {}
    for v in order:
        mine = sorted((r for r in runs if r["variant"] == v), key=lambda r: r["seed"])
        flat = [{"seed": r["seed"], "status": r["status"], **r.get("scalars", {})} for r in mine]
        try:
            agg = harness.aggregate(flat)
        except AggregationError:
            log.warning("variant %s has no successful seeds", v)
            agg = {"n_seeds": 0, "seeds": [], "failed_seeds": [r["seed"] for r in mine]}
            variants[v] = agg
            continue
        ok = [r for r in mine if r["status"] == "ok"]
        agg["interventions"] = _mean_interventions(ok)
        agg["horizon_curve"] = _mean_curve([r["horizon_curve"] for r in ok])
        variants[v] = agg
    if not any(a["n_seeds"] for a in variants.values()):
        raise AggregationError("every run failed; nothing to aggregate")
    manifests = sorted({r["manifest_hash"] for r in runs})
    summary = {"experiment": cfg.name, "manifest_hashes": manifests, "protocols": protocols(cfg), "variants": variants}
    write_json(out_dir / "aggregate.json", summary)
    h1, h2 = min(ev.horizons), max(ev.horizons)
    _write_table(out_dir / "table1.csv", variants, h1, protocols(cfg)["table1"])
    _write_table(out_dir / "table2.csv", variants, h2, protocols(cfg)["table2"])
    _write_interventions(out_dir / "intervention.csv", variants)
    _write_horizon(out_dir / "horizon.csv", variants)
    _write_trajectories(out_dir / "trajectories.csv", runs)
    return summary


def _mean_interventions(runs) -> list[dict]:
    out = []
    if not runs:
        return out
    for k, first in enumerate(runs[0]["interventions"]):
        curves = np.array([[p[1] for p in r["interventions"][k]["curve"]] for r in runs])
        mean = curves.mean(axis=0)
        out.append(
            {
                "control": first["control"],
                "state": first["state"],
                "noise_stds": [p[0] for p in first["curve"]],
                "mse": mean.tolist(),
                "mse_std": (curves.std(axis=0, ddof=1) if len(runs) > 1 else np.zeros_like(mean)).tolist(),
                "increase": float(mean[-1] / mean[0] - 1.0),
            }
        )
    return out


def _mean_curve(curves) -> list[list[float]]:
    if not curves or not curves[0]:
        return []
    values = np.array([[p[1] for p in c] for c in curves])
    return [[int(p[0]), float(v)] for p, v in zip(curves[0], values.mean(axis=0))]


def _write_table(path, variants, h, protocol):
    cols = ["mse_iid", "mse_iid_std", "mse_ood", "mse_ood_std", "relative_error", "relative_error_seed_mean"]
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["protocol", "variant", "n_seeds", *cols, "failed_seeds"])
        for v, agg in variants.items():
            if not agg["n_seeds"]:
                w.writerow([protocol, v, 0, *[""] * len(cols), " ".join(map(str, agg["failed_seeds"]))])
                continue
            vals = [agg.get(f"{c.split('_std')[0]}_h{h}{'_std' if c.endswith('_std') else ''}", "") for c in cols[:4]]
            vals += [agg.get(f"relative_error_h{h}", ""), agg.get(f"relative_error_h{h}_seed_mean", "")]
            w.writerow([protocol, v, agg["n_seeds"], *map(_fmt, vals), " ".join(map(str, agg["failed_seeds"]))])


def _write_interventions(path, variants):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variant", "control", "state", "noise_std", "mse", "mse_std", "n_seeds"])
        for v, agg in variants.items():
            for item in agg.get("interventions", []):
                for std, mse, sd in zip(item["noise_stds"], item["mse"], item["mse_std"]):
                    w.writerow([v, f"u{item['control']}", f"x{item['state']}", _fmt(std), _fmt(mse), _fmt(sd), agg["n_seeds"]])


def _write_horizon(path, variants):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variant", "horizon", "accumulated_mse_ood", "n_seeds"])
        for v, agg in variants.items():
            for h, mse in agg.get("horizon_curve", []):
                w.writerow([v, h, _fmt(mse), agg["n_seeds"]])


def _write_trajectories(path, runs):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(["variant", "seed", "segment", "state", "step", "truth", "pred"])
        for r in sorted(runs, key=lambda r: (r["variant"], r["seed"])):
            for traj in r.get("trajectories", []):
                for i, (truth, pred) in enumerate(zip(traj["truth"], traj["pred"])):
                    for step, (a, b) in enumerate(zip(truth, pred), start=1):
                        w.writerow([r["variant"], r["seed"], traj["segment"], f"x{i + 1}", step, _fmt(a), _fmt(b)])


def _fmt(v):
    return repr(float(v)) if isinstance(v, (int, float)) and not isinstance(v, bool) else v


def reproduce(cfg: ExperimentConfig, root, jobs: int = 1) -> dict:
    """generate -> train every (variant, seed) -> report."""
    root = Path(root)
    write_dataset(root, cfg)
    ds = load_dataset(root, cfg)
    runs = run_all(cfg, root, jobs)
    return report(collect_runs([root / "runs" / run_name(r["variant"], r["seed"]) for r in runs], ds.manifest_hash), root / "report", cfg)
