"""Orchestration commands behind the CLI.

cmd_train persists exactly the models the requested methods need, cmd_eval
scores every method under both evaluation protocols, cmd_toy3 runs the
3-class subset experiment with the remaining classes as OOD, and cmd_synth
writes blob datasets as IDX files for pipeline self-tests.
"""

from __future__ import annotations

import json
import time
import warnings
from concurrent.futures import ThreadPoolExecutor
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from ..analysis import pca_2d, simplex_scatter, write_projection_csv, write_simplex_csv
from ..data import (
    LabeledDataset,
    load_dataset,
    load_idx,
    make_ova,
    rng_from_seed,
    subset_classes,
    synth_blobs,
    write_idx_images,
    write_idx_labels,
)
from ..errors import ConfigError, NumericError, ShapeError
from ..methods import (
    OvnniBundle,
    deep_ensemble_probs,
    mc_dropout_probs,
    ova_positive_probs,
    ovnni_scores,
)
from ..metrics import (
    accuracy_confidence_curve,
    aupr,
    auroc,
    corbiere_split,
    ece,
    error_relabel,
    fpr_at_tpr,
    hendrycks_split,
    histogram,
    reliability_bins,
)
from ..nn import load_model, mlp, penultimate_features, predict_proba, save_model, train
from ..reports import (
    EvalReport,
    save_report,
    write_curve_csv,
    write_table1,
    write_table2,
)
from .config import FAST_MODE_SAMPLES, ExperimentConfig, config_hash

MODELS_DIR = "models"
TOY3_DIR = "toy3"
TOY3_CLASSES = (0, 1, 2)


@dataclass
class RunManifest:
    config_hash: str
    seeds: dict
    wall_clock: dict
    artifacts: list

    def save(self, path) -> None:
        with open(path, "w") as fh:
            json.dump(asdict(self), fh, indent=2)


# -- shared helpers ------------------------------------------------------------

def _require_files(config: ExperimentConfig, keys) -> None:
    if config.paths is None:
        raise ConfigError("paths: this command needs dataset paths in the config")
    for key in keys:
        path = getattr(config.paths, key)
        if path is None:
            raise ConfigError(f"paths.{key}: required for this command")
        if not Path(path).is_file():
            raise ConfigError(f"paths.{key}: file not found: {path}")


def _fast_subsample(data: LabeledDataset, seed: int) -> LabeledDataset:
    if data.n <= FAST_MODE_SAMPLES:
        return data
    idx = rng_from_seed(seed).permutation(data.n)[:FAST_MODE_SAMPLES]
    return LabeledDataset(data.features[idx], data.labels[idx], data.n_label)


def _load_train_data(config: ExperimentConfig) -> LabeledDataset:
    data = load_dataset(config.paths.train_images, config.paths.train_labels)
    if config.fast_mode:
        data = _fast_subsample(data, config.train.seed)
    return data


def _model_jobs(config: ExperimentConfig, n_label: int) -> dict:
    """Dependency closure: model name -> (spec kind, seed, positive class)."""
    methods = set(config.methods)
    s = config.train.seed
    jobs: dict[str, tuple] = {}
    if methods & {"MCP", "OVNNI", "DeepEnsemble"}:
        jobs["ava"] = ("ava", s, None)
    if methods & {"OVNNI", "OvaOnly"}:
        for j in range(n_label):
            jobs[f"ova_{j}"] = ("ova", s + 1 + j, j)
    if "DeepEnsemble" in methods:
        for k in range(1, config.ensemble_size):
            jobs[f"member_{k}"] = ("ava", s + 100 * k, None)
    if "MCDropout" in methods:
        jobs["mcdropout"] = ("dropout", s, None)
    return jobs


def _train_models(config: ExperimentConfig, data: LabeledDataset, out_root: Path) -> RunManifest:
    t_start = time.perf_counter()
    n_label = data.n_label
    jobs = _model_jobs(config, n_label)
    models_dir = out_root / MODELS_DIR
    models_dir.mkdir(parents=True, exist_ok=True)
    base_train = replace(config.train, epochs=config.effective_epochs())

    def run_job(item):
        name, (kind, seed, positive_class) = item
        if kind == "ova":
            ova = make_ova(data, positive_class)
            spec = mlp(data.dim, config.hidden, 2)
            cfg = replace(base_train, seed=seed, class_weights=ova.class_weights)
            model = train(ova.to_dataset(), spec, cfg)
        else:
            rate = config.dropout_rate if kind == "dropout" else 0.0
            spec = mlp(data.dim, config.hidden, n_label, dropout_rate=rate)
            cfg = replace(base_train, seed=seed, class_weights=None)
            model = train(data, spec, cfg)
        save_model(model, models_dir / f"{name}.json")
        return name, seed

    if config.workers > 1:
        with ThreadPoolExecutor(max_workers=config.workers) as pool:
            results = list(pool.map(run_job, jobs.items()))
    else:
        results = [run_job(item) for item in jobs.items()]

    manifest = RunManifest(
        config_hash=config_hash(config),
        seeds=dict(results),
        wall_clock={"train_s": time.perf_counter() - t_start},
        artifacts=sorted(str(Path(MODELS_DIR) / f"{name}.json") for name in jobs)
        + ["manifest.json"],
    )
    manifest.save(out_root / "manifest.json")
    return manifest


def _load_cached(cache: dict, models_dir: Path, name: str):
    if name not in cache:
        path = models_dir / f"{name}.json"
        if not path.is_file():
            raise FileNotFoundError(
                f"model file missing: {path}; run the train command first")
        cache[name] = load_model(path)
    return cache[name]


def _ova_names(models_dir: Path) -> list[str]:
    names = sorted(p.stem for p in models_dir.glob("ova_*.json"))
    if not names:
        raise FileNotFoundError(f"no ova_*.json models in {models_dir}")
    return sorted(names, key=lambda s: int(s.split("_")[1]))


def _method_scores(method: str, models_dir: Path, cache: dict,
                   features: np.ndarray, config: ExperimentConfig) -> np.ndarray:
    if method == "MCP":
        return predict_proba(_load_cached(cache, models_dir, "ava"), features)
    if method == "DeepEnsemble":
        members = [_load_cached(cache, models_dir, "ava")] + [
            _load_cached(cache, models_dir, f"member_{k}")
            for k in range(1, config.ensemble_size)
        ]
        return deep_ensemble_probs(members, features)
    if method == "MCDropout":
        model = _load_cached(cache, models_dir, "mcdropout")
        return mc_dropout_probs(model, features, config.mc_passes, config.train.seed)
    if method == "OvaOnly":
        ova = [_load_cached(cache, models_dir, n) for n in _ova_names(models_dir)]
        return ova_positive_probs(ova, features)
    if method == "OVNNI":
        ava = _load_cached(cache, models_dir, "ava")
        ova = [_load_cached(cache, models_dir, n) for n in _ova_names(models_dir)]
        return ovnni_scores(OvnniBundle(ava, ova), features)
    raise ConfigError(f"methods: unknown method {method!r}")


def _build_report(method: str, scores_id: np.ndarray, labels_id: np.ndarray,
                  scores_ood: np.ndarray) -> EvalReport:
    conf_id = scores_id.max(axis=1)
    pred_id = scores_id.argmax(axis=1)
    correct_id = pred_id == labels_id
    conf_ood = scores_ood.max(axis=1)

    # calibration pool mixes the in-distribution test set with the OOD set;
    # OOD samples count as incorrect whatever they predicted
    pool_conf = np.concatenate([conf_id, conf_ood])
    pool_correct = np.concatenate([correct_id, np.zeros(len(conf_ood), dtype=bool)])
    pool_ood = np.concatenate([np.zeros(len(conf_id), dtype=bool),
                               np.ones(len(conf_ood), dtype=bool)])

    corb = corbiere_split(pool_conf, pool_correct, pool_ood)
    hend = hendrycks_split(conf_id, conf_ood)
    hist_id = histogram(conf_id)
    hist_ood = histogram(conf_ood)
    overlap = float(np.minimum(hist_id / hist_id.sum(), hist_ood / hist_ood.sum()).sum())
    return EvalReport(
        method=method,
        accuracy=float(correct_id.mean()),
        ece=ece(pool_conf, pool_correct),
        auc_corr=auroc(corb),
        aupr_error=aupr(error_relabel(corb)),
        aupr_success=aupr(corb),
        auc_ood=auroc(hend),
        aupr_ood=aupr(hend),
        fpr95=fpr_at_tpr(hend),
        reliability=reliability_bins(pool_conf, pool_correct),
        acc_conf_curve=accuracy_confidence_curve(pool_conf, pool_correct),
        id_histogram=hist_id.tolist(),
        ood_histogram=hist_ood.tolist(),
        hist_overlap=overlap,
    )


def _evaluate_all(config: ExperimentConfig, id_data: LabeledDataset,
                  ood_features: np.ndarray, out_root: Path) -> dict:
    models_dir = out_root / MODELS_DIR
    curves_dir = out_root / "curves"
    curves_dir.mkdir(parents=True, exist_ok=True)
    cache: dict = {}
    reports = {}
    for method in config.methods:
        scores_id = _method_scores(method, models_dir, cache, id_data.features, config)
        scores_ood = _method_scores(method, models_dir, cache, ood_features, config)
        report = _build_report(method, scores_id, id_data.labels, scores_ood)
        reports[method] = report
        save_report(report, out_root / f"report_{method}.json")
        write_curve_csv(report.reliability, curves_dir / f"{method}_reliability.csv",
                        ("mean_conf", "accuracy", "count"))
        write_curve_csv(report.acc_conf_curve, curves_dir / f"{method}_acc_conf.csv",
                        ("threshold", "accuracy", "count"))
        n_bins = len(report.id_histogram)
        write_curve_csv(
            [(b / n_bins, (b + 1) / n_bins, int(i), int(o))
             for b, (i, o) in enumerate(zip(report.id_histogram, report.ood_histogram))],
            curves_dir / f"{method}_hist.csv",
            ("bin_lo", "bin_hi", "id_count", "ood_count"))
        if scores_id.shape[1] == 3:
            write_simplex_csv(simplex_scatter(scores_id, scores_ood),
                              out_root / f"scatter_{method}.csv")
    ordered = [reports[m] for m in config.methods]
    write_table1(ordered, out_root / "table1.csv")
    write_table2(ordered, out_root / "table2.csv")
    _export_feature_projections(config, models_dir, cache, id_data, ood_features, out_root)
    return reports


def _ova_predicted_class_features(ova_models, features: np.ndarray) -> np.ndarray:
    """Penultimate features taken from the binary model that wins the
    winner-takes-all vote for each sample."""
    predicted = ova_positive_probs(ova_models, features).argmax(axis=1)
    out = None
    for j, model in enumerate(ova_models):
        mask = predicted == j
        if not mask.any():
            continue
        feats = penultimate_features(model, features[mask])
        if out is None:
            out = np.zeros((features.shape[0], feats.shape[1]))
        out[mask] = feats
    return out


def _export_feature_projections(config, models_dir, cache, id_data, ood_features,
                                out_root) -> None:
    """2-D projections of the pre-classifier feature space, tagged by class
    or as OOD, for the multi-class model and the winner-takes-all heads.

    Figure data only: a projection that fails to converge is skipped with a
    warning instead of failing the evaluation."""
    groups = [str(int(c)) for c in id_data.labels] + ["ood"] * len(ood_features)
    stacked = np.vstack([id_data.features, ood_features])
    methods = set(config.methods)
    exports = []
    if methods & {"MCP", "OVNNI", "DeepEnsemble"}:
        ava = _load_cached(cache, models_dir, "ava")
        exports.append(("projection_ava.csv", lambda: penultimate_features(ava, stacked)))
    if methods & {"OVNNI", "OvaOnly"}:
        ova = [_load_cached(cache, models_dir, n) for n in _ova_names(models_dir)]
        exports.append(("projection_ova.csv",
                        lambda: _ova_predicted_class_features(ova, stacked)))
    for name, feature_fn in exports:
        try:
            proj = pca_2d(feature_fn(), groups)
        except NumericError as err:
            warnings.warn(f"skipping {name}: {err}")
            continue
        write_projection_csv(proj, out_root / name)


# -- commands -------------------------------------------------------------------

def cmd_train(config: ExperimentConfig) -> RunManifest:
    """Train and persist every model the configured methods need."""
    _require_files(config, ("train_images", "train_labels"))
    t0 = time.perf_counter()
    data = _load_train_data(config)
    manifest = _train_models(config, data, config.output_dir)
    manifest.wall_clock["total_s"] = time.perf_counter() - t0
    manifest.save(config.output_dir / "manifest.json")
    return manifest


def cmd_eval(config: ExperimentConfig) -> dict:
    """Evaluate every configured method on the test and OOD sets."""
    _require_files(config, ("test_images", "test_labels", "ood_images"))
    id_data = load_dataset(config.paths.test_images, config.paths.test_labels)
    ood_features = load_idx(config.paths.ood_images)
    if ood_features.ndim != 2 or ood_features.shape[1] != id_data.dim:
        raise ShapeError("OOD images do not match the test set dimensionality")
    return _evaluate_all(config, id_data, ood_features, config.output_dir)


def cmd_toy3(config: ExperimentConfig) -> dict:
    """3-class experiment: train on classes 0-2, score classes 3+ as OOD."""
    _require_files(config, ("train_images", "train_labels", "test_images", "test_labels"))
    out_root = config.output_dir / TOY3_DIR
    out_root.mkdir(parents=True, exist_ok=True)

    train_data = _load_train_data(config)
    kept_train, _ = subset_classes(train_data, TOY3_CLASSES)
    test_data = load_dataset(config.paths.test_images, config.paths.test_labels)
    kept_test, dropped_test = subset_classes(test_data, TOY3_CLASSES)
    if dropped_test.n == 0:
        raise ConfigError("paths.test_labels: no classes beyond 0-2 to use as OOD")

    manifest = _train_models(config, kept_train, out_root)
    reports = _evaluate_all(config, kept_test, dropped_test.features, out_root)

    summary = {"ood_original_labels": sorted(set(dropped_test.labels.tolist()))}
    if "OVNNI" in reports:
        models_dir = out_root / MODELS_DIR
        cache: dict = {}
        scores_id = _method_scores("OVNNI", models_dir, cache, kept_test.features, config)
        scores_ood = _method_scores("OVNNI", models_dir, cache, dropped_test.features, config)
        summary["ovnni_median_conf_id"] = float(np.median(scores_id.max(axis=1)))
        summary["ovnni_median_conf_ood"] = float(np.median(scores_ood.max(axis=1)))
        summary["ovnni_ood_below_half"] = float((scores_ood.max(axis=1) < 0.5).mean())
    with open(out_root / "toy3_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    return {"reports": reports, "summary": summary, "manifest": manifest}


SYNTH_FILES = {
    "train_images": "synth-train-images.idx",
    "train_labels": "synth-train-labels.idx",
    "test_images": "synth-test-images.idx",
    "test_labels": "synth-test-labels.idx",
    "ood_images": "synth-ood-images.idx",
    "ood_labels": "synth-ood-labels.idx",
}


def _blob_means(n_classes: int, size: int) -> np.ndarray:
    """One mean image per class: a bright column block on a dark background."""
    means = np.full((n_classes, size, size), 0.2)
    bounds = np.linspace(0, size, n_classes + 1).astype(int)
    for c in range(n_classes):
        means[c, :, bounds[c]:bounds[c + 1]] = 0.8
    return means.reshape(n_classes, size * size)


def _ood_mean(size: int) -> np.ndarray:
    """A bright row block: off the class manifold but in the same pixel range."""
    mean = np.full((size, size), 0.2)
    mean[: size // 2, :] = 0.8
    return mean.reshape(1, size * size)


def _quantize(features: np.ndarray, size: int) -> np.ndarray:
    clipped = np.clip(features, 0.0, 1.0)
    return np.round(clipped * 255.0).astype(np.uint8).reshape(-1, size, size)


def cmd_synth(config: ExperimentConfig) -> dict:
    """Write deterministic blob datasets in IDX format for self-tests."""
    spec = config.synth
    if spec.image_size < spec.n_classes:
        raise ConfigError("synth.image_size: need at least one pixel column per class")
    seed = config.train.seed
    out = config.output_dir
    out.mkdir(parents=True, exist_ok=True)
    size = spec.image_size

    means = _blob_means(spec.n_classes, size)
    train_raw = synth_blobs(means, spec.std, spec.n_train_per_class, seed)
    test_raw = synth_blobs(means, spec.std, spec.n_test_per_class, seed + 1)
    ood_raw = synth_blobs(_ood_mean(size), spec.std, spec.n_ood, seed + 2)

    payloads = {
        "train_images": write_idx_images(_quantize(train_raw.features, size)),
        "train_labels": write_idx_labels(train_raw.labels),
        "test_images": write_idx_images(_quantize(test_raw.features, size)),
        "test_labels": write_idx_labels(test_raw.labels),
        "ood_images": write_idx_images(_quantize(ood_raw.features, size)),
        "ood_labels": write_idx_labels(np.zeros(ood_raw.n, dtype=np.int64)),
    }
    paths = {}
    for key, payload in payloads.items():
        path = out / SYNTH_FILES[key]
        path.write_bytes(payload)
        paths[key] = str(path)

    manifest = RunManifest(
        config_hash=config_hash(config),
        seeds={"synth": seed},
        wall_clock={},
        artifacts=sorted(SYNTH_FILES.values()) + ["synth-manifest.json"],
    )
    manifest.save(out / "synth-manifest.json")
    return {"paths": paths, "manifest": manifest}
