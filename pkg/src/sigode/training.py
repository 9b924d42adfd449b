"""Windowing, drop simulation, loss, the optimization loop, and checkpoints.

Splits are chronological (train, then validation, then test) so no window
ever looks across a boundary. The latent-ODE model trains on full windows
(drops are a test-time protocol for it); recurrent baselines train on
windows dropped at their evaluation rate.
"""

from __future__ import annotations

import json
import math
import os
from dataclasses import asdict, dataclass, replace
from pathlib import Path

import numpy as np

from .autodiff import Adam, Parameter, Tensor, backward
from .climate import CLIMATE_VARS, STEP_HOURS, NormalizationStats, PredictorInterpolant, normalize
from .models import LatentPosterior, ModelConfig, Window, build_model
from .sigatoka import DiseaseDataset

CHECKPOINT_VERSION = 1
HALF_LOG_TWO_PI = 0.5 * math.log(2.0 * math.pi)

DATASET_VARS = CLIMATE_VARS + ("y",)


class TrainingDivergedError(RuntimeError):
    """Loss went NaN/Inf; carries the epoch and batch where it happened."""


class CheckpointError(ValueError):
    """Unreadable, corrupt, or wrong-version checkpoint file."""


@dataclass(frozen=True)
class TrainConfig:
    train_window: int = 128       # encoded = reconstructed points per training window
    val_encode: int = 100
    val_extrapolate: int = 150
    train_stride: int = 32
    eval_stride: int = 50
    split_train: float = 0.8
    split_val: float = 0.1
    epochs: int = 60
    batch_size: int = 32
    learning_rate: float = 1e-3
    adam_beta1: float = 0.9
    adam_beta2: float = 0.999
    adam_eps: float = 1e-8
    kl_weight: float = 0.0
    sample_noise: bool = True
    seed: int = 0
    solver_step: float = 1.0
    drop_rate: float = 0.0        # baselines only: drop applied to their training windows
    latent_dim: int = 32
    encoder_hidden: int = 64
    dynamics_hidden: tuple[int, ...] = (64, 64)
    decoder_hidden: tuple[int, ...] = (32,)
    baseline_hidden: int = 64

    def __post_init__(self):
        if min(self.train_window, self.val_encode, self.train_stride,
               self.eval_stride, self.batch_size) < 1:
            raise ValueError("window lengths, strides, and batch size must be positive")
        if self.val_extrapolate < 0 or self.epochs < 0:
            raise ValueError("extrapolation horizon and epochs must be >= 0")
        if not (0.0 < self.split_train < 1.0 and 0.0 <= self.split_val < 1.0
                and self.split_train + self.split_val < 1.0):
            raise ValueError("split fractions must leave room for train/val/test")
        if not (0.0 <= self.drop_rate < 1.0):
            raise ValueError("drop_rate must be in [0, 1)")
        if self.solver_step <= 0.0:
            raise ValueError("solver_step must be > 0")
        # guard the documented horizon: 150 six-hourly steps is 37.5 days
        if self.val_extrapolate == 150 and self.horizon_days != 37.5:
            raise ValueError("150-step horizon no longer equals 37.5 days; grid step changed?")

    @property
    def horizon_days(self) -> float:
        return self.val_extrapolate * STEP_HOURS / 24.0

    def model_config(self, kind: str) -> ModelConfig:
        return ModelConfig(
            kind=kind,
            latent_dim=self.latent_dim,
            encoder_hidden=self.encoder_hidden,
            dynamics_hidden=tuple(self.dynamics_hidden),
            decoder_hidden=tuple(self.decoder_hidden),
            baseline_hidden=self.baseline_hidden,
        )


def split_bounds(n: int, cfg: TrainConfig) -> dict[str, tuple[int, int]]:
    """Chronological [start, stop) index ranges: train, then val, then test."""
    train_end = int(n * cfg.split_train)
    val_end = int(n * (cfg.split_train + cfg.split_val))
    return {"train": (0, train_end), "val": (train_end, val_end), "test": (val_end, n)}


def compute_dataset_stats(datasets: list[DiseaseDataset], cfg: TrainConfig) -> NormalizationStats:
    """Sample mean/std of (rh, t, cm, y) over the concatenated train splits."""
    chunks = {name: [] for name in DATASET_VARS}
    for ds in datasets:
        start, stop = split_bounds(len(ds), cfg)["train"]
        if stop - start < 2:
            raise ValueError("train split too short to compute statistics")
        for name in CLIMATE_VARS:
            chunks[name].append(getattr(ds.climate, name)[start:stop])
        chunks["y"].append(ds.y[start:stop])
    means, stds = [], []
    for name in DATASET_VARS:
        values = np.concatenate(chunks[name])
        means.append(float(np.mean(values)))
        stds.append(float(np.std(values, ddof=1)))
    return NormalizationStats(DATASET_VARS, np.array(means), np.array(stds))


def dataset_predictors(ds: DiseaseDataset, stats: NormalizationStats,
                       clamp: bool = True) -> PredictorInterpolant:
    climate_stats = NormalizationStats(
        CLIMATE_VARS,
        stats.mean[:3].copy(),
        stats.std[:3].copy(),
    )
    return PredictorInterpolant(normalize(ds.climate, climate_stats), clamp=clamp)


def _window_at(ds: DiseaseDataset, stats: NormalizationStats, start: int,
               n_encode: int, horizon: int, split: str, dataset_idx: int) -> Window:
    span = n_encode + horizon
    y_norm = stats.normalize("y", ds.y[start:start + span])
    obs = np.column_stack([
        y_norm[:n_encode],
        stats.normalize("rh", ds.climate.rh[start:start + n_encode]),
        stats.normalize("t", ds.climate.t[start:start + n_encode]),
        stats.normalize("cm", ds.climate.cm[start:start + n_encode]),
    ])
    return Window(
        start=start,
        n_encode=n_encode,
        horizon=horizon,
        times=np.arange(n_encode, dtype=np.float64),
        observations=obs,
        mask=np.ones(n_encode, dtype=bool),
        target_times=np.arange(span, dtype=np.float64),
        target_y=y_norm,
        split=split,
        dataset_idx=dataset_idx,
    )


def make_windows(ds: DiseaseDataset, phase: str, cfg: TrainConfig,
                 stats: NormalizationStats, dataset_idx: int = 0) -> list[Window]:
    """Sliding windows for one phase, confined to that phase's split.

    train: length train_window, horizon 0, stride train_stride.
    val/test: encode val_encode + horizon val_extrapolate, stride eval_stride.
    test-interp: encode val_encode, horizon 0 (interpolation protocol).
    """
    if phase == "train":
        split, n_encode, horizon, stride = "train", cfg.train_window, 0, cfg.train_stride
    elif phase in ("val", "test"):
        split, n_encode, horizon, stride = phase, cfg.val_encode, cfg.val_extrapolate, cfg.eval_stride
    elif phase == "test-interp":
        split, n_encode, horizon, stride = "test", cfg.val_encode, 0, cfg.eval_stride
    else:
        raise ValueError(f"unknown phase {phase!r}")

    lo, hi = split_bounds(len(ds), cfg)[split]
    span = n_encode + horizon
    if hi - lo < span:
        raise ValueError(
            f"{split} split holds {hi - lo} points; phase {phase!r} needs windows of {span}")
    windows = []
    for start in range(lo, hi - span + 1, stride):
        windows.append(_window_at(ds, stats, start, n_encode, horizon, split, dataset_idx))
    return windows


def apply_drop(window: Window, rate: float, rng: np.random.Generator) -> Window:
    """Mask out exactly round(rate * n_encode) encoder points, uniformly
    without replacement. Targets are untouched; deterministic given the rng."""
    if not (0.0 <= rate < 1.0):
        raise ValueError("drop rate must be in [0, 1)")
    if not window.mask.all():
        raise ValueError("apply_drop expects an undropped window")
    n = window.n_encode
    n_drop = int(round(rate * n))
    if n_drop >= n:
        raise ValueError(f"drop of {n_drop}/{n} points would leave no observations")
    if n_drop == 0:
        return window
    dropped = rng.choice(n, size=n_drop, replace=False)
    mask = np.ones(n, dtype=bool)
    mask[dropped] = False
    kept = np.flatnonzero(mask)
    return replace(
        window,
        times=window.times[kept],
        observations=window.observations[kept],
        mask=mask,
    )


def drop_rng(seed: int, dataset_idx: int, window_start: int) -> np.random.Generator:
    """One stream per (seed, dataset, window) so drop patterns are reproducible."""
    return np.random.default_rng([seed, dataset_idx, window_start])


def gaussian_nll(pred: Tensor, target: np.ndarray) -> Tensor:
    """Mean negative log likelihood of targets under unit-variance Gaussians
    centered on the predictions: 0.5*ln(2*pi) + (y - yhat)^2 / 2 per point."""
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape:
        raise ValueError(f"prediction shape {pred.shape} != target shape {target.shape}")
    if target.size < 1:
        raise ValueError("need at least one point")
    residual = pred - Tensor(target)
    return (residual * residual).mean() * 0.5 + HALF_LOG_TWO_PI


def kl_standard_normal(posterior: LatentPosterior) -> Tensor:
    """KL(q || N(0, I)) averaged over the batch."""
    mu, sigma = posterior.mu, posterior.sigma
    batch = mu.shape[0]
    total = (mu * mu + sigma * sigma - sigma.log() * 2.0 - 1.0).sum() * 0.5
    return total / batch


@dataclass
class ModelCheckpoint:
    format_version: int
    kind: str
    params: dict[str, np.ndarray]
    model_config: ModelConfig
    train_config: TrainConfig
    stats: NormalizationStats
    seed: int
    epoch: int
    val_mse: float = float("nan")

    def build(self):
        params = {name: Parameter(name, arr.copy()) for name, arr in self.params.items()}
        return build_model(self.model_config, params=params)


def _snapshot(params: dict[str, Parameter]) -> dict[str, np.ndarray]:
    return {name: p.data.copy() for name, p in params.items()}


def _batched(windows: list[Window], batch_size: int, rng: np.random.Generator) -> list[list[Window]]:
    """Seeded shuffle into minibatches, each homogeneous in dataset."""
    by_dataset: dict[int, list[Window]] = {}
    for w in windows:
        by_dataset.setdefault(w.dataset_idx, []).append(w)
    batches: list[list[Window]] = []
    for idx in sorted(by_dataset):
        pool = by_dataset[idx]
        order = rng.permutation(len(pool))
        for lo in range(0, len(pool), batch_size):
            batches.append([pool[i] for i in order[lo:lo + batch_size]])
    if len(batches) > 1:
        batches = [batches[i] for i in rng.permutation(len(batches))]
    return batches


def _val_mse(model, val_windows: list[Window], predictors: list[PredictorInterpolant],
             stats: NormalizationStats, cfg: TrainConfig) -> float:
    """Mean extrapolation MSE (cohort units) over the validation windows."""
    if not val_windows:
        return float("nan")
    y_std = stats.std[stats.index("y")]
    errors = []
    for w in val_windows:
        interp = predictors[w.dataset_idx]
        if model.kind == "latent_ode":
            pred = model.forward([w], interp, w.target_times, noise=None,
                                 solver_step=cfg.solver_step).data[0]
            tail = pred[w.n_encode:]
        else:
            _, out = model.predict([w], interp, w.horizon)
            tail = out.data[0][w.n_kept:]
        truth = w.target_y[w.n_encode:]
        errors.append(float(np.mean(((tail - truth) * y_std) ** 2)))
    return float(np.mean(errors))


def train_model(datasets: DiseaseDataset | list[DiseaseDataset], cfg: TrainConfig,
                kind: str = "latent_ode", log=None) -> ModelCheckpoint:
    """Adam over the Gaussian NLL of window reconstructions.

    The latent-ODE model trains on full (undropped) windows; baselines train
    on windows dropped at cfg.drop_rate, teacher-forced on their kept points.
    Keeps the parameters with the best validation extrapolation MSE.
    Deterministic given cfg.seed. Raises TrainingDivergedError on NaN loss.
    """
    if isinstance(datasets, DiseaseDataset):
        datasets = [datasets]
    stats = compute_dataset_stats(datasets, cfg)
    predictors = [dataset_predictors(ds, stats) for ds in datasets]

    train_windows: list[Window] = []
    val_windows: list[Window] = []
    for idx, ds in enumerate(datasets):
        train_windows.extend(make_windows(ds, "train", cfg, stats, dataset_idx=idx))
        try:
            val_windows.extend(make_windows(ds, "val", cfg, stats, dataset_idx=idx))
        except ValueError:
            pass  # val split shorter than one window: fall back to final params

    if kind != "latent_ode" and cfg.drop_rate > 0.0:
        train_windows = [
            apply_drop(w, cfg.drop_rate, drop_rng(cfg.seed, w.dataset_idx, w.start))
            for w in train_windows
        ]

    model = build_model(cfg.model_config(kind), seed=cfg.seed)
    opt = Adam(list(model.params.values()), lr=cfg.learning_rate,
               beta1=cfg.adam_beta1, beta2=cfg.adam_beta2, eps=cfg.adam_eps)
    rng = np.random.default_rng([cfg.seed, 0xA11CE])

    best = _snapshot(model.params)
    best_mse = _val_mse(model, val_windows, predictors, stats, cfg)
    best_epoch = 0

    for epoch in range(1, cfg.epochs + 1):
        for batch_no, batch in enumerate(_batched(train_windows, cfg.batch_size, rng)):
            interp = predictors[batch[0].dataset_idx]
            opt.zero_grad()
            try:
                if kind == "latent_ode":
                    noise = None
                    if cfg.sample_noise:
                        noise = rng.standard_normal((len(batch), cfg.latent_dim))
                    target = np.stack([w.target_y for w in batch])
                    posterior, pred = model.posterior_and_forward(
                        batch, interp, batch[0].target_times, noise, cfg.solver_step)
                    loss = gaussian_nll(pred, target)
                    if cfg.kl_weight > 0.0:
                        loss = loss + kl_standard_normal(posterior) * cfg.kl_weight
                    loss_value = float(loss.data)
                    backward(loss)
                else:
                    loss_value = 0.0
                    scale = 1.0 / len(batch)
                    for w in batch:
                        target = w.target_y[:w.n_encode][w.mask][None, :]
                        _, out = model.predict([w], interp, horizon=0)
                        loss = gaussian_nll(out, target) * scale
                        loss_value += float(loss.data)
                        backward(loss)
            except (AssertionError, FloatingPointError) as exc:
                # overflow in the graph trips the finite-value assertion first
                raise TrainingDivergedError(
                    f"forward pass became non-finite at epoch {epoch}, batch {batch_no}: {exc}")
            if not np.isfinite(loss_value):
                raise TrainingDivergedError(
                    f"loss became non-finite at epoch {epoch}, batch {batch_no}")
            opt.step()

        val_mse = _val_mse(model, val_windows, predictors, stats, cfg)
        if log is not None:
            log(f"epoch {epoch}/{cfg.epochs}  val_mse={val_mse:.6g}")
        if not val_windows:
            best, best_mse, best_epoch = _snapshot(model.params), val_mse, epoch
        elif not np.isfinite(best_mse) or val_mse < best_mse:
            best, best_mse, best_epoch = _snapshot(model.params), val_mse, epoch

    return ModelCheckpoint(
        format_version=CHECKPOINT_VERSION,
        kind=kind,
        params=best,
        model_config=cfg.model_config(kind),
        train_config=cfg,
        stats=stats,
        seed=cfg.seed,
        epoch=best_epoch,
        val_mse=best_mse,
    )


def save_checkpoint(ckpt: ModelCheckpoint, path: str | Path) -> None:
    """Versioned JSON container; writes are atomic (temp file + rename) and
    byte-deterministic, so save -> load -> save is the identity."""
    payload = {
        "format_version": ckpt.format_version,
        "kind": ckpt.kind,
        "seed": ckpt.seed,
        "epoch": ckpt.epoch,
        "val_mse": None if math.isnan(ckpt.val_mse) else ckpt.val_mse,
        "model_config": asdict(ckpt.model_config),
        "train_config": asdict(ckpt.train_config),
        "stats": {
            "names": list(ckpt.stats.names),
            "mean": ckpt.stats.mean.tolist(),
            "std": ckpt.stats.std.tolist(),
        },
        "params": {
            name: {"shape": list(arr.shape), "data": arr.ravel().tolist()}
            for name, arr in sorted(ckpt.params.items())
        },
    }
    path = Path(path)
    text = json.dumps(payload, sort_keys=True, indent=1)
    tmp = path.with_name(path.name + ".tmp")
    tmp.write_text(text)
    os.replace(tmp, path)


def load_checkpoint(path: str | Path) -> ModelCheckpoint:
    path = Path(path)
    try:
        payload = json.loads(path.read_text())
    except (OSError, json.JSONDecodeError) as exc:
        raise CheckpointError(f"cannot read checkpoint {path}: {exc}")
    try:
        version = payload["format_version"]
        if version != CHECKPOINT_VERSION:
            raise CheckpointError(
                f"checkpoint version {version} unsupported (expected {CHECKPOINT_VERSION})")
        model_cfg = payload["model_config"]
        model_cfg["dynamics_hidden"] = tuple(model_cfg["dynamics_hidden"])
        model_cfg["decoder_hidden"] = tuple(model_cfg["decoder_hidden"])
        train_cfg = payload["train_config"]
        train_cfg["dynamics_hidden"] = tuple(train_cfg["dynamics_hidden"])
        train_cfg["decoder_hidden"] = tuple(train_cfg["decoder_hidden"])
        params = {}
        for name, blob in payload["params"].items():
            arr = np.array(blob["data"], dtype=np.float64).reshape(blob["shape"])
            params[name] = arr
        val_mse = payload["val_mse"]
        return ModelCheckpoint(
            format_version=version,
            kind=payload["kind"],
            params=params,
            model_config=ModelConfig(**model_cfg),
            train_config=TrainConfig(**train_cfg),
            stats=NormalizationStats(
                tuple(payload["stats"]["names"]),
                np.array(payload["stats"]["mean"]),
                np.array(payload["stats"]["std"]),
            ),
            seed=payload["seed"],
            epoch=payload["epoch"],
            val_mse=float("nan") if val_mse is None else float(val_mse),
        )
    except (KeyError, TypeError, ValueError) as exc:
        if isinstance(exc, CheckpointError):
            raise
        raise CheckpointError(f"corrupt checkpoint {path}: {exc}")
