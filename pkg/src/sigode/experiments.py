"""Evaluation protocols and report files.

Extrapolation: drop encoder points from each test window, encode the
survivors, predict the whole window plus the horizon, and score MSE on the
horizon points only, in denormalized cohort units. Interpolation: predict
every grid point of a horizon-free window and score seen (kept) and unseen
(dropped) points separately. Reports are pure functions of
(checkpoint, dataset, drop rate, seed).
"""

from __future__ import annotations

import subprocess
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from . import __version__
from .models import Window
from .sigatoka import DiseaseDataset
from .training import (
    ModelCheckpoint,
    apply_drop,
    dataset_predictors,
    drop_rng,
    make_windows,
)

INTERPOLATION_RATES = (0.0, 0.3, 0.7, 0.9)
EXTRAPOLATION_RATES = (0.0, 0.3, 0.5, 0.7)


def build_tag() -> str:
    """git describe of the working tree when available, else the version."""
    try:
        out = subprocess.run(
            ["git", "describe", "--always", "--dirty"],
            capture_output=True, text=True, timeout=5,
            cwd=Path(__file__).resolve().parent,
        )
        if out.returncode == 0 and out.stdout.strip():
            return out.stdout.strip()
    except OSError:
        pass
    return f"sigode-{__version__}"


@dataclass(frozen=True)
class WindowResult:
    window_start: int
    mse: float
    mse_seen: float = float("nan")
    mse_unseen: float = float("nan")


@dataclass(frozen=True)
class WindowTrace:
    """Everything needed to plot one evaluated window (denormalized units)."""

    window_start: int
    times: np.ndarray            # absolute grid indices
    truth: np.ndarray
    pred: np.ndarray
    seen: np.ndarray             # bool per grid point: observed by the encoder
    boundary: int | None         # encode/extrapolate boundary, None for interpolation


@dataclass
class ExperimentReport:
    protocol: str                # "extrapolation" | "interpolation"
    model_tag: str
    dataset_tag: str
    drop_rate: float
    seed: int
    build_tag: str = field(default_factory=build_tag)
    results: list[WindowResult] = field(default_factory=list)
    traces: list[WindowTrace] = field(default_factory=list)

    @property
    def mean_mse(self) -> float:
        if not self.results:
            return float("nan")
        return float(np.mean([r.mse for r in self.results]))

    @property
    def unseen_empty(self) -> bool:
        return self.protocol == "interpolation" and self.drop_rate == 0.0


def _denorm_y(values: np.ndarray, ckpt: ModelCheckpoint) -> np.ndarray:
    return ckpt.stats.denormalize("y", values)


def _eval_window(ckpt: ModelCheckpoint, model, window: Window, predictors,
                 drop_rate: float, seed: int) -> tuple[Window, np.ndarray]:
    """Drop, predict the full grid (posterior mean), denormalize."""
    rng = drop_rng(seed, window.dataset_idx, window.start)
    dropped = apply_drop(window, drop_rate, rng)
    if ckpt.kind == "latent_ode":
        pred = model.forward([dropped], predictors, dropped.target_times,
                             noise=None, solver_step=ckpt.train_config.solver_step).data[0]
    else:
        times, out = model.predict([dropped], predictors, dropped.horizon)
        # recurrent baselines emit only at consumed times; scatter onto the grid
        pred = np.full(len(dropped.target_times), np.nan)
        pred[times.astype(int)] = out.data[0]
    return dropped, _denorm_y(pred, ckpt)


def run_extrapolation_test(ckpt: ModelCheckpoint, ds: DiseaseDataset, drop_rate: float,
                           seed: int | None = None, dataset_tag: str = "dataset") -> ExperimentReport:
    """Per test window: encode the surviving points, predict through the
    horizon, score MSE on the horizon points only (cohort units)."""
    seed = ckpt.seed if seed is None else seed
    cfg = ckpt.train_config
    windows = make_windows(ds, "test", cfg, ckpt.stats)
    model = ckpt.build()
    predictors = dataset_predictors(ds, ckpt.stats)
    report = ExperimentReport(
        protocol="extrapolation", model_tag=ckpt.kind, dataset_tag=dataset_tag,
        drop_rate=drop_rate, seed=seed)

    for window in windows:
        dropped, pred = _eval_window(ckpt, model, window, predictors, drop_rate, seed)
        truth = _denorm_y(window.target_y, ckpt)
        tail = slice(window.n_encode, None)
        mse = float(np.mean((pred[tail] - truth[tail]) ** 2))
        report.results.append(WindowResult(window.start, mse))

        seen = np.zeros(len(window.target_times), dtype=bool)
        seen[:window.n_encode][dropped.mask] = True
        report.traces.append(WindowTrace(
            window_start=window.start,
            times=window.start + window.target_times,
            truth=truth,
            pred=pred,
            seen=seen,
            boundary=window.start + window.n_encode,
        ))
    return report


def run_interpolation_test(ckpt: ModelCheckpoint, ds: DiseaseDataset, drop_rate: float,
                           seed: int | None = None, dataset_tag: str = "dataset") -> ExperimentReport:
    """Predict every grid point of horizon-free test windows; report MSE on
    encoder-seen and unseen points separately."""
    if ckpt.kind != "latent_ode":
        raise ValueError("interpolation at unseen grid points needs the latent-ODE model")
    seed = ckpt.seed if seed is None else seed
    cfg = ckpt.train_config
    windows = make_windows(ds, "test-interp", cfg, ckpt.stats)
    model = ckpt.build()
    predictors = dataset_predictors(ds, ckpt.stats)
    report = ExperimentReport(
        protocol="interpolation", model_tag=ckpt.kind, dataset_tag=dataset_tag,
        drop_rate=drop_rate, seed=seed)

    for window in windows:
        dropped, pred = _eval_window(ckpt, model, window, predictors, drop_rate, seed)
        truth = _denorm_y(window.target_y, ckpt)
        err = (pred - truth) ** 2
        seen = dropped.mask
        mse = float(np.mean(err))
        mse_seen = float(np.mean(err[seen]))
        mse_unseen = float(np.mean(err[~seen])) if (~seen).any() else float("nan")
        report.results.append(WindowResult(window.start, mse, mse_seen, mse_unseen))
        report.traces.append(WindowTrace(
            window_start=window.start,
            times=window.start + window.target_times,
            truth=truth,
            pred=pred,
            seen=seen.copy(),
            boundary=None,
        ))
    return report


REPORT_MAGIC = "# sigode-report-v1"


def write_report(report: ExperimentReport, path: str | Path) -> None:
    """Line-delimited report: a commented header block, then per-window rows."""
    lines = [
        REPORT_MAGIC,
        f"# protocol: {report.protocol}",
        f"# model_tag: {report.model_tag}",
        f"# dataset_tag: {report.dataset_tag}",
        f"# drop_rate: {report.drop_rate!r}",
        f"# seed: {report.seed}",
        f"# build_tag: {report.build_tag}",
        f"# windows: {len(report.results)}",
        f"# mean_mse: {report.mean_mse!r}",
    ]
    if report.unseen_empty:
        lines.append("# note: drop rate 0 leaves no unseen points; mse_unseen is nan")
    if report.protocol == "interpolation":
        lines.append("window_start,mse,mse_seen,mse_unseen")
        for r in report.results:
            lines.append(f"{r.window_start},{r.mse!r},{r.mse_seen!r},{r.mse_unseen!r}")
    else:
        lines.append("window_start,mse")
        for r in report.results:
            lines.append(f"{r.window_start},{r.mse!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def read_report(path: str | Path) -> ExperimentReport:
    text = Path(path).read_text().splitlines()
    if not text or text[0] != REPORT_MAGIC:
        raise ValueError(f"{path} is not a sigode report")
    header: dict[str, str] = {}
    rows: list[WindowResult] = []
    for line in text[1:]:
        if line.startswith("# ") and ":" in line:
            key, _, value = line[2:].partition(":")
            header[key.strip()] = value.strip()
        elif line and not line.startswith("#") and not line.startswith("window_start"):
            parts = line.split(",")
            values = [float(p) for p in parts[1:]]
            rows.append(WindowResult(int(parts[0]), *values))
    report = ExperimentReport(
        protocol=header["protocol"],
        model_tag=header["model_tag"],
        dataset_tag=header["dataset_tag"],
        drop_rate=float(header["drop_rate"]),
        seed=int(header["seed"]),
        build_tag=header["build_tag"],
        results=rows,
    )
    return report
