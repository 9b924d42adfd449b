"""Deterministic figure emission for evaluated windows.

Figures are static SVG line charts (ground truth vs prediction, with the
encode/extrapolate boundary and distinct markers for encoder-seen vs unseen
truth points); every figure gets a companion CSV of the plotted values with
columns t,truth,pred,seen_flag. Identical inputs produce byte-identical
files: the SVG hash salt is pinned and the date metadata stripped.
"""

from __future__ import annotations

from pathlib import Path

import matplotlib

matplotlib.use("Agg")
matplotlib.rcParams["svg.hashsalt"] = "sigode"

import matplotlib.pyplot as plt

import numpy as np

from .experiments import ExperimentReport, WindowTrace


def trace_csv_text(trace: WindowTrace) -> str:
    lines = ["t,truth,pred,seen_flag"]
    for t, truth, pred, seen in zip(trace.times, trace.truth, trace.pred, trace.seen):
        pred_text = "" if np.isnan(pred) else repr(float(pred))
        lines.append(f"{repr(float(t))},{repr(float(truth))},{pred_text},{int(seen)}")
    return "\n".join(lines) + "\n"


def emit_plot(trace: WindowTrace, path: str | Path, title: str = "") -> tuple[Path, Path]:
    """Render one window to <path>.svg and <path>.csv; returns both paths."""
    if len(trace.pred) == 0 or not np.any(np.isfinite(trace.pred)):
        raise ValueError("nothing to plot: prediction is empty")
    if not (len(trace.times) == len(trace.truth) == len(trace.pred) == len(trace.seen)):
        raise ValueError("trace series are not aligned")

    path = Path(path)
    svg_path = path.with_suffix(".svg")
    csv_path = path.with_suffix(".csv")

    fig, ax = plt.subplots(figsize=(9, 4))
    ax.plot(trace.times, trace.truth, color="0.35", lw=0.9, label="ground truth")
    finite = np.isfinite(trace.pred)
    ax.plot(trace.times[finite], trace.pred[finite], color="orangered", lw=1.4,
            label="prediction")
    ax.plot(trace.times[trace.seen], trace.truth[trace.seen], "o", ms=3,
            color="tab:blue", label="seen truth")
    if np.any(~trace.seen):
        ax.plot(trace.times[~trace.seen], trace.truth[~trace.seen], "x", ms=4,
                color="tab:red", label="unseen truth")
    if trace.boundary is not None:
        ax.axvline(trace.boundary, color="0.6", ls="--", lw=1.0, label="encode boundary")
    ax.set_xlabel("grid index (6-hourly steps)")
    ax.set_ylabel("infection risk (cohorts)")
    if title:
        ax.set_title(title)
    ax.legend(loc="upper left", fontsize=8)
    ax.grid(alpha=0.25)
    fig.tight_layout()
    fig.savefig(svg_path, format="svg", metadata={"Date": None})
    plt.close(fig)

    csv_path.write_text(trace_csv_text(trace))
    return svg_path, csv_path


def emit_report_plots(report: ExperimentReport, out_dir: str | Path) -> list[Path]:
    """One figure + CSV per evaluated window, under out_dir/windows/."""
    out_dir = Path(out_dir) / "windows"
    out_dir.mkdir(parents=True, exist_ok=True)
    written = []
    for trace in report.traces:
        base = out_dir / f"window_{trace.window_start:06d}"
        title = (f"{report.model_tag} | {report.protocol} | drop {report.drop_rate:g} "
                 f"| window @{trace.window_start}")
        svg, csv = emit_plot(trace, base, title=title)
        written.extend([svg, csv])
    return written


def load_trace_csv(path: str | Path) -> WindowTrace:
    """Rebuild a plottable trace from a companion CSV."""
    lines = Path(path).read_text().splitlines()
    if not lines or lines[0] != "t,truth,pred,seen_flag":
        raise ValueError(f"{path} is not a window trace CSV")
    t, truth, pred, seen = [], [], [], []
    for line in lines[1:]:
        f0, f1, f2, f3 = line.split(",")
        t.append(float(f0))
        truth.append(float(f1))
        pred.append(float(f2) if f2 else float("nan"))
        seen.append(bool(int(f3)))
    times = np.array(t)
    return WindowTrace(
        window_start=int(times[0]),
        times=times,
        truth=np.array(truth),
        pred=np.array(pred),
        seen=np.array(seen, dtype=bool),
        boundary=None,
    )
