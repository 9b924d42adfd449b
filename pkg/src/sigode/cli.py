"""Command-line entry points.

generate            climate CSV or synthetic climate -> dataset CSV with y_cohorts
train               fit the latent-ODE model or a recurrent baseline
eval-extrapolate    drop/encode/extrapolate test windows, write report + figures
eval-interpolate    seen/unseen interpolation test, write report + figures
plot                re-render figures from a report's companion CSVs
selftest            run the gradient / solver / disease-model property suites

All outputs are reproducible from the recorded seeds; commands exit nonzero
with a diagnostic on stderr for any failure.
"""

from __future__ import annotations

import argparse
import sys
from pathlib import Path

from .climate import ClimateCSVError, load_climate_csv, synth_climate
from .config import ConfigError, load_generate_config, load_train_config
from .experiments import run_extrapolation_test, run_interpolation_test, write_report
from .sigatoka import generate_infection_series, load_dataset_csv, save_dataset_csv
from .training import (
    CheckpointError,
    TrainingDivergedError,
    load_checkpoint,
    save_checkpoint,
    train_model,
)


def _build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="sigode",
        description="Black Sigatoka infection-risk generation and latent-ODE forecasting.")
    sub = parser.add_subparsers(dest="command", required=True)

    gen = sub.add_parser("generate", help="produce a dataset CSV (climate + infection risk)")
    source = gen.add_mutually_exclusive_group(required=True)
    source.add_argument("--climate", type=Path, help="input climate CSV")
    source.add_argument("--synthetic", action="store_true", help="synthesize the climate")
    gen.add_argument("--seed", type=int, default=0, help="seed for --synthetic")
    gen.add_argument("--n", type=int, default=1460, help="points for --synthetic (1460 = 1 year)")
    gen.add_argument("--coordinate-id", default="synthetic")
    gen.add_argument("--config", type=Path, help="survival params / synthesis profile overrides")
    gen.add_argument("--out", type=Path, required=True, help="output dataset CSV")

    tr = sub.add_parser("train", help="train a model and write a checkpoint")
    tr.add_argument("--data", type=Path, action="append", required=True,
                    help="dataset CSV (repeat for multi-region training)")
    tr.add_argument("--config", type=Path, help="training config (flat key = value file)")
    tr.add_argument("--model", choices=("latent_ode", "rnn", "lstm"), default="latent_ode")
    tr.add_argument("--seed", type=int, default=None, help="overrides the config seed")
    tr.add_argument("--drop-rate", type=float, default=None,
                    help="baseline training drop rate (baselines retrain per rate)")
    tr.add_argument("--quiet", action="store_true")
    tr.add_argument("--out", type=Path, required=True, help="checkpoint path")

    for name, help_text in (("eval-extrapolate", "score MSE on the extrapolated points"),
                            ("eval-interpolate", "score MSE on seen vs unseen points")):
        ev = sub.add_parser(name, help=help_text)
        ev.add_argument("--ckpt", type=Path, required=True)
        ev.add_argument("--data", type=Path, required=True)
        ev.add_argument("--drop-rate", type=float, required=True)
        ev.add_argument("--seed", type=int, default=None,
                        help="drop-pattern seed (default: checkpoint seed)")
        ev.add_argument("--tag", default=None, help="dataset tag (default: file stem)")
        ev.add_argument("--out-dir", type=Path, required=True)
        ev.add_argument("--no-figures", action="store_true", help="write the report only")

    pl = sub.add_parser("plot", help="re-render figures for an existing report")
    pl.add_argument("--report", type=Path, required=True)
    pl.add_argument("--out-dir", type=Path, default=None,
                    help="default: the report's directory")

    st = sub.add_parser("selftest", help="run the built-in property suites")
    st.add_argument("--thorough", action="store_true")
    return parser


def _cmd_generate(args) -> int:
    params, profile = load_generate_config(args.config)
    if args.synthetic:
        series = synth_climate(args.seed, args.n, profile, coordinate_id=args.coordinate_id)
    else:
        series = load_climate_csv(args.climate)
    dataset = generate_infection_series(series, params)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_dataset_csv(dataset, args.out)
    wet = int((dataset.y > 0).sum())
    print(f"wrote {args.out} ({len(dataset)} points, {wet} with nonzero risk)")
    return 0


def _cmd_train(args) -> int:
    overrides = {}
    if args.seed is not None:
        overrides["seed"] = args.seed
    if args.drop_rate is not None:
        overrides["drop_rate"] = args.drop_rate
    cfg = load_train_config(args.config, **overrides)
    if args.model == "latent_ode" and cfg.drop_rate > 0.0:
        raise ConfigError("the latent-ODE model trains without drops; "
                          "--drop-rate applies to rnn/lstm baselines only")
    datasets = [load_dataset_csv(p) for p in args.data]
    log = None if args.quiet else (lambda msg: print(msg, flush=True))
    ckpt = train_model(datasets, cfg, kind=args.model, log=log)
    args.out.parent.mkdir(parents=True, exist_ok=True)
    save_checkpoint(ckpt, args.out)
    print(f"wrote {args.out} (best epoch {ckpt.epoch}, val_mse {ckpt.val_mse:.6g})")
    return 0


def _cmd_eval(args, protocol: str) -> int:
    from .plotting import emit_report_plots  # matplotlib import deferred to use

    ckpt = load_checkpoint(args.ckpt)
    dataset = load_dataset_csv(args.data)
    tag = args.tag if args.tag is not None else args.data.stem
    runner = run_extrapolation_test if protocol == "extrapolation" else run_interpolation_test
    report = runner(ckpt, dataset, args.drop_rate, seed=args.seed, dataset_tag=tag)
    args.out_dir.mkdir(parents=True, exist_ok=True)
    report_path = args.out_dir / "report.csv"
    write_report(report, report_path)
    n_files = 0
    if not args.no_figures:
        n_files = len(emit_report_plots(report, args.out_dir))
    print(f"wrote {report_path} ({len(report.results)} windows, "
          f"mean_mse {report.mean_mse:.6g}) and {n_files} figure files")
    return 0


def _cmd_plot(args) -> int:
    from .experiments import read_report
    from .plotting import emit_plot, load_trace_csv

    report = read_report(args.report)
    windows_dir = args.report.parent / "windows"
    csvs = sorted(windows_dir.glob("window_*.csv"))
    if not csvs:
        raise FileNotFoundError(f"no window CSVs under {windows_dir}")
    out_dir = args.out_dir if args.out_dir is not None else args.report.parent
    out_dir = out_dir / "windows"
    out_dir.mkdir(parents=True, exist_ok=True)
    for csv_path in csvs:
        trace = load_trace_csv(csv_path)
        title = (f"{report.model_tag} | {report.protocol} | drop {report.drop_rate:g} "
                 f"| window @{trace.window_start}")
        emit_plot(trace, out_dir / csv_path.stem, title=title)
    print(f"re-rendered {len(csvs)} figures into {out_dir}")
    return 0


def _cmd_selftest(args) -> int:
    from .selfcheck import run_all

    results = run_all(fast=not args.thorough)
    failed = 0
    for name, passed, detail in results:
        status = "PASS" if passed else "FAIL"
        print(f"[{status}] {name}: {detail}")
        failed += 0 if passed else 1
    if failed:
        print(f"{failed}/{len(results)} checks failed", file=sys.stderr)
        return 1
    print(f"all {len(results)} checks passed")
    return 0


def main(argv: list[str] | None = None) -> int:
    args = _build_parser().parse_args(argv)
    try:
        if args.command == "generate":
            return _cmd_generate(args)
        if args.command == "train":
            return _cmd_train(args)
        if args.command == "eval-extrapolate":
            return _cmd_eval(args, "extrapolation")
        if args.command == "eval-interpolate":
            return _cmd_eval(args, "interpolation")
        if args.command == "plot":
            return _cmd_plot(args)
        if args.command == "selftest":
            return _cmd_selftest(args)
        raise AssertionError(f"unhandled command {args.command}")
    except (ClimateCSVError, CheckpointError, ConfigError, TrainingDivergedError,
            FileNotFoundError, ValueError) as exc:
        print(f"sigode {args.command}: error: {exc}", file=sys.stderr)
        return 1


if __name__ == "__main__":
    sys.exit(main())
