"""Acceptance gate: every criterion prints one PASS/FAIL line.

Run with `pytest tests/test_acceptance.py -v -rA` to see the per-criterion
lines in the summary. The end-to-end criterion trains the full model once
(module-scoped fixture, a few minutes single-threaded); everything else is
seconds.
"""

import math
import subprocess
import sys
import time

import numpy as np
import pytest

from sigode.climate import ClimateSeries, synth_climate
from sigode.models import ModelConfig, RecurrentBaseline
from sigode.autodiff import Parameter, Tensor, backward
from sigode.odeint import OdeProblem, euler_integrate, rk4_integrate
from sigode.sigatoka import (
    CardinalTemperatures,
    SurvivalParams,
    cohort_infections,
    detect_wet_periods,
    generate_infection_series,
    infected_fraction,
    relative_rate,
    weibull_hazard,
)
from sigode.experiments import run_extrapolation_test, run_interpolation_test
from sigode.training import (
    TrainConfig,
    apply_drop,
    dataset_predictors,
    drop_rng,
    load_checkpoint,
    make_windows,
    save_checkpoint,
    train_model,
)

SEED_DATA = 7
SEED_TRAIN = 3

ACCEPT_CFG = TrainConfig(
    split_train=0.6, split_val=0.2,     # a 1460-point year cannot host 250-step
    epochs=300, train_stride=16,        # eval windows inside a 10% tail split
    eval_stride=10, batch_size=8, seed=SEED_TRAIN,
)

TINY_CFG_TEXT = """\
split_train = 0.6
split_val = 0.2
epochs = 2
train_stride = 64
eval_stride = 50
batch_size = 8
latent_dim = 6
encoder_hidden = 8
dynamics_hidden = 8
decoder_hidden = 6
baseline_hidden = 8
"""


def report_line(criterion: int, passed: bool, detail: str) -> None:
    print(f"ACCEPTANCE {criterion}: {'PASS' if passed else 'FAIL'} - {detail}")
    assert passed, f"criterion {criterion}: {detail}"


@pytest.fixture(scope="module")
def toy_dataset():
    return generate_infection_series(synth_climate(seed=SEED_DATA, n=1460))


@pytest.fixture(scope="module")
def trained(toy_dataset):
    t0 = time.perf_counter()
    ckpt = train_model(toy_dataset, ACCEPT_CFG, kind="latent_ode")
    return ckpt, time.perf_counter() - t0


def test_criterion_1_disease_identities():
    t0 = time.perf_counter()
    c = CardinalTemperatures()
    checks = [
        abs(relative_rate(27.2, c) - 1.0) <= 1e-12,
        abs(relative_rate(16.6, c)) <= 1e-12,
        abs(relative_rate(30.3, c)) <= 1e-12,
    ]
    for temp in np.linspace(17.0, 30.0, 27):
        checks.append(abs(weibull_hazard(32.6, float(temp)) - relative_rate(float(temp), c)) <= 1e-12)
    checks.append(infected_fraction(0.0) == 0.0)
    for f in np.linspace(0.0, 1.0, 101):
        checks.append(cohort_infections(float(f), 37.6) <= 37.6 + 1e-12)
    elapsed = time.perf_counter() - t0
    report_line(1, all(checks) and elapsed < 1.0,
                f"r/H/F/Y identities exact to 1e-12 in {elapsed:.2f}s")


def brute_force_infection_series(series, params):
    """Independent cohort-by-cohort oracle, plain Python floats."""
    n = len(series)
    wet = [series.cm[i] > 0 or series.rh[i] > 98 for i in range(n)]
    y = [0.0] * n
    i = 0
    while i < n:
        if not wet[i]:
            i += 1
            continue
        j = i
        while j + 1 < n and wet[j + 1]:
            j += 1
        if j - i + 1 >= 3:
            for launch in range(i, j + 1):
                hazard, prev = 0.0, 0.0
                for k in range(launch + 1, j + 1):
                    rate = relative_rate(float(series.t[k]), params.cardinals)
                    t_now = (k - launch) * 6.0
                    hazard += rate * ((t_now / params.alpha) ** params.gamma
                                      - ((t_now - 6.0) / params.alpha) ** params.gamma)
                    frac = 1.0 - math.exp(-hazard)
                    y[k] += params.beta * (frac - prev)
                    prev = frac
        i = j + 1
    return np.array(y)


def test_criterion_2_disease_oracle_equivalence():
    t0 = time.perf_counter()
    params = SurvivalParams()
    worst = 0.0
    for seed in range(50):
        rng = np.random.default_rng(100 + seed)
        n = int(rng.integers(6, 65))
        series = ClimateSeries(
            "acc", synth_climate(0, 1).start_time,
            rng.uniform(70, 100, n), rng.uniform(14, 33, n),
            np.where(rng.random(n) < 0.45, rng.uniform(0.0, 0.25, n), 0.0))
        fast = generate_infection_series(series, params).y
        brute = brute_force_infection_series(series, params)
        worst = max(worst, float(np.max(np.abs(fast - brute))))
    elapsed = time.perf_counter() - t0
    report_line(2, worst <= 1e-9 and elapsed < 10.0,
                f"max |impl - brute force| = {worst:.2e} on 50 series in {elapsed:.1f}s")


def test_criterion_3_wet_period_exhaustive():
    t0 = time.perf_counter()
    start = synth_climate(0, 1).start_time
    mismatches = 0
    cases = 0
    for length in range(1, 13):
        for bits in range(1 << length):
            pattern = [(bits >> k) & 1 for k in range(length)]
            series = ClimateSeries("acc", start, np.full(length, 50.0),
                                   np.full(length, 25.0),
                                   np.array([0.1 if b else 0.0 for b in pattern]))
            got = [(p.start, p.end) for p in detect_wet_periods(series)]
            # naive scan
            want, run = [], None
            for idx, bit in enumerate(pattern + [0]):
                if bit and run is None:
                    run = idx
                elif not bit and run is not None:
                    if idx - run >= 3:
                        want.append((run, idx - 1))
                    run = None
            mismatches += got != want
            cases += 1
    elapsed = time.perf_counter() - t0
    report_line(3, mismatches == 0 and elapsed < 1.0,
                f"{cases} wetness patterns (all lengths <= 12), {mismatches} mismatches, {elapsed:.2f}s")


def _fd_grad(make_loss, param, h=1e-5):
    numeric = np.zeros_like(param.data)
    flat, out = param.data.ravel(), numeric.ravel()
    for i in range(flat.size):
        orig = flat[i]
        flat[i] = orig + h
        up = float(make_loss().data)
        flat[i] = orig - h
        down = float(make_loss().data)
        flat[i] = orig
        out[i] = (up - down) / (2 * h)
    return numeric


def test_criterion_4_gradient_suite():
    t0 = time.perf_counter()
    worst = 0.0

    def check(make_loss, params):
        nonlocal worst
        for p in params:
            p.zero_grad()
        backward(make_loss())
        for p in params:
            numeric = _fd_grad(make_loss, p)
            gap = np.abs(p.grad - numeric) - (1e-8 + 1e-4 * np.abs(numeric))
            worst = max(worst, float(gap.max()))

    for seed in range(100):
        rng = np.random.default_rng(seed)

        w1 = Parameter("w1", rng.standard_normal((3, 4)) * 0.6)
        b1 = Parameter("b1", rng.standard_normal(4) * 0.2)
        w2 = Parameter("w2", rng.standard_normal((4, 1)) * 0.6)
        x = rng.standard_normal((2, 3))

        def mlp_loss(w1=w1, b1=b1, w2=w2, x=x):
            out = (Tensor(x) @ w1 + b1).tanh() @ w2
            return (out * out).sum()
        check(mlp_loss, [w1, b1, w2])

        for kind in ("rnn", "lstm"):
            model = RecurrentBaseline(ModelConfig(kind=kind, baseline_hidden=2),
                                      seed=seed)
            xs = rng.standard_normal((8, 1, 5)) * 0.5

            def cell_loss(model=model, xs=xs):
                state = model.init_state(1)
                total = None
                for step in range(xs.shape[0]):
                    state, y = model.step(state, Tensor(xs[step]))
                    total = (y * y).sum() if total is None else total + (y * y).sum()
                return total
            check(cell_loss, list(model.params.values()))

        w = Parameter("w", rng.standard_normal((3, 3)) * 0.4)
        b = Parameter("b", rng.standard_normal(3) * 0.2)
        z0 = rng.standard_normal((1, 3))

        def euler_loss(w=w, b=b, z0=z0):
            problem = OdeProblem(lambda z, t: (z @ w + b).tanh(), Tensor(z0), [0.0, 8.0])
            out = euler_integrate(problem, h=1.0)[-1]
            return (out * out).sum()
        check(euler_loss, [w, b])

    elapsed = time.perf_counter() - t0
    report_line(4, worst <= 0.0 and elapsed < 30.0,
                f"MLP/RNN/LSTM/Euler-8 grads vs central differences, worst margin "
                f"{worst:.2e} over 100 seeds in {elapsed:.1f}s")


def test_criterion_5_solver_order():
    t0 = time.perf_counter()

    def global_error(integrator, h):
        problem = OdeProblem(lambda z, t: z, Tensor(np.array([[1.0]])), [0.0, 1.0])
        return abs(float(integrator(problem, h=h)[-1].data[0, 0]) - np.e)

    euler_ratio = global_error(euler_integrate, 1 / 16) / global_error(euler_integrate, 1 / 32)
    rk4_ratio = global_error(rk4_integrate, 1 / 4) / global_error(rk4_integrate, 1 / 8)
    elapsed = time.perf_counter() - t0
    ok = 1.8 <= euler_ratio <= 2.2 and 12.0 <= rk4_ratio <= 20.0 and elapsed < 1.0
    report_line(5, ok, f"step-halving error ratios: Euler {euler_ratio:.3f} (in [1.8, 2.2]), "
                       f"RK4 {rk4_ratio:.2f} (in [12, 20])")


def test_criterion_6_drop_accounting(toy_dataset):
    stats_cfg = ACCEPT_CFG
    from sigode.training import compute_dataset_stats
    stats = compute_dataset_stats([toy_dataset], stats_cfg)
    window = make_windows(toy_dataset, "test", stats_cfg, stats)[0]
    kept = {}
    for rate in (0.0, 0.3, 0.5, 0.7, 0.9):
        kept[rate] = apply_drop(window, rate, drop_rng(1, 0, window.start)).n_kept
    expect = {0.0: 100, 0.3: 70, 0.5: 50, 0.7: 30, 0.9: 10}
    report_line(6, kept == expect, f"kept encoder points {kept}")


def test_criterion_7_end_to_end_toy(trained, toy_dataset):
    ckpt, train_seconds = trained

    rep0 = run_extrapolation_test(ckpt, toy_dataset, 0.0, seed=SEED_TRAIN)
    rep7 = run_extrapolation_test(ckpt, toy_dataset, 0.7, seed=SEED_TRAIN)
    const_mean_mse = float(np.mean([np.var(tr.truth[100:]) for tr in rep0.traces]))
    ratio = rep0.mean_mse / const_mean_mse
    degradation = (rep7.mean_mse - rep0.mean_mse) / rep0.mean_mse

    # expected-but-not-asserted ordering from the interpolation study
    interp = run_interpolation_test(ckpt, toy_dataset, 0.3, seed=SEED_TRAIN)
    seen = float(np.mean([r.mse_seen for r in interp.results]))
    unseen = float(np.mean([r.mse_unseen for r in interp.results]))
    print(f"  (info) interpolation drop 0.3: seen MSE {seen:.3f}, unseen MSE {unseen:.3f}"
          f"{'' if seen <= unseen else '  [ordering violated - logged, not asserted]'}")

    ok = (train_seconds < 600.0) and (ratio <= 0.5) and (degradation <= 0.25)
    report_line(7, ok,
                f"trained {train_seconds:.0f}s (< 600s); extrapolation MSE {rep0.mean_mse:.2f} "
                f"= {ratio:.2f}x constant-mean {const_mean_mse:.2f} (need <= 0.5x); "
                f"drop 0->0.7 degradation {degradation * 100:+.1f}% (need <= 25%)")


def _run_cli(*args):
    result = subprocess.run([sys.executable, "-m", "sigode.cli", *map(str, args)],
                            capture_output=True, text=True)
    assert result.returncode == 0, result.stderr
    return result


def test_criterion_8_cli_determinism(tmp_path):
    cfg_path = tmp_path / "tiny.cfg"
    cfg_path.write_text(TINY_CFG_TEXT)

    outputs = {}
    for run in ("a", "b"):
        root = tmp_path / run
        root.mkdir()
        data = root / "toy.csv"
        _run_cli("generate", "--synthetic", "--seed", 7, "--n", 1460, "--out", data)
        ckpt = root / "ckpt.json"
        _run_cli("train", "--data", data, "--config", cfg_path, "--seed", 5,
                 "--out", ckpt, "--quiet")
        evald = root / "eval"
        _run_cli("eval-extrapolate", "--ckpt", ckpt, "--data", data,
                 "--drop-rate", 0.3, "--out-dir", evald)
        svgs = sorted((evald / "windows").glob("*.svg"))
        outputs[run] = {
            "dataset": data.read_bytes(),
            "ckpt": ckpt.read_bytes(),
            "report": (evald / "report.csv").read_bytes(),
            "figure": svgs[0].read_bytes(),
        }
    same = {k: outputs["a"][k] == outputs["b"][k] for k in outputs["a"]}
    report_line(8, all(same.values()),
                f"two seeded CLI runs byte-identical: {same}")


def test_criterion_9_checkpoint_roundtrip(trained, toy_dataset, tmp_path):
    ckpt, _ = trained
    path = tmp_path / "ckpt.json"
    save_checkpoint(ckpt, path)
    loaded = load_checkpoint(path)
    path2 = tmp_path / "ckpt2.json"
    save_checkpoint(loaded, path2)
    bytes_equal = path.read_bytes() == path2.read_bytes()

    stats = ckpt.stats
    predictors = dataset_predictors(toy_dataset, stats)
    pool = (make_windows(toy_dataset, "train", ACCEPT_CFG, stats)
            + make_windows(toy_dataset, "test", ACCEPT_CFG, stats))
    rng = np.random.default_rng(17)
    windows = [pool[i] for i in rng.choice(len(pool), size=20, replace=False)]

    model_a, model_b = ckpt.build(), loaded.build()
    exact = 0
    for w in windows:
        a = model_a.forward(w, predictors, w.target_times, noise=None).data
        b = model_b.forward(w, predictors, w.target_times, noise=None).data
        exact += int(np.array_equal(a, b))
    report_line(9, bytes_equal and exact == 20,
                f"save->load->save byte-identical: {bytes_equal}; "
                f"{exact}/20 windows predict bit-exactly after reload")
