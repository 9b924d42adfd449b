"""Built-in property suites behind the `selftest` CLI command.

These re-derive expectations through independent routes (finite differences,
a plain-Python cohort loop, a naive wet-run scanner) and compare against the
production paths. Each check returns (name, passed, detail).
"""

from __future__ import annotations

import numpy as np

from .autodiff import Parameter, Tensor, backward
from .climate import ClimateSeries, synth_climate
from .models import ModelConfig, RecurrentBaseline
from .odeint import OdeProblem, euler_integrate, rk4_integrate
from .sigatoka import (
    CardinalTemperatures,
    SurvivalParams,
    detect_wet_periods,
    generate_infection_series,
    infected_fraction,
    relative_rate,
    weibull_hazard,
)

CheckResult = tuple[str, bool, str]


def finite_difference_check(make_loss, params: list[Parameter],
                            h: float = 1e-5, rtol: float = 1e-4, atol: float = 1e-8) -> float:
    """Worst allclose violation of analytic vs central-difference gradients.

    make_loss() must rebuild the graph from scratch each call and return a
    scalar Tensor. Returns the max of |analytic - numeric| - (atol + rtol*|numeric|)
    over all components; <= 0 means the check passes.
    """
    for p in params:
        p.zero_grad()
    loss = make_loss()
    backward(loss)
    worst = -np.inf
    for p in params:
        analytic = p.grad.copy()
        numeric = np.zeros_like(p.data)
        flat = p.data.ravel()
        for i in range(flat.size):
            orig = flat[i]
            flat[i] = orig + h
            up = float(make_loss().data)
            flat[i] = orig - h
            down = float(make_loss().data)
            flat[i] = orig
            numeric.ravel()[i] = (up - down) / (2.0 * h)
        gap = np.abs(analytic - numeric) - (atol + rtol * np.abs(numeric))
        worst = max(worst, float(gap.max()))
    return worst


def _mlp_loss(rng) -> tuple:
    w1 = Parameter("w1", rng.standard_normal((3, 4)) * 0.6)
    b1 = Parameter("b1", rng.standard_normal(4) * 0.2)
    w2 = Parameter("w2", rng.standard_normal((4, 2)) * 0.6)
    b2 = Parameter("b2", rng.standard_normal(2) * 0.2)
    x = np.asarray(rng.standard_normal((2, 3)))

    def loss():
        h = (Tensor(x) @ w1 + b1).tanh()
        return ((h @ w2 + b2) * (h @ w2 + b2)).sum()
    return loss, [w1, b1, w2, b2]


def _cell_loss(kind: str, rng) -> tuple:
    cfg = ModelConfig(kind=kind, baseline_hidden=3)
    model = RecurrentBaseline(cfg, seed=int(rng.integers(1 << 31)))
    xs = rng.standard_normal((4, 2, 5)) * 0.5

    def loss():
        state = model.init_state(2)
        total = None
        for step in range(xs.shape[0]):
            state, y = model.step(state, Tensor(xs[step]))
            total = y.sum() if total is None else total + y.sum()
        return total * total
    return loss, list(model.params.values())


def _euler_loss(rng) -> tuple:
    w = Parameter("w", rng.standard_normal((3, 3)) * 0.4)
    b = Parameter("b", rng.standard_normal(3) * 0.2)
    z0_data = rng.standard_normal((1, 3))

    def loss():
        problem = OdeProblem(lambda z, t: (z @ w + b).tanh(), Tensor(z0_data),
                             [0.0, 8.0])
        final = euler_integrate(problem, h=1.0)[-1]
        return (final * final).sum()
    return loss, [w, b]


def gradient_suite(seeds: int = 10) -> list[CheckResult]:
    results = []
    for name, maker in (("mlp", _mlp_loss),
                        ("rnn-cell", lambda r: _cell_loss("rnn", r)),
                        ("lstm-cell", lambda r: _cell_loss("lstm", r)),
                        ("euler-8-step", _euler_loss)):
        worst = -np.inf
        for seed in range(seeds):
            loss, params = maker(np.random.default_rng(seed))
            worst = max(worst, finite_difference_check(loss, params))
        results.append((f"gradcheck/{name}", worst <= 0.0,
                        f"worst tolerance margin {worst:.3e} over {seeds} seeds"))
    return results


def solver_order_check() -> list[CheckResult]:
    """Global error on dz/dt = z over [0, 1] must shrink ~2x (Euler) and
    ~16x (RK4) when the step halves."""

    def run(integrator, h):
        problem = OdeProblem(lambda z, t: z, Tensor(np.array([[1.0]])), [0.0, 1.0])
        return abs(float(integrator(problem, h=h)[-1].data[0, 0]) - np.e)

    euler_ratio = run(euler_integrate, 1 / 16) / run(euler_integrate, 1 / 32)
    rk4_ratio = run(rk4_integrate, 1 / 4) / run(rk4_integrate, 1 / 8)
    return [
        ("solver/euler-order", 1.8 <= euler_ratio <= 2.2, f"halving ratio {euler_ratio:.3f}"),
        ("solver/rk4-order", 12.0 <= rk4_ratio <= 20.0, f"halving ratio {rk4_ratio:.3f}"),
    ]


def brute_force_infection(series: ClimateSeries, params: SurvivalParams) -> np.ndarray:
    """Plain-loop re-derivation of the infection series, cohort by cohort."""
    wet = [(bool(c > 0.0) or bool(r > 98.0)) for c, r in zip(series.cm, series.rh)]
    n = len(wet)
    y = [0.0] * n
    runs = []
    i = 0
    while i < n:
        if wet[i]:
            j = i
            while j + 1 < n and wet[j + 1]:
                j += 1
            if j - i + 1 >= 3:
                runs.append((i, j))
            i = j + 1
        else:
            i += 1
    for (lo, hi) in runs:
        for launch in range(lo, hi + 1):
            hazard = 0.0
            prev_fraction = 0.0
            for i in range(launch + 1, hi + 1):
                rate = relative_rate(float(series.t[i]), params.cardinals)
                t_now = (i - launch) * 6.0
                hazard += rate * ((t_now / params.alpha) ** params.gamma
                                  - ((t_now - 6.0) / params.alpha) ** params.gamma)
                fraction = 1.0 - np.exp(-hazard)
                y[i] += params.beta * (fraction - prev_fraction)
                prev_fraction = fraction
    return np.array(y)


def disease_suite(n_series: int = 10) -> list[CheckResult]:
    results = []
    cardinals = CardinalTemperatures()
    identities = (
        abs(relative_rate(27.2, cardinals) - 1.0) <= 1e-12
        and abs(relative_rate(16.6, cardinals)) <= 1e-12
        and abs(relative_rate(30.3, cardinals)) <= 1e-12
        and abs(weibull_hazard(32.6, 25.0) - relative_rate(25.0, cardinals)) <= 1e-12
        and infected_fraction(0.0) == 0.0
    )
    results.append(("disease/identities", identities, "cardinal and hazard identities"))

    worst = 0.0
    params = SurvivalParams()
    for seed in range(n_series):
        series = synth_climate(seed=seed + 1, n=64)
        ours = generate_infection_series(series, params).y
        brute = brute_force_infection(series, params)
        worst = max(worst, float(np.max(np.abs(ours - brute))))
    results.append(("disease/cohort-oracle", worst <= 1e-9,
                    f"max |fast - brute| = {worst:.3e} over {n_series} series"))

    mismatch = 0
    for bits in range(1 << 10):
        pattern = [(bits >> k) & 1 for k in range(10)]
        series = ClimateSeries(
            coordinate_id="c", start_time=synth_climate(0, 1).start_time,
            rh=np.full(10, 50.0), t=np.full(10, 25.0),
            cm=np.array([0.1 if b else 0.0 for b in pattern]))
        got = [(p.start, p.end) for p in detect_wet_periods(series)]
        want = _naive_runs(pattern)
        if got != want:
            mismatch += 1
    results.append(("disease/wet-period-scan", mismatch == 0,
                    f"{mismatch} mismatches over 1024 patterns"))
    return results


def _naive_runs(pattern: list[int]) -> list[tuple[int, int]]:
    runs = []
    i = 0
    while i < len(pattern):
        if pattern[i]:
            j = i
            while j + 1 < len(pattern) and pattern[j + 1]:
                j += 1
            if j - i + 1 >= 3:
                runs.append((i, j))
            i = j + 1
        else:
            i += 1
    return runs


def run_all(fast: bool = True) -> list[CheckResult]:
    results = []
    results.extend(gradient_suite(seeds=5 if fast else 20))
    results.extend(solver_order_check())
    results.extend(disease_suite(n_series=8 if fast else 30))
    return results
