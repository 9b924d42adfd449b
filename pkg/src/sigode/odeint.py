"""Fixed-step explicit integrators over differentiable dynamics.

Both solvers advance a latent Tensor with graph-recorded ops, so gradients
flow through the unrolled solve. Each gap between consecutive output times
is subdivided into ceil(gap / h) equal substeps, guaranteeing the solver
lands exactly on every requested output time.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, Sequence

from .autodiff import Tensor


@dataclass
class OdeProblem:
    """dynamics(z, t) -> dz/dt, an initial state, and the output time grid.

    output_times are strictly increasing reals in step units; the first one
    is the time of z0.
    """

    dynamics: Callable[[Tensor, float], Tensor]
    z0: Tensor
    output_times: Sequence[float]

    def __post_init__(self):
        times = [float(t) for t in self.output_times]
        if not times:
            raise ValueError("output_times must be non-empty")
        if any(b <= a for a, b in zip(times, times[1:])):
            raise ValueError("output_times must be strictly increasing")
        self.output_times = times


def _march(problem: OdeProblem, h: float, substep) -> list[Tensor]:
    if h <= 0.0:
        raise ValueError("substep size h must be > 0")
    z = problem.z0
    outputs = [z]
    t = problem.output_times[0]
    for t_next in problem.output_times[1:]:
        gap = t_next - t
        n_sub = max(1, math.ceil(gap / h - 1e-12))
        dt = gap / n_sub
        for k in range(n_sub):
            z = substep(problem.dynamics, z, t + k * dt, dt)
        t = t_next
        outputs.append(z)
    return outputs


def euler_integrate(problem: OdeProblem, h: float = 1.0) -> list[Tensor]:
    """Explicit Euler: z <- z + dt * f(z, t). Output[0] is z0 itself."""

    def substep(f, z, t, dt):
        return z + f(z, t) * dt

    return _march(problem, h, substep)


def rk4_integrate(problem: OdeProblem, h: float = 1.0) -> list[Tensor]:
    """Classical 4th-order Runge-Kutta; same output-time contract as Euler."""

    def substep(f, z, t, dt):
        k1 = f(z, t)
        k2 = f(z + k1 * (dt / 2.0), t + dt / 2.0)
        k3 = f(z + k2 * (dt / 2.0), t + dt / 2.0)
        k4 = f(z + k3 * dt, t + dt)
        return z + (k1 + k2 * 2.0 + k3 * 2.0 + k4) * (dt / 6.0)

    return _march(problem, h, substep)
