import numpy as np
import pytest

from sigode.autodiff import Parameter, Tensor, backward
from sigode.odeint import OdeProblem, euler_integrate, rk4_integrate
from tests.test_autodiff import fd_grad


def scalar_problem(f, z0, times):
    return OdeProblem(f, Tensor(np.array([[float(z0)]])), times)


class TestContracts:
    def test_non_increasing_times_rejected(self):
        with pytest.raises(ValueError, match="increasing"):
            OdeProblem(lambda z, t: z, Tensor(np.ones((1, 1))), [0.0, 1.0, 1.0])

    def test_empty_times_rejected(self):
        with pytest.raises(ValueError):
            OdeProblem(lambda z, t: z, Tensor(np.ones((1, 1))), [])

    def test_nonpositive_step_rejected(self):
        problem = scalar_problem(lambda z, t: z, 1.0, [0.0, 1.0])
        with pytest.raises(ValueError):
            euler_integrate(problem, h=0.0)

    def test_first_output_is_z0_bit_exact(self):
        z0 = Tensor(np.array([[2.5, -1.0]]))
        problem = OdeProblem(lambda z, t: z * 0.3, z0, [0.0, 0.5, 1.0])
        for integrate in (euler_integrate, rk4_integrate):
            outputs = integrate(problem, h=0.25)
            assert outputs[0] is z0


class TestEuler:
    def test_zero_dynamics_constant(self):
        problem = scalar_problem(lambda z, t: z * 0.0, 3.0, [0.0, 1.0, 2.5, 7.0])
        for out in euler_integrate(problem, h=0.5):
            assert out.data[0, 0] == 3.0

    def test_constant_dynamics_exact(self):
        ones = Tensor(np.ones((1, 1)))
        problem = OdeProblem(lambda z, t: ones, Tensor(np.array([[2.0]])), [0.0, 1.0])
        for h in (1.0, 0.3, 0.07):
            assert euler_integrate(problem, h=h)[-1].data[0, 0] == pytest.approx(3.0, abs=1e-12)

    def test_exponential_closed_form(self):
        # z' = z, z0 = 1, 4 steps of 0.25: (1 + 1/4)^4
        problem = scalar_problem(lambda z, t: z, 1.0, [0.0, 1.0])
        out = euler_integrate(problem, h=0.25)[-1]
        assert out.data[0, 0] == 2.44140625

    def test_gap_subdivision_lands_on_outputs(self):
        # gap 1.0 with requested h = 0.3 -> 4 substeps of 0.25
        problem = scalar_problem(lambda z, t: z, 1.0, [0.0, 1.0])
        out = euler_integrate(problem, h=0.3)[-1]
        assert out.data[0, 0] == 2.44140625

    def test_order_one_error_halving(self):
        def error(h):
            problem = scalar_problem(lambda z, t: z, 1.0, [0.0, 1.0])
            return abs(float(euler_integrate(problem, h=h)[-1].data[0, 0]) - np.e)

        ratio = error(1 / 16) / error(1 / 32)
        assert 1.8 <= ratio <= 2.2


class TestRK4:
    def test_zero_dynamics_constant(self):
        problem = scalar_problem(lambda z, t: z * 0.0, -1.5, [0.0, 2.0])
        assert rk4_integrate(problem, h=0.5)[-1].data[0, 0] == -1.5

    def test_exponential_within_1e3(self):
        problem = scalar_problem(lambda z, t: z, 1.0, [0.0, 1.0])
        out = rk4_integrate(problem, h=0.5)[-1]
        # 2 RK4 steps of h=0.5: growth factor (1 + h + h^2/2 + h^3/6 + h^4/24)^2
        assert out.data[0, 0] == pytest.approx(2.71734619140625, abs=1e-14)
        assert abs(out.data[0, 0] - np.e) < 1e-3

    def test_rotation_returns_to_start(self):
        a = np.array([[0.0, -1.0], [1.0, 0.0]])  # rows are state layout [1, 2]

        def f(z, t):
            return z @ Tensor(a.T)

        z0 = Tensor(np.array([[1.0, 0.0]]))
        problem = OdeProblem(f, z0, [0.0, 2.0 * np.pi])
        out = rk4_integrate(problem, h=2.0 * np.pi / 64)[-1]
        np.testing.assert_allclose(out.data, z0.data, rtol=0, atol=1e-4)

    def test_order_four_error_shrinks_16x(self):
        def error(h):
            problem = scalar_problem(lambda z, t: z, 1.0, [0.0, 1.0])
            return abs(float(rk4_integrate(problem, h=h)[-1].data[0, 0]) - np.e)

        ratio = error(1 / 4) / error(1 / 8)
        assert 12.0 <= ratio <= 20.0


class TestGradients:
    def test_grad_wrt_z0_matches_finite_differences(self):
        rng = np.random.default_rng(6)
        w = rng.standard_normal((3, 3)) * 0.4
        z0 = Parameter("z0", rng.standard_normal((1, 3)))

        def loss():
            problem = OdeProblem(lambda z, t: (z @ Tensor(w)).tanh(), z0, [0.0, 8.0])
            out = euler_integrate(problem, h=1.0)[-1]
            return (out * out).sum()

        z0.zero_grad()
        backward(loss())
        np.testing.assert_allclose(z0.grad, fd_grad(loss, z0), rtol=1e-4, atol=1e-8)

    def test_grad_through_dynamics_params(self):
        rng = np.random.default_rng(7)
        w = Parameter("w", rng.standard_normal((2, 2)) * 0.5)
        z0_data = rng.standard_normal((1, 2))

        def loss():
            problem = OdeProblem(lambda z, t: (z @ w).tanh(), Tensor(z0_data), [0.0, 4.0])
            return euler_integrate(problem, h=0.5)[-1].sum()

        w.zero_grad()
        backward(loss())
        np.testing.assert_allclose(w.grad, fd_grad(loss, w), rtol=1e-4, atol=1e-8)

    def test_rk4_differentiable(self):
        w = Parameter("w", np.array([[0.3]]))

        def loss():
            problem = OdeProblem(lambda z, t: z @ w, Tensor(np.array([[1.0]])), [0.0, 1.0])
            return rk4_integrate(problem, h=0.25)[-1].sum()

        w.zero_grad()
        backward(loss())
        np.testing.assert_allclose(w.grad, fd_grad(loss, w), rtol=1e-6, atol=1e-10)
