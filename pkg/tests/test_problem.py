import numpy as np
import pytest

from robustfit.errors import EvaluationFailure, InvalidArgument
from robustfit.kernels import RobustKernel
from robustfit.problem import ParameterBlock, Problem, ResidualBlock
from conftest import linear_problem


def _callback_problem():
    blocks = [ParameterBlock(10, 2, [1.0, 2.0]), ParameterBlock(20, 1, [3.0])]

    def ev(x, y):
        r = np.array([x[0] * y[0] - 1.0, np.sin(x[1])])
        return r, [np.array([[y[0], 0.0], [0.0, np.cos(x[1])]]), np.array([[x[0]], [0.0]])]

    return Problem.from_blocks(blocks, [ResidualBlock(0, 2, (10, 20), ev)], RobustKernel(1.0))


def test_objective_from_callback():
    p = _callback_problem()
    theta = p.initial_theta()
    r = np.array([2.0, np.sin(2.0)])
    assert p.evaluate_objective(theta) == pytest.approx(RobustKernel(1.0).psi(np.linalg.norm(r)))


def test_callback_jacobian_check():
    p = _callback_problem()
    rep = p.check_jacobian(p.initial_theta())
    assert rep.passed and rep.worst < 1e-8


def test_wrong_jacobian_is_detected():
    blocks = [ParameterBlock(0, 1, [1.0])]
    rb = ResidualBlock(0, 1, (0,), lambda x: (x ** 2, [np.array([[1.0]])]))
    p = Problem.from_blocks(blocks, [rb], RobustKernel(1.0))
    assert not p.check_jacobian(np.array([3.0])).passed


def test_unknown_block_rejected():
    blocks = [ParameterBlock(0, 1, [1.0])]
    rb = ResidualBlock(0, 1, (5,), lambda x: (x, [np.eye(1)]))
    with pytest.raises(InvalidArgument):
        Problem.from_blocks(blocks, [rb], RobustKernel(1.0))


def test_non_finite_residual_reports_block():
    blocks = [ParameterBlock(0, 1, [1.0])]
    rb = ResidualBlock(7, 1, (0,), lambda x: (np.array([np.nan]), [np.eye(1)]))
    p = Problem.from_blocks(blocks, [rb], RobustKernel(1.0))
    with pytest.raises(EvaluationFailure) as err:
        p.evaluate_objective(p.initial_theta())
    assert err.value.residual_index == 7


def test_lifted_bound_touches_at_omega(rng):
    A = rng.standard_normal((20, 3))
    b = rng.standard_normal(20) * 3
    p = linear_problem(A, b, RobustKernel(1.5))
    theta = rng.standard_normal(3)
    norms = p.residual_norms(theta)
    u = p.kernel.omega(norms)
    assert p.evaluate_weighted_sq(theta, u) == pytest.approx(p.evaluate_objective(theta), rel=1e-12)
    assert p.evaluate_weighted_sq(theta, np.ones(20)) >= p.evaluate_objective(theta)


def test_robust_gradient_matches_finite_differences(rng):
    A = rng.standard_normal((15, 2))
    b = rng.standard_normal(15)
    p = linear_problem(A, b, RobustKernel(2.0))
    theta = rng.standard_normal(2)
    g = p.gradient(theta)
    e = np.eye(2) * 1e-6
    fd = [(p.evaluate_objective(theta + e[k]) - p.evaluate_objective(theta - e[k])) / 2e-6 for k in range(2)]
    np.testing.assert_allclose(g, fd, rtol=1e-6, atol=1e-9)


def test_bad_theta_shape():
    p = linear_problem(np.eye(2), [1.0, 2.0])
    with pytest.raises(InvalidArgument):
        p.evaluate_objective(np.zeros(3))


def test_bad_fd_step():
    p = linear_problem(np.eye(2), [1.0, 2.0])
    with pytest.raises(InvalidArgument):
        p.check_jacobian(np.zeros(2), step=0.5)
