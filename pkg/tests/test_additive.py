import numpy as np
import pytest

from robustfit.additive import additive_body, addfilter_solve, eval_fh_additive
from robustfit.asker import AskerConfig
from robustfit.kernels import RobustKernel
from robustfit.lm import LMConfig
from robustfit.mean1d import constructed_instance, make_problem
from conftest import linear_problem
from test_asker import numeric_gradient


def test_initial_point_is_feasible():
    p = make_problem([0.0, 2.0], 1.0, 1.0)
    f, h = eval_fh_additive(p, np.array([1.0]), np.array([1.0, -1.0]))
    assert h == 0.0 and f == pytest.approx(2 * RobustKernel(1.0).psi(1.0))


def test_gradients_match_finite_differences(rng):
    A = rng.standard_normal((6, 2))
    b = rng.standard_normal(6)
    p = linear_problem(A, b, RobustKernel(1.0))
    theta = rng.standard_normal(2)
    body = additive_body(p, theta, p0=rng.standard_normal(6))
    x = body.current.x
    gf, gh = body.gradients(x, body.current.lin)
    f = lambda z: eval_fh_additive(p, z[:2], z[2:])[0]
    h = lambda z: eval_fh_additive(p, z[:2], z[2:])[1]
    np.testing.assert_allclose(gf, numeric_gradient(f, x), rtol=1e-5, atol=1e-9)
    np.testing.assert_allclose(gh, numeric_gradient(h, x), rtol=1e-5, atol=1e-9)


def test_restoration_moves_toward_residuals():
    p = make_problem([0.0, 3.0], 1.0, 0.0)
    body = additive_body(p, np.zeros(1), p0=np.array([1.0, 1.0]))
    x, gamma = body.restoration_step()
    r = np.array([0.0, -3.0])
    np.testing.assert_allclose(x[1:], body.current.x[1:] + gamma * (r - body.current.x[1:]))


def test_converges_on_clean_data():
    p = make_problem([0.1, -0.2, 0.05], 1.0, 0.5)
    tr = addfilter_solve(p, config=AskerConfig(lm=LMConfig(max_iter=300)))
    assert np.isfinite(tr.final.psi)
    assert tr.final.psi <= tr.records[0].psi + 1e-12


def test_constructed_instance_runs():
    mean, t0 = constructed_instance()
    tr = addfilter_solve(mean.problem(t0))
    assert tr.final.h >= 0
