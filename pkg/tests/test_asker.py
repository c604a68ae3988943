import numpy as np
import pytest

from robustfit.asker import AskerConfig, asker_body, asker_solve, eval_fh, gradient_angle
from robustfit.errors import InvalidArgument
from robustfit.kernels import RobustKernel
from robustfit.lm import LMConfig
from robustfit.mean1d import constructed_instance, make_problem
from conftest import linear_problem


def numeric_gradient(fun, x, step=1e-6):
    e = np.eye(x.size) * step
    return np.array([(fun(x + e[k]) - fun(x - e[k])) / (2 * step) for k in range(x.size)])


def test_eval_fh_example():
    assert eval_fh(make_problem([2.0], 1.0, 0.0), np.zeros(1), [1.0]) == (0.25, 1.0)


def test_gradient_angle():
    assert gradient_angle(np.array([1.0, 0.0]), np.array([0.0, 2.0])) == pytest.approx(np.pi / 2)
    assert gradient_angle(np.zeros(2), np.ones(2)) == np.pi


def test_config_validation():
    with pytest.raises(InvalidArgument):
        AskerConfig(mu_f=1.0)
    with pytest.raises(InvalidArgument):
        AskerConfig(init_scale=-1.0)


def test_joint_gradient_matches_finite_differences(rng):
    A = rng.standard_normal((8, 2))
    b = 2 * rng.standard_normal(8)
    p = linear_problem(A, b, RobustKernel(1.0))
    body = asker_body(p, rng.standard_normal(2), s0=rng.uniform(0.2, 1.5, 8))
    x = body.current.x
    gf, gh = body.gradients(x, body.current.lin)
    f = lambda z: eval_fh(p, z[:2], z[2:])[0]
    h = lambda z: eval_fh(p, z[:2], z[2:])[1]
    np.testing.assert_allclose(gf, numeric_gradient(f, x), rtol=1e-5, atol=1e-9)
    np.testing.assert_allclose(gh, numeric_gradient(h, x), rtol=1e-5, atol=1e-9)


def _dense_oracle(p, x, mu_f, lam, c):
    """Cooperative step from a dense Gauss-Newton model of the scaled residuals."""
    n_theta = p.num_parameters
    k = RobustKernel(p.kernel.tau)

    def scaled_residual(z):
        s = z[n_theta:]
        r = np.array([gl.residuals for gl in p.linearize(z[:n_theta]).groups]).reshape(-1)
        return r / (1 + s * s)

    r = scaled_residual(x)
    e = np.eye(x.size) * 1e-7
    J = np.column_stack([(scaled_residual(x + e[j]) - scaled_residual(x - e[j])) / 2e-7 for j in range(x.size)])
    w = k.omega(np.abs(r))
    s = x[n_theta:]
    Hf = J.T @ (w[:, None] * J)
    gf = J.T @ (w * r)
    Hh = np.zeros((x.size, x.size))
    Hh[n_theta:, n_theta:] = 2 * np.eye(s.size)
    gh = np.concatenate([np.zeros(n_theta), 2 * s])
    mu_h = 1 - mu_f
    return -np.linalg.solve(mu_f * Hf + mu_h * Hh + lam * np.eye(x.size), mu_f * gf + mu_h * gh) / (2 * c)


@pytest.mark.parametrize("curvature", [1.0, 0.5])
def test_cooperative_step_matches_dense_oracle(curvature):
    p = make_problem([0.3, 1.7], 1.0, 0.5)
    cfg = AskerConfig(curvature=curvature)
    body = asker_body(p, np.array([0.5]), cfg, s0=np.array([0.8, 0.4]))
    step = body.cooperative_step(0.1)
    np.testing.assert_allclose(step, _dense_oracle(p, body.current.x, cfg.mu_f, 0.1, curvature), rtol=1e-6, atol=1e-9)


def test_cooperative_step_descends_both_models_for_large_damping():
    p = make_problem([0.3, 1.7, -0.4], 1.0, 0.0)
    body = asker_body(p, np.zeros(1), s0=np.full(3, 0.1))
    gf, gh = body.gradients(body.current.x, body.current.lin)
    combined = 0.9 * gf + 0.1 * gh
    # the combined gradient is a descent direction for each model on this instance
    assert gf @ combined > 0 and gh @ combined > 0
    d = body.cooperative_step(1e6)
    assert gf @ d < 0 and gh @ d < 0


def test_restoration_shrinks_scales():
    p = make_problem([0.0, 0.0, 0.0, 10.0], 1.0, 10.0)
    body = asker_body(p, np.array([10.0]))
    x, gamma = body.restoration_step()
    assert 0 <= gamma <= 0.5
    np.testing.assert_allclose(x[1:], (1 - gamma) * body.current.x[1:])


def test_escapes_constructed_instance():
    mean, t0 = constructed_instance()
    tr = asker_solve(mean.problem(t0), config=AskerConfig(lm=LMConfig(max_iter=200)))
    assert tr.status == "converged"
    assert tr.final.psi == pytest.approx(0.25, abs=1e-4)
    assert tr.final.h < 1e-6
    assert abs(tr.final.extras["f"] - tr.final.psi) < 1e-9


def test_filter_stays_non_dominated_over_run():
    from robustfit.filter import dominates
    mean, t0 = constructed_instance()
    tr = asker_solve(mean.problem(t0), config=AskerConfig(lm=LMConfig(max_iter=60)))
    pairs = [(f, h) for f, h, _ in tr.state["filter"]]
    assert not any(dominates(a, b) for a in pairs for b in pairs)


def test_restoration_of_feasible_point_is_identity():
    p = make_problem([0.0, 1.0], 1.0, 0.0)
    body = asker_body(p, np.zeros(1), s0=np.zeros(2))
    x, _ = body.restoration_step()
    np.testing.assert_array_equal(x, body.current.x)


def test_restoration_grid_matches_fine_grid_oracle():
    # instance with an interior best gamma
    data = np.array([0.5, -0.9, -1.8])
    p = make_problem(data, 1.0, 0.5)
    s0 = np.array([0.1, 1.2, 1.4])
    body = asker_body(p, np.array([0.5]), s0=s0)
    _, gamma = body.restoration_step()

    def angle(g):
        z = np.concatenate([[0.5], (1 - g) * s0])
        gf = numeric_gradient(lambda v: eval_fh(p, v[:1], v[1:])[0], z)
        gh = numeric_gradient(lambda v: eval_fh(p, v[:1], v[1:])[1], z)
        norm = np.linalg.norm(gf) * np.linalg.norm(gh)
        return np.pi if norm == 0 else np.arccos(np.clip(gf @ gh / norm, -1, 1))

    fine = np.arange(0.0, 0.5 + 5e-5, 1e-4)
    best = fine[np.argmin([angle(g) for g in fine])]
    assert 0 < best < 0.5
    assert abs(gamma - best) <= 0.05 + 1e-12
