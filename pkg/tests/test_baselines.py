import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustfit.baselines import GncSchedule, gnc_solve, irls_solve, lifted_cost_identity, mhq_solve
from robustfit.errors import InvalidArgument
from robustfit.kernels import RobustKernel
from robustfit.lm import LMConfig
from robustfit.mean1d import RobustMean1D, brute_force_1d, constructed_instance, make_problem
from conftest import linear_problem


def test_gnc_scales():
    assert GncSchedule(5).scales == (16.0, 8.0, 4.0, 2.0, 1.0)
    assert GncSchedule(1).scales == (1.0,)
    with pytest.raises(InvalidArgument):
        GncSchedule(0)


def test_irls_stuck_on_outlier():
    mean, t0 = constructed_instance()
    tr = irls_solve(mean.problem(t0))
    assert tr.final.psi == pytest.approx(0.75, abs=1e-9)


def test_irls_psi_monotone_on_regression(rng):
    A = np.column_stack([np.ones(60), rng.uniform(-2, 2, 60)])
    b = A @ [1.0, 2.0] + 0.1 * rng.standard_normal(60)
    b[:12] += rng.uniform(5, 10, 12)
    tr = irls_solve(linear_problem(A, b, RobustKernel(1.0)), np.array([1.2, 1.8]), LMConfig(max_iter=100))
    assert np.all(np.diff(tr.column("psi")) <= 1e-12)
    np.testing.assert_allclose(tr.theta, [1.0, 2.0], atol=0.1)


def test_gnc_escapes_with_five_levels():
    mean, t0 = constructed_instance()
    assert gnc_solve(mean.problem(t0), schedule=GncSchedule(5)).final.psi == pytest.approx(0.25, abs=1e-6)


def test_gnc_scale_column_non_increasing():
    mean, t0 = constructed_instance()
    tr = gnc_solve(mean.problem(t0), schedule=GncSchedule(5))
    s = tr.column("scale")
    assert np.all(np.diff(s) <= 0) and s[-1] == 1.0


def test_mhq_touching_weights_at_half():
    p = make_problem([0.5], 1.0, 0.0)
    tr = mhq_solve(p, w0="touching", config=LMConfig(max_iter=0))
    assert tr.state["weights"][0] == pytest.approx(0.75)


def test_mhq_converges_on_clean_mean():
    data = [0.1, -0.1, 0.05, 0.0]
    tr = mhq_solve(make_problem(data, 1.0, 0.3), config=LMConfig(max_iter=200))
    best_t, _ = brute_force_1d(RobustMean1D(data, RobustKernel(1.0)))
    assert abs(tr.theta[0] - best_t) < 1e-6


@settings(max_examples=50, deadline=None)
@given(st.floats(0.0, 5.0), st.floats(-1.5, 1.5), st.floats(0.2, 3.0))
def test_mhq_cost_equals_lifted_objective(r, w, tau):
    p = make_problem([r], tau, 0.0)
    mhq, lifted = lifted_cost_identity(p, np.zeros(1), w)
    assert mhq == pytest.approx(lifted, rel=1e-12, abs=1e-12)
    psi = RobustKernel(tau).psi(r)
    assert lifted >= psi - 1e-12
    touching, _ = lifted_cost_identity(p, np.zeros(1), np.sqrt(RobustKernel(tau).omega(r)))
    assert touching == pytest.approx(psi, abs=1e-12)
