import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustfit.bal import (SynthConfig, format_bal, inlier_rate, load_bal, make_reprojection_problem,
                           normalize_axis_angle, parse_bal, project, rotation_matrix, synth_ba, write_bal)
from robustfit.errors import ParseError, ValidationError
from robustfit.kernels import RobustKernel

SMALL_BAL = """2 2 3
0 0 -1.5 2.25
1 0 0.5 -0.75
1 1 3 4
0.01 0.02 0.03 0.1 0.2 0.3 500 0.001 -0.0001
0 0 0 0 0 0 400 0 0
0.5 0.5 -4
-0.2 0.1 -5
"""

ROTATED = (0.179000929034592025, 1.06039441200921163, 3.58378603691464696)


def test_rotation_example():
    np.testing.assert_allclose(rotation_matrix([0.3, -0.2, 0.1]) @ [1, 2, 3], ROTATED, rtol=1e-14)


def test_rotation_small_angle_is_identity():
    np.testing.assert_allclose(rotation_matrix(np.zeros(3)), np.eye(3))


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-3, 3), min_size=3, max_size=3))
def test_rotation_is_orthonormal(w):
    R = rotation_matrix(w)
    np.testing.assert_allclose(R @ R.T, np.eye(3), atol=1e-12)
    assert np.linalg.det(R) == pytest.approx(1.0)


def test_projection_examples():
    cam = np.array([0, 0, 0, 0, 0, 0, 100, 0, 0], dtype=float)
    np.testing.assert_allclose(project(cam, [1, 1, -2]), [50, 50])
    np.testing.assert_allclose(project(cam, [0, 0, -1]), [0, 0])
    assert np.all(np.isnan(project(cam, [1, 1, 0])))


def test_projection_jacobians_match_finite_differences(rng):
    for _ in range(20):
        cam = np.concatenate([rng.normal(0, 0.5, 3), rng.normal(0, 0.3, 3), [500, 0.01, -0.001]])
        X = np.array([rng.normal(), rng.normal(), -5 + rng.normal()])
        _, Jc, Jp = project(cam, X, jacobians=True)
        e = 1e-6
        fd_c = np.column_stack([(project(cam + e * np.eye(9)[k], X) - project(cam - e * np.eye(9)[k], X)) / (2 * e)
                                for k in range(6)])
        fd_p = np.column_stack([(project(cam, X + e * np.eye(3)[k]) - project(cam, X - e * np.eye(3)[k])) / (2 * e)
                                for k in range(3)])
        np.testing.assert_allclose(Jc, fd_c, rtol=1e-5, atol=1e-4)
        np.testing.assert_allclose(Jp, fd_p, rtol=1e-5, atol=1e-4)


def test_normalize_axis_angle_preserves_rotation():
    w = np.array([0.0, 0.0, 1.5 * np.pi])
    n = normalize_axis_angle(w)
    assert np.linalg.norm(n) <= np.pi
    np.testing.assert_allclose(rotation_matrix(n), rotation_matrix(w), atol=1e-12)


def test_parse_small_file():
    d = parse_bal(io.StringIO(SMALL_BAL))
    assert (d.num_cameras, d.num_points, d.num_observations) == (2, 2, 3)
    np.testing.assert_array_equal(d.camera_index, [0, 1, 1])
    assert d.cameras[0, 6] == 500 and d.points[1, 2] == -5


@pytest.mark.parametrize("suffix", ["txt", "bz2", "gz"])
def test_round_trip(tmp_path, suffix):
    d = parse_bal(io.StringIO(SMALL_BAL))
    path = tmp_path / f"p.{suffix}"
    write_bal(d, path)
    assert load_bal(path).equals(d)


def test_round_trip_synthetic_is_bit_exact():
    d = synth_ba(SynthConfig(cameras=3, points=20)).dataset
    assert parse_bal(io.StringIO(format_bal(d))).equals(d)


@pytest.mark.parametrize("text,line", [
    ("", 0),
    ("1 1\n", 1),
    ("1 1 1\n0 0 1.0\n", 2),
    ("1 1 1\n0 0 1 2\n" + "0\n" * 11, 13),
    ("1 1 1\n0 0 1 2\n" + "0\n" * 11 + "x\n", 14),
])
def test_parse_errors_report_line(text, line):
    with pytest.raises(ParseError) as err:
        parse_bal(io.StringIO(text))
    assert err.value.line == line


def test_index_out_of_range():
    with pytest.raises(ValidationError):
        parse_bal(io.StringIO("1 1 1\n3 0 1 2\n" + "0\n" * 12))


def test_synthetic_scene_properties():
    scene = synth_ba(SynthConfig(cameras=10, points=200, outlier_fraction=0.2, seed=3))
    d = scene.dataset
    assert d.num_observations == 1000
    assert scene.outlier_mask.sum() == 200
    assert scene.planted_inlier_fraction == pytest.approx(0.8)
    views = np.bincount(d.point_index, minlength=200)
    assert views.min() >= 2
    p = make_reprojection_problem(scene.true_dataset(), RobustKernel(1.0))
    norms = p.residual_norms(scene.ground_truth)
    # inlier residuals are pure Gaussian noise at the true parameters
    assert np.median(norms[~scene.outlier_mask]) < 3.0


def test_synthetic_is_deterministic():
    a = synth_ba(SynthConfig(cameras=4, points=30, seed=5))
    b = synth_ba(SynthConfig(cameras=4, points=30, seed=5))
    assert a.dataset.equals(b.dataset)


def test_reprojection_problem_jacobian():
    scene = synth_ba(SynthConfig(cameras=3, points=15))
    p = make_reprojection_problem(scene.dataset, RobustKernel(3.0))
    assert p.check_jacobian(p.initial_theta(), tolerance=1e-5).passed


def test_inlier_rate_bounds():
    scene = synth_ba(SynthConfig(cameras=3, points=15))
    p = make_reprojection_problem(scene.dataset, RobustKernel(1.0))
    assert 0.0 <= inlier_rate(p, p.initial_theta()) <= 1.0
    assert inlier_rate(p, p.initial_theta(), 1e9) == 1.0
