import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from robustfit.bench import (BASE_COLUMNS, METHODS, RunSpec, escape_experiment, normalized_objective, profile,
                             profile_table, read_trace, run, solve, split_trace_name, write_trace)
from robustfit.errors import InvalidArgument
from robustfit.mean1d import MeanFamily, constructed_instance

MEAN = "kind=mean,data=0;0;0;10,theta0=10"


def test_profile_example():
    t = profile_table({"i1": {"m1": 1.0, "m2": 2.0}, "i2": {"m1": 2.0, "m2": 2.0}})
    assert t.rho("m1", 1.0) == 1.0
    assert t.rho("m2", 1.0) == 0.5
    assert t.rho("m2", 2.0) == 1.0


def test_profile_missing_and_zero_best():
    t = profile_table({"a": {"x": 0.0, "y": 0.0}, "b": {"x": 0.0, "y": 1.0}, "c": {"x": 1.0}}, ["x", "y"])
    assert ("c", "y") in t.missing
    r = t.ratios
    assert r[0].tolist() == [1.0, 1.0]
    assert r[1].tolist() == [1.0, math.inf]
    assert r[2, 1] == math.inf


def test_profile_higher_is_better():
    t = profile_table({"a": {"x": 0.8, "y": 0.4}}, higher_is_better=True)
    assert t.ratios.tolist() == [[1.0, 2.0]]


@settings(max_examples=40, deadline=None)
@given(st.lists(st.lists(st.floats(0.01, 100.0), min_size=3, max_size=3), min_size=1, max_size=8),
       st.floats(1.0, 20.0), st.floats(1.0, 20.0))
def test_profile_curves_are_monotone_cdfs(rows, t1, t2):
    res = {f"i{k}": dict(zip("abc", row)) for k, row in enumerate(rows)}
    t = profile_table(res)
    lo, hi = sorted((t1, t2))
    for m in "abc":
        assert 0.0 <= t.rho(m, lo) <= t.rho(m, hi) <= 1.0
    # some method is best on every instance
    assert sum(t.rho(m, 1.0) for m in "abc") >= 1.0 - 1e-12


def test_run_spec_validation():
    with pytest.raises(InvalidArgument):
        RunSpec("nope", synthetic=MEAN).validate()
    with pytest.raises(InvalidArgument):
        RunSpec("irls").validate()
    with pytest.raises(InvalidArgument):
        RunSpec("irls", synthetic=MEAN, max_iter=-1).validate()


def test_unknown_synthetic_key():
    with pytest.raises(InvalidArgument):
        run(RunSpec("irls", synthetic="bogus=1"))


@pytest.mark.parametrize("method", METHODS)
def test_every_method_runs_on_mean(method):
    tr = run(RunSpec(method, synthetic=MEAN, max_iter=5))
    assert tr.method == method
    assert np.isfinite(tr.final.psi)


def test_trace_file_round_trip(tmp_path):
    tr = run(RunSpec("regemm", synthetic=MEAN, max_iter=5))
    path = tmp_path / "mean__regemm.csv"
    write_trace(tr, path)
    cols = read_trace(path)
    assert list(cols)[:len(BASE_COLUMNS)] == list(BASE_COLUMNS)
    assert len(cols["iter"]) == 6
    np.testing.assert_array_equal(cols["psi"], tr.column("psi"))
    assert "gap" in cols


def test_profile_from_trace_files(tmp_path):
    paths = []
    for m in ("irls", "regemm"):
        p = tmp_path / f"mean__{m}.csv"
        write_trace(run(RunSpec(m, synthetic=MEAN, max_iter=50)), p)
        paths.append(p)
    obj, inl = profile(paths)
    assert obj.rho("regemm", 1.0) == 1.0
    assert obj.rho("irls", 1.0) == 0.0


def test_split_trace_name():
    assert split_trace_name("dir/ladybug_49__asker.csv") == ("ladybug_49", "asker")
    with pytest.raises(InvalidArgument):
        split_trace_name("plain.csv")


def test_normalized_objective():
    mean, t0 = constructed_instance()
    traces = {m: solve(m, mean.problem(t0)) for m in ("irls", "regemm")}
    norm = normalized_objective(traces)
    assert norm["irls"][0] == 1.0
    assert norm["regemm"][-1] == pytest.approx(1 / 3, abs=1e-4)


def test_escape_experiment_small():
    assert escape_experiment(0) == {}
    res = escape_experiment(5, MeanFamily(), ("irls", "regemm"), seed=1)
    assert res["irls"] <= res["regemm"]


def test_escape_from_oracle_start_always_succeeds():
    res = escape_experiment(5, MeanFamily(), ("irls",), seed=2, start="oracle")
    assert res["irls"] == 1.0
