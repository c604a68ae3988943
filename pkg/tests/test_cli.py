import csv

from robustfit.bal import SynthConfig, synth_ba, write_bal
from robustfit.cli import main

MEAN = "kind=mean,data=0;0;0;10,theta0=10"


def test_run_writes_trace(tmp_path):
    out = tmp_path / "t.csv"
    code = main(["run", "--method", "regemm", "--synthetic", MEAN, "--max-iter", "5", "--out", str(out)])
    assert code == 2
    rows = list(csv.reader(out.open()))
    assert rows[0][:8] == ["iter", "seconds", "psi", "aux", "h", "inlier_rate", "step_kind", "accepted"]
    assert len(rows) == 1 + 6


def test_run_is_implied_and_prints_to_stdout(capsys):
    assert main(["--method", "asker", "--synthetic", MEAN, "--max-iter", "200"]) == 0
    out, err = capsys.readouterr()
    assert out.startswith("iter,seconds,psi")
    assert "converged" in err


def test_usage_errors():
    assert main(["run", "--method", "bogus", "--synthetic", MEAN]) == 64
    assert main(["run", "--method", "irls"]) == 64
    assert main(["run", "--method", "irls", "--synthetic", MEAN, "--tau", "-1"]) == 64
    assert main([]) == 64


def test_data_errors(tmp_path):
    assert main(["run", "--method", "irls", "--input", str(tmp_path / "missing.txt")]) == 65
    bad = tmp_path / "bad.txt"
    bad.write_text("1 1\n")
    assert main(["run", "--method", "irls", "--input", str(bad)]) == 65


def test_run_on_bal_file(tmp_path):
    path = tmp_path / "scene.txt.bz2"
    write_bal(synth_ba(SynthConfig(cameras=3, points=20)).dataset, path)
    assert main(["run", "--method", "irls", "--tau", "5", "--input", str(path), "--max-iter", "3",
                 "--out", str(tmp_path / "o.csv")]) in (0, 2)


def test_profile_command(tmp_path, capsys):
    for m in ("irls", "regemm"):
        main(["run", "--method", m, "--synthetic", MEAN, "--out", str(tmp_path / f"mean__{m}.csv")])
    capsys.readouterr()
    assert main(["profile", str(tmp_path / "mean__irls.csv"), str(tmp_path / "mean__regemm.csv"),
                 "--ratios", "1,2"]) == 0
    out = capsys.readouterr().out
    assert "regemm,1.0000,1.0000" in out


def test_escape_command(capsys):
    assert main(["escape", "--trials", "3", "--methods", "irls,regemm"]) == 0
    assert capsys.readouterr().out.startswith("method,success_rate")
    assert main(["escape", "--methods", "nope"]) == 64
