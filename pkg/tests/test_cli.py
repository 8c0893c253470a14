import csv
import subprocess
import sys

import numpy as np
import pytest

from cbswap import cli


def read_csv(path):
    lines = path.read_text().splitlines()
    comments = [ln for ln in lines if ln.startswith("#")]
    rows = list(csv.DictReader(ln for ln in lines if not ln.startswith("#")))
    return comments, rows


def run(tmp_path, *argv):
    return cli.main([*argv, "--out", str(tmp_path)])


def test_exact(tmp_path):
    assert run(tmp_path, "exact", "--n", "8", "--target", "3", "--samples", "3000",
               "--save-table") == 0
    comments, rows = read_csv(tmp_path / "exact_samples.csv")
    assert len(rows) == 3000 and all(len(r["ones"].split()) == 3 for r in rows)
    seen = {int(k) for r in rows for k in r["ones"].split()}
    assert min(seen) >= 1 and max(seen) <= 8  # 1-based positions
    assert any(c.startswith("# seed=") for c in comments)
    _, stats = read_csv(tmp_path / "exact_stats.csv")
    tv = {r["statistic"]: float(r["value"]) for r in stats}["tv_vs_oracle"]
    assert 0 <= tv < 0.1
    assert (tmp_path / "table.cbqt").read_bytes()[:4] == b"CBQT"


def test_mcmc_and_coupled(tmp_path):
    assert run(tmp_path, "mcmc", "--n", "40", "--steps", "5000", "--points", "10") == 0
    _, rows = read_csv(tmp_path / "mcmc_trace.csv")
    assert int(rows[-1]["t"]) == 5000
    assert run(tmp_path, "coupled", "--n", "30") == 0
    _, rows = read_csv(tmp_path / "coupled_distance.csv")
    d = [int(r["hamming"]) for r in rows]
    assert d == sorted(d, reverse=True) and d[-1] == 0


def test_meetings_deterministic(tmp_path):
    a, b = tmp_path / "a", tmp_path / "b"
    for out in (a, b):
        assert run(out, "meetings", "--n", "20", "--replicates", "30", "--seed", "7") == 0
    assert (a / "meetings.csv").read_text() != ""
    _, ra = read_csv(a / "meetings.csv")
    _, rb = read_csv(b / "meetings.csv")
    assert [r["tau"] for r in ra] == [r["tau"] for r in rb]
    assert list(ra[0]) == ["replicate", "seed", "lag", "tau", "censored"]


def test_mix(tmp_path):
    assert run(tmp_path, "mix", "--n", "20", "--replicates", "100", "--bootstrap", "50") == 0
    _, curve = read_csv(tmp_path / "tv_curve.csv")
    assert list(curve[0]) == ["t", "bound", "stderr"]
    b = [float(r["bound"]) for r in curve]
    assert all(x >= y for x, y in zip(b, b[1:]))
    _, mix = read_csv(tmp_path / "mixing.csv")
    assert len(mix) == 1 and float(mix[0]["ci_low"]) <= float(mix[0]["mixing_time"])


def test_mix_censored_is_data_error(tmp_path, capsys):
    code = run(tmp_path, "mix", "--n", "40", "--replicates", "20", "--cap", "2")
    assert code == 1
    assert "error: type=CensoredData" in capsys.readouterr().err


def test_partition_and_chasing(tmp_path):
    assert run(tmp_path, "partition", "--n", "100", "--samples", "2000") == 0
    _, rows = read_csv(tmp_path / "transitions.csv")
    assert list(rows[0]) == ["from", "to", "estimate", "ci_low", "ci_high", "n", "scaled"]
    assert len(rows) == 6
    assert run(tmp_path, "chasing", "--n", "100", "--trajectories", "20") == 0
    _, rows = read_csv(tmp_path / "chasing.csv")
    vals = {r["quantity"]: float(r["value"]) for r in rows}
    assert vals["z_13_empirical"] == 0.0 and vals["z_33_q"] == 1.0


def test_partition_equal_odds_empty(tmp_path, capsys):
    # odds are all 3/7, strictly between the thresholds
    assert run(tmp_path, "partition", "--n", "50", "--probs", "equal:0.3",
               "--w-lo", "0.1", "--w-hi", "1.0") == 1
    assert "EmptyClass" in capsys.readouterr().err
    # percentile thresholds collapse to a single value: rejected before sampling
    assert run(tmp_path, "partition", "--n", "50", "--probs", "equal:0.3") == 1
    assert "w_lo < w_hi" in capsys.readouterr().err


def test_chasing_bad_rates(tmp_path, capsys):
    assert run(tmp_path, "chasing", "--n", "50", "--rates", "1,2") == 1
    assert "error:" in capsys.readouterr().err


def test_figures(tmp_path):
    assert run(tmp_path, "figure1", "--n", "16,24", "--replicates", "30", "--bootstrap", "20",
               "--seed", "3") == 0
    comments, rows = read_csv(tmp_path / "figure1.csv")
    assert [int(r["n"]) for r in rows] == [16, 24]
    assert "# scale=nlogn" in comments
    assert (tmp_path / "figure1.svg").read_text().startswith("<svg")
    first = (tmp_path / "figure1.csv").read_text()
    assert run(tmp_path, "figure1", "--n", "16,24", "--replicates", "30", "--bootstrap", "20",
               "--seed", "3") == 0
    assert (tmp_path / "figure1.csv").read_text() == first
    assert run(tmp_path, "figure3", "--n", "24,32", "--replicates", "30", "--bootstrap", "20",
               "--fixed-target", "4") == 0
    _, rows = read_csv(tmp_path / "figure3.csv")
    assert all(int(r["target"]) == 4 for r in rows)


def test_selftest(capsys):
    assert cli.main(["selftest"]) == 0
    out = capsys.readouterr().out
    assert out.count("PASS") == 7 and "FAIL" not in out


@pytest.mark.parametrize("argv", [["bogus"], ["mix", "--replicates", "abc"], []])
def test_usage_errors_exit_2(argv):
    with pytest.raises(SystemExit) as info:
        cli.main(argv)
    assert info.value.code == 2


@pytest.mark.parametrize("argv", [
    ["exact", "--n", "4", "--probs", "equal:1.5"],
    ["exact", "--n", "10", "--target", "8"],
    ["mix", "--n", "10", "--epsilon", "2"],
    ["meetings", "--n", "10", "--replicates", "0"],
    ["exact", "--n", "3", "--probs", "csv:/nonexistent.csv"],
])
def test_data_errors_exit_1(tmp_path, argv, capsys):
    assert run(tmp_path, *argv) == 1
    err = capsys.readouterr().err.strip().splitlines()
    assert len(err) == 1 and err[0].startswith("error: type=")


def test_env_output_dir_and_subprocess(tmp_path):
    env = {"CBSWAP_OUT": str(tmp_path / "envout"), "PATH": "/usr/bin:/bin"}
    proc = subprocess.run([sys.executable, "-m", "cbswap.cli", "exact", "--n", "6", "--target",
                           "2", "--samples", "10"], env=env, capture_output=True, text=True)
    assert proc.returncode == 0, proc.stderr
    assert (tmp_path / "envout" / "exact_samples.csv").exists()
    proc = subprocess.run([sys.executable, "-m", "cbswap.cli", "nope"], capture_output=True)
    assert proc.returncode == 2


def test_csv_probabilities(tmp_path):
    p = tmp_path / "p.txt"
    p.write_text("\n".join(str(v) for v in np.linspace(0.1, 0.9, 6)))
    assert run(tmp_path, "exact", "--n", "6", "--target", "2", "--probs", f"csv:{p}",
               "--samples", "50") == 0
