import json
import subprocess
import sys

import numpy as np
import pytest

from covop.cli import main
from covop.exceptions import DegenerateGroupError
from covop.fileio import CurveFileError, ingest_curves, write_curves
from covop.simgen import ScenarioConfig, generate_dataset


def write(path, text):
    path.write_text(text, encoding="utf-8")
    return path


SIX_ROWS = """group,0.0,0.5,1.0
A,1,2,3
A,2,1,0
B,0,0,1
B,1,1,1
C,3,2,2
C,0,1,5
"""


def test_ingest_basic(tmp_path):
    ds = ingest_curves(write(tmp_path / "d.csv", SIX_ROWS))
    assert ds.labels == ("A", "B", "C")
    assert ds.sizes == (2, 2, 2)
    np.testing.assert_array_equal(ds.grid.points, [0.0, 0.5, 1.0])
    np.testing.assert_array_equal(ds.groups[2].values, [[3, 2, 2], [0, 1, 5]])


def test_ingest_separate_labels_and_missing(tmp_path):
    data = write(tmp_path / "d.csv", "0,1\n1,2\n3,4\nx,1\n5,5\n6,7\n8,9\n")
    labels = write(tmp_path / "l.csv", "label\nx\nx\nx\ny\ny\ny\n")
    with pytest.raises(CurveFileError, match="non-numeric"):
        ingest_curves(data, labels)
    data = write(tmp_path / "d.csv", "0,1,observed\n1,2,1\n3,4,1\n,,0\n5,5,1\n6,7,1\n8,9,1\n")
    ds = ingest_curves(data, labels)
    assert ds.kappa == (2, 3)
    assert ds.n_missing == 1


@pytest.mark.parametrize(
    "text,match",
    [
        ("group,0,0,1\nA,1,2,3\nA,1,2,3\nB,1,1,1\nB,2,2,2\n", "duplicate grid"),
        ("group,0,1\nA,1,2\nA,1\nB,1,1\nB,2,2\n", "row 3"),
        ("group,0,1\nA,1,x\nA,1,2\nB,1,1\nB,2,2\n", "row 2, column 3"),
        ("group,1,0\nA,1,2\nA,1,3\nB,1,1\nB,2,2\n", "increasing"),
        ("group,0,1,observed\nA,1,2,2\nA,1,3,1\nB,1,1,1\nB,2,2,1\n", "0 or 1"),
        ("0,1\n1,2\n", "labels are required"),
    ],
)
def test_ingest_errors(tmp_path, text, match):
    with pytest.raises(CurveFileError, match=match):
        ingest_curves(write(tmp_path / "d.csv", text))


def test_ingest_degenerate_group(tmp_path):
    with pytest.raises(DegenerateGroupError):
        ingest_curves(write(tmp_path / "d.csv", "group,0,1\nA,1,2\nB,1,1\nB,2,2\n"))


def test_simulate_roundtrip_is_exact(tmp_path):
    cfg = ScenarioConfig(q=3, n_per_group=4, p=6, missing_group=2)
    ds = generate_dataset(cfg, 1.0, 0)
    write_curves(tmp_path / "s.csv", ds)
    back = ingest_curves(tmp_path / "s.csv")
    for a, b in zip(ds.groups, back.groups):
        np.testing.assert_array_equal(a.values, b.values)
        np.testing.assert_array_equal(a.observed, b.observed)
    np.testing.assert_array_equal(ds.grid.points, back.grid.points)


def run_test_cmd(tmp_path, name, *extra):
    out = tmp_path / f"{name}.json"
    code = main(["test", "--data", str(tmp_path / "data.csv"), "--out", str(out), *extra])
    return code, json.loads(out.read_text()) if out.exists() else None


@pytest.fixture
def sim_file(tmp_path):
    cfg = ScenarioConfig(q=3, n_per_group=8, p=7, seed=4)
    write_curves(tmp_path / "data.csv", generate_dataset(cfg, 0.0, 0))
    return tmp_path


def pvalue_fields(report):
    return json.dumps([report["global_p"], report["partial_p"]])


def test_cli_determinism_and_report(sim_file, capsys):
    code, a = run_test_cmd(sim_file, "a", "--B", "200", "--seed", "7")
    _, b = run_test_cmd(sim_file, "b", "--B", "200", "--seed", "7")
    assert code == 0
    assert pvalue_fields(a) == pvalue_fields(b)
    assert a["kappa_star"] == [8, 8, 8]
    assert a["config"]["B"] == 200 and a["config"]["adjustment"] == "tippett"
    assert [(e["i"], e["j"]) for e in a["partial_p"]] == [(1, 2), (1, 3), (2, 3)]
    matrix = (sim_file / "a_adjusted.csv").read_text().splitlines()
    assert matrix[0] == ",1,2,3"
    assert matrix[1] == "1,,,"
    cells = matrix[3].split(",")
    assert cells[3] == "" and float(cells[1]) == a["partial_p"][1]["adjusted"]
    assert "global p-value" in capsys.readouterr().out


def test_cli_two_groups_global_equals_partial(tmp_path):
    cfg = ScenarioConfig(q=2, n_per_group=8, p=5, affected=(2,))
    write_curves(tmp_path / "data.csv", generate_dataset(cfg, 0.0, 0))
    _, rep = run_test_cmd(tmp_path, "r", "--B", "100")
    assert rep["global_p"] == pytest.approx(rep["partial_p"][0]["raw"])


def test_cli_strong_alternative(tmp_path):
    cfg = ScenarioConfig(q=3, n_per_group=20, p=31, gammas=(5.0,), seed=11)
    write_curves(tmp_path / "data.csv", generate_dataset(cfg, 5.0, 0))
    _, rep = run_test_cmd(tmp_path, "r", "--B", "1000", "--combiner", "max-t")
    assert rep["global_p"] <= 0.01


def test_cli_incompatible_combination_and_errors(sim_file, capsys):
    with pytest.raises(SystemExit) as exc:
        main(["test", "--data", str(sim_file / "data.csv"), "--combiner", "max-t",
              "--adjustment", "closed"])
    assert exc.value.code != 0
    write(sim_file / "bad.csv", "group,0,0\nA,1,2\n")
    assert main(["test", "--data", str(sim_file / "bad.csv")]) == 1
    assert "duplicate grid" in capsys.readouterr().err


def test_cli_power_and_simulate(tmp_path):
    scen = {"q": 3, "n_per_group": 6, "p": 5, "gammas": [0.0], "replicates": 4,
            "n_permutations": 50, "metrics": ["hs", "sqrt"], "seed": 2}
    write(tmp_path / "scen.json", json.dumps(scen))
    assert main(["power", "--scenario", str(tmp_path / "scen.json"),
                 "--out-dir", str(tmp_path / "pw")]) == 0
    payload = json.loads((tmp_path / "pw" / "power.json").read_text())
    assert {r["gamma"] for r in payload["rows"]} == {0.0}
    assert {r["metric"] for r in payload["rows"]} == {"hs", "sqrt"}
    assert (tmp_path / "pw" / "power.csv").read_text().startswith("gamma,method")
    assert main(["simulate", "--scenario", str(tmp_path / "scen.json"),
                 "--out-dir", str(tmp_path / "sim")]) == 0
    manifest = json.loads((tmp_path / "sim" / "manifest.json").read_text())
    assert [f["file"] for f in manifest["files"]][:2] == ["gamma0_rep0000.csv", "gamma0_rep0001.csv"]
    ds = ingest_curves(tmp_path / "sim" / "gamma0_rep0001.csv")
    ref = generate_dataset(ScenarioConfig.from_dict(scen), 0.0, 1)
    np.testing.assert_array_equal(ds.groups[1].values, ref.groups[1].values)


def test_cli_scenario_with_sigma_csv(tmp_path):
    np.savetxt(tmp_path / "s1.csv", np.eye(4), delimiter=",")
    scen = {"q": 2, "n_per_group": 5, "p": 4, "replicates": 1, "n_permutations": 20,
            "affected": [2], "sigma1": "s1.csv", "sigma2": "s1.csv"}
    write(tmp_path / "scen.json", json.dumps(scen))
    assert main(["power", "--scenario", str(tmp_path / "scen.json"),
                 "--out-dir", str(tmp_path / "o")]) == 0
    write(tmp_path / "bad.json", json.dumps({"q": 3, "bogus": 1}))
    assert main(["power", "--scenario", str(tmp_path / "bad.json"),
                 "--out-dir", str(tmp_path / "o")]) == 1


def test_module_entry_point():
    out = subprocess.run([sys.executable, "-m", "covop", "--version"], capture_output=True, text=True)
    assert out.returncode == 0 and out.stdout.startswith("covop ")
