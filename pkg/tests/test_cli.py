import csv
import io
import json

import pytest

from wiretap_guessing.cli import parse_grid, run
from wiretap_guessing.instance import InstanceError, load_instance, parse_instance


@pytest.fixture
def binary(tmp_path):
    path = tmp_path / "binary.json"
    path.write_text(json.dumps({"source": [0.5, 0.5], "distortion": "hamming"}))
    return str(path)


@pytest.fixture
def skew(tmp_path):
    path = tmp_path / "skew.json"
    path.write_text(json.dumps({"source": [0.25, 0.75], "distortion": [[0, 1], [1, 0]],
                                "labels": ["a", "b"], "repro_labels": ["A", "B"]}))
    return str(path)


def call(argv):
    out, err = io.StringIO(), io.StringIO()
    code = run(argv, out, err)
    return code, out.getvalue(), err.getvalue()


def test_parse_grid():
    assert parse_grid("0:0.5:0.05", "delta") == [round(0.05 * i, 12) for i in range(11)]
    assert parse_grid("0.3", "x") == [0.3]
    with pytest.raises(ValueError):
        parse_grid("1:0:0.1", "x")


def test_instance_validation(tmp_path):
    inst = parse_instance({"source": [0.2, 0.8], "distortion": "hamming"})
    assert inst.distortion.repro_size == 2
    bad = [
        ({"source": [0.5, 0.6], "distortion": "hamming"}, "sum"),
        ({"source": [0.5, 0.5]}, "distortion: missing"),
        ({"source": [0.5, 0.5], "distortion": [[0, 1]]}, "expected 2 rows"),
        ({"source": [0.5, 0.5], "distortion": [[0, 1], [1, 0.5]]}, "distortion[1]"),
        ({"source": [0.5, "x"], "distortion": "hamming"}, "source[1]"),
        ({"source": [0.5, 0.5], "distortion": [[0, 1], [1, 0, 2]]}, "distortion[1]"),
        ({"source": [0.5, 0.5], "distortion": "hamming", "extra": 1}, "unknown"),
    ]
    for obj, msg in bad:
        with pytest.raises(InstanceError, match=msg.replace("[", r"\[").replace("]", r"\]")):
            parse_instance(obj)
    path = tmp_path / "broken.json"
    path.write_text('{"source": [0.5,\n 0.5,]}')
    with pytest.raises(InstanceError, match="line 2"):
        load_instance(str(path))


def test_rd_curve_csv(binary):
    code, out, _ = call(["rd-curve", binary, "--delta", "0:0.5:0.05", "--csv"])
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert len(rows) == 11
    assert float(rows[2]["rate"]) == pytest.approx(0.531004406411, abs=1e-11)


def test_region_json(skew):
    code, out, _ = call(["region", skew, "--rk", "0.7", "--e", "0.1", "--delta", "0.05"])
    assert code == 0
    res = json.loads(out)
    assert {"rl_min", "rl_max", "r_min", "attaining_p"} <= set(res)
    assert res["rl_min"] == pytest.approx(0.695359745815, abs=1e-9)


def test_region_sweep_shapes(skew):
    code, out, _ = call(["region", skew, "--rk", "0.5", "--e", "0.1", "--delta", "0.05",
                         "--sweep", "rk", "0:1:0.25", "--csv"])
    assert code == 0
    rows = list(csv.DictReader(io.StringIO(out)))
    assert list(rows[0]) == ["sweep_var", "rl_min", "rl_max", "r_min"]
    rl = [float(r["rl_min"]) for r in rows]
    assert rl == sorted(rl) and rl[-1] == rl[-2]
    code, out, _ = call(["region", skew, "--rk", "0.5", "--e", "0.1", "--delta", "0.05",
                         "--sweep", "e", "0.02:0.2:0.06", "--csv"])
    rl = [float(r["rl_min"]) for r in csv.DictReader(io.StringIO(out))]
    assert rl == sorted(rl)
    code, out, _ = call(["region", skew, "--rk", "2", "--e", "0.1", "--delta", "0",
                         "--sweep", "delta", "0:0.2:0.05", "--csv"])
    rmin = [float(r["r_min"]) for r in csv.DictReader(io.StringIO(out))]
    assert rmin == sorted(rmin, reverse=True)


def test_exponent_inf(binary):
    code, out, _ = call(["exponent", binary, "--rk", "0.5", "--e", "inf", "--delta", "0"])
    assert code == 0
    assert json.loads(out)["exponent"] == pytest.approx(0.5, abs=1e-9)


def test_cover_and_types(binary):
    code, out, _ = call(["cover", binary, "--counts", "4,4", "--delta", "0.25", "--list"])
    res = json.loads(out)
    assert code == 0 and res["verified"] and len(res["codebook"]) == res["codewords"]
    code, out, _ = call(["types", binary, "--n", "3", "--csv"])
    rows = list(csv.DictReader(io.StringIO(out)))
    assert [r["counts"] for r in rows] == ["0 3", "1 2", "2 1", "3 0"]


def test_simulate_deterministic(binary, tmp_path):
    argv = ["simulate", binary, "--n", "10", "--k", "4", "--strategy", "combined", "--trials", "20000",
            "--seed", "7", "--delta", "0.1", "--e", "0.1"]
    first = call(argv)
    second = call(argv)
    assert first[0] == 0 and first[1] == second[1]
    rep = json.loads(first[1])
    assert rep["seed"] == 7 and rep["theory"]["guessing_exponent"] == pytest.approx(0.4, abs=1e-9)
    hist = tmp_path / "counts.csv"
    code, _, _ = call(argv + ["--counts-csv", str(hist), "--no-theory"])
    assert code == 0 and len(hist.read_text().splitlines()) == 20001


def test_simulate_oracle_and_limit(binary):
    code, out, _ = call(["simulate", binary, "--n", "6", "--k", "3", "--strategy", "keysearch", "--trials", "5000",
                         "--seed", "1", "--delta", "0", "--limit", "4", "--no-theory"])
    rep = json.loads(out)
    assert code == 0 and rep["empirical_error"] == pytest.approx(0.5, abs=0.03)
    code, out, _ = call(["simulate", binary, "--n", "6", "--k", "2", "--strategy", "oracle", "--trials", "2000",
                         "--seed", "1", "--delta", "0", "--no-theory"])
    assert code == 0 and json.loads(out)["empirical_error"] == 0.0


@pytest.mark.parametrize("argv", [
    ["region", "{inst}", "--rk", "-1", "--e", "0.1", "--delta", "0"],
    ["region", "{inst}", "--rk", "1", "--e", "0", "--delta", "0"],
    ["region", "{inst}", "--rk", "1", "--e", "0.1", "--delta", "-0.1"],
    ["rd-curve", "{inst}", "--delta", "a:b"],
    ["simulate", "{inst}", "--n", "0", "--k", "1", "--delta", "0"],
    ["cover", "{inst}", "--counts", "1,2,3", "--delta", "0.1"],
    ["bogus"],
    ["rd-curve", "/nonexistent.json", "--delta", "0.1"],
])
def test_validation_exit_code(binary, argv):
    code, out, err = call([a.format(inst=binary) for a in argv])
    assert code == 2 and out == "" and err.startswith("error:")


def test_nonconvergence_exit_code(tmp_path):
    path = tmp_path / "t.json"
    path.write_text(json.dumps({"source": [0.2, 0.3, 0.5],
                                "distortion": [[0, 0.7, 1.3], [0.4, 0, 2.0], [1.1, 0.6, 0]]}))
    code, out, err = call(["rd-curve", str(path), "--delta", "0.2", "--tol", "1e-12", "--max-iter", "2"])
    assert code == 1
    assert json.loads(out)[0]["converged"] is False and "did not converge" in err
