import csv
import io
import json
import math
from dataclasses import replace

import pytest

from kpent.cli import EXIT_CONFIG, EXIT_FAIL, EXIT_PASS, main
from kpent.grid import load_grid, renyi_entropy
from kpent.report import CSV_COLUMNS, CheckReport, strip_runtime
from kpent.theorems import REGISTRY

GAUSS = json.dumps({"family": "gaussian", "dim": 1, "mean": [0.0], "cov": [[1.0]]})
WIDE = json.dumps({"family": "gaussian", "dim": 1, "mean": [0.0], "cov": [[4.0]]})


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.DictReader(io.StringIO(text)))


class TestGridCommands:
    def test_entropy(self, capsys):
        code, out, _ = run(capsys, "entropy", GAUSS, "--alpha", "1,2", "--grid", "512")
        assert code == EXIT_PASS
        recs = {r["alpha"]: float(r["entropy"]) for r in rows(out)}
        assert recs["1"] == pytest.approx(0.5 * math.log(2 * math.pi * math.e), abs=1e-3)
        assert recs["2"] == pytest.approx(0.5 * math.log(4 * math.pi), abs=1e-3)
        assert recs["N"] == pytest.approx(2 * math.pi * math.e, rel=1e-2)

    def test_convolve_writes_grid(self, capsys, tmp_path):
        out_path = tmp_path / "sum.npz"
        code, out, _ = run(capsys, "convolve", GAUSS, GAUSS, "--out", str(out_path))
        assert code == EXIT_PASS
        summary = json.loads(out)
        g = load_grid(out_path)
        assert summary["h1"] == renyi_entropy(g, 1)
        assert summary["h1"] == pytest.approx(0.5 * math.log(4 * math.pi * math.e), abs=1e-3)

    def test_rearrange_roundtrip(self, capsys, tmp_path):
        out_path = tmp_path / "r.npz"
        assert run(capsys, "rearrange", WIDE, "--out", str(out_path))[0] == EXIT_PASS
        # a saved grid is accepted as input
        code, out, _ = run(capsys, "entropy", str(out_path), "--alpha", "1")
        assert code == EXIT_PASS and len(rows(out)) == 2

    def test_majorize_exit_codes(self, capsys):
        code, out, _ = run(capsys, "majorize", WIDE, GAUSS)
        assert code == EXIT_PASS and json.loads(out)["holds"]
        code, out, _ = run(capsys, "majorize", GAUSS, WIDE)
        assert code == EXIT_FAIL and not json.loads(out)["holds"]

    def test_diversity(self, capsys):
        code, out, _ = run(capsys, "diversity", "--points", "[[0],[1]]", "--t", "1")
        assert code == EXIT_PASS
        (rec,) = rows(out)
        assert float(rec["D"]) == pytest.approx(2 / (1 + math.exp(-1)), rel=1e-14)
        code, out, _ = run(capsys, "diversity", "--law", GAUSS, "--alpha", "1,2", "--format", "json")
        assert code == EXIT_PASS and [r["alpha"] for r in json.loads(out)] == [1, 2]

    def test_diversity_needs_input(self, capsys):
        assert run(capsys, "diversity")[0] == EXIT_CONFIG


class TestSuiteCommands:
    def test_verify_csv(self, capsys):
        code, out, _ = run(capsys, "verify", "T3.2-linear-epi", "--seed", "3", "--instances", "4")
        assert code == EXIT_PASS
        recs = rows(out)
        assert len(recs) == 4 and tuple(recs[0]) == CSV_COLUMNS
        assert all(r["pass"] == "true" for r in recs)

    def test_verify_json_to_file(self, capsys, tmp_path):
        p = tmp_path / "r.json"
        code, out, _ = run(capsys, "verify", "T3.1-vector-epi", "--format", "json", "--out", str(p))
        assert code == EXIT_PASS and out == ""
        data = json.loads(p.read_text())
        assert data[0]["theorem_id"] == "T3.1-vector-epi" and data[0]["passed"]

    def test_verify_deterministic(self, capsys):
        argv = ("verify", "CONJ1.1-kp-union", "--seed", "5", "--samples", "100000", "--instances", "2")
        a = run(capsys, *argv)[1]
        b = run(capsys, *argv, "--workers", "2")[1]
        assert strip_runtime(a) == strip_runtime(b)

    def test_hypothesis_range_is_config_error(self, capsys):
        code, _, err = run(capsys, "verify", "T2.1-lambdaX", "--params", '{"lambda": 1.5}')
        assert code == EXIT_CONFIG and "lambda" in err

    def test_failing_row_exits_one(self, capsys, monkeypatch):
        tid = "Q1.1-big-question"

        def violating(params, ctx):
            return [CheckReport.build(tid, 2.0, 1.0)]

        monkeypatch.setitem(REGISTRY, tid, replace(REGISTRY[tid], runner=violating))
        code, out, _ = run(capsys, "verify", tid)
        assert code == EXIT_FAIL and rows(out)[0]["pass"] == "false"
        code, out, _ = run(capsys, "falsify", tid, "--trials", "2")
        assert code == EXIT_FAIL and json.loads(out)["flags"] == 2

    def test_sweep(self, capsys):
        code, out, _ = run(capsys, "sweep", "T2.1-lambdaX", "--param", "lambda", "--values", "0.25,0.5,0.75")
        assert code == EXIT_PASS
        lams = {json.loads(r["params"])["sweep"]["lambda"] for r in rows(out)}
        assert lams == {0.25, 0.5, 0.75}

    def test_kp_check(self, capsys):
        centers = json.dumps({"dim": 2, "radius": 1.0, "centers": [[0, 0], [1, 0], [0, 1]]})
        code, out, _ = run(capsys, "kp-check", "--mode", "intersection", "--centers", centers,
                           "--T", "scaling", "--samples", "100000")
        assert code == EXIT_PASS
        assert rows(out)[0]["theorem_id"] == "CONJ1.3-kp-intersection"
        code, out, _ = run(capsys, "kp-check", "--k", "4", "--samples", "100000")
        assert code == EXIT_PASS and rows(out)[0]["k"] == "4"

    def test_epi_check(self, capsys):
        for kind in ("vector", "linear", "delta"):
            code, out, _ = run(capsys, "epi-check", kind)
            assert code == EXIT_PASS, out

    def test_falsify(self, capsys, tmp_path):
        code, out, _ = run(capsys, "falsify", "CONJ1.3-kp-intersection", "--trials", "20",
                           "--params", '{"k": 2}', "--bundles", str(tmp_path))
        assert code == EXIT_PASS
        info = json.loads(out)
        assert info["trials"] == 20 and info["flags"] == 0
        assert list(tmp_path.iterdir()) == []

    def test_selftest_and_list(self, capsys):
        code, out, _ = run(capsys, "selftest")
        assert code == EXIT_PASS and out.strip().endswith("selftest ok")
        code, out, _ = run(capsys, "list")
        assert code == EXIT_PASS and len(out.strip().splitlines()) == 25

    def test_config_file(self, capsys, tmp_path):
        p = tmp_path / "c.toml"
        p.write_text('seed = 9\nformat = "json"\n[theorems."T3.2-linear-epi"]\ninstances = 2\n')
        code, out, _ = run(capsys, "verify", "T3.2-linear-epi", "--config", str(p))
        assert code == EXIT_PASS
        data = json.loads(out)
        assert len(data) == 2
        # command-line flags override the file
        code, out, _ = run(capsys, "verify", "T3.2-linear-epi", "--config", str(p), "--format", "csv")
        assert len(rows(out)) == 2


class TestConfigErrors:
    @pytest.mark.parametrize("argv", [
        ["verify", "NOPE"],
        ["verify", "T3.2-linear-epi", "--params", "{not json"],
        ["verify", "T3.2-linear-epi", "--params", "[1, 2]"],
        ["sweep", "T3.1-vector-epi", "--param", "lambda", "--values", "1"],
        ["sweep", "T2.1-lambdaX", "--param", "alpha", "--values", "x"],
        ["verify", "T3.2-linear-epi", "--config", "/nonexistent.toml"],
        ["verify", "T3.2-linear-epi", "--seed", "-4"],
        ["entropy", "{\"family\": \"nope\", \"dim\": 1}"],
        ["no-such-command"],
        [],
    ])
    def test_exit_two(self, capsys, argv):
        code, _, err = run(capsys, *argv)
        assert code == EXIT_CONFIG
        assert err

    def test_hypothesis_violation(self, capsys):
        mixture = json.dumps({"family": "gaussian_mixture", "dim": 1, "weights": [0.5, 0.5],
                              "means": [[-3.0], [3.0]], "sigma": 1.0})
        code, _, err = run(capsys, "verify", "T2.1-lambdaX", "--params", json.dumps({"X": json.loads(mixture)}))
        assert code == EXIT_CONFIG and "hypothesis violated" in err

    def test_help_exits_zero(self, capsys):
        assert run(capsys, "--help")[0] == EXIT_PASS
