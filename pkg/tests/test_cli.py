import json
import subprocess
import sys

import jsonschema
import pytest

from conftest import PROBLEMS
from stochdual.cli import run
from stochdual.io import load_schema


def call(capsys, *argv):
    code = run([str(a) for a in argv])
    out = capsys.readouterr()
    return code, out.out, out.err


def call_json(capsys, *argv):
    code, out, err = call(capsys, *argv, "--json")
    rep = json.loads(out)
    jsonschema.validate(rep, load_schema("report.schema.json"))
    return code, rep, err


P = PROBLEMS


@pytest.mark.parametrize("argv, key, want", [
    (["solve", "--problem", P / "newsvendor.json"], "primal", 1.0),
    (["dual", "--problem", P / "newsvendor.json"], "dual", 1.0),
    (["gap", "--problem", P / "newsvendor.json"], "gap", 0.0),
    (["gap", "--problem", P / "newsvendor_shadow.json", "--dual-class", "orthogonal"], "dual", 1.0),
    (["gap", "--problem", P / "time_separable.json", "--dual-class", "martingale"], "dual", 3.5),
    (["solve", "--problem", P / "bolza.json"], "primal", 1.0),
    (["gap", "--problem", P / "bolza.json"], "dual", 1.0),
    (["superhedge", "--market", P / "binomial.json"], "cost", 1 / 3),
    (["superhedge", "--market", P / "transaction_costs.json"], "cost", 0.575 / 1.425),
    (["consumption", "--problem", P / "consumption.json"], "primal", 1.0),
    (["solve", "--problem", P / "stopping.json"], "value", 1.0),
    (["stopping-bound", "--problem", P / "stopping.json"], "bound", 1.0),
    (["stopping-bound", "--tree", P / "tree.json", "--reward", P / "reward.json", "--penalty", "zero"], "bound", 1.5),
])
def test_values(capsys, argv, key, want):
    code, rep, _ = call_json(capsys, *argv)
    assert code == 0 and rep["status"] == "ok"
    assert rep["values"][key] == pytest.approx(want, abs=1e-8)
    assert rep["input_digest"].startswith("sha256:")


def test_arbitrage_commands(capsys):
    code, rep, _ = call_json(capsys, "no-arbitrage", "--market", P / "binomial.json")
    assert code == 0 and rep["values"]["no_arbitrage"] is True and "price_system" in rep["solutions"]
    code, rep, _ = call_json(capsys, "no-arbitrage", "--market", P / "binomial_arbitrage.json")
    assert code == 0 and rep["values"]["no_arbitrage"] is False and "hedge" in rep["solutions"]
    code, out, _ = call(capsys, "ftap", "--market", P / "binomial.json")
    assert code == 0 and out.strip() == "no-arbitrage: true; Q = [0.3333, 0.6667]"
    code, out, _ = call(capsys, "ftap", "--market", P / "binomial_arbitrage.json")
    assert code == 0 and out.strip() == "no-arbitrage: false; Q = none"


def test_text_output(capsys):
    code, out, _ = call(capsys, "gap", "--problem", P / "newsvendor.json")
    assert code == 0
    lines = dict(line.split(None, 1) for line in out.strip().splitlines())
    assert lines["gap_closed"] == "true" and float(lines["primal"]) == pytest.approx(1.0)


def test_check(capsys):
    code, rep, _ = call_json(capsys, "check", "--problem", P / "binomial.json")
    assert code == 0 and rep["values"]["errors"] == 0
    code, rep, _ = call_json(capsys, "check", "--problem", P / "bad.json")
    assert code == 2 and rep["status"] == "invalid"
    assert any("summing to 0.9" in d["message"] for d in rep["diagnostics"])
    code, rep, _ = call_json(capsys, "check", "--market", P / "bad_market.json")
    assert code == 2
    assert any(d["pointer"] == "/payload/C/1" and "invariant 0 in C" in d["message"] for d in rep["diagnostics"])


def test_deterministic_reports(capsys):
    a = call_json(capsys, "gap", "--problem", P / "newsvendor.json")[1]
    b = call_json(capsys, "gap", "--problem", P / "newsvendor.json")[1]
    a.pop("wall_time"), b.pop("wall_time")
    assert json.dumps(a, sort_keys=True) == json.dumps(b, sort_keys=True)
    mc = ["stopping-bound", "--problem", P / "stopping.json", "--penalty", "zero", "--mc", "500", "--seed", "3"]
    a = call_json(capsys, *mc)[1]
    b = call_json(capsys, *mc)[1]
    assert a["values"] == b["values"] and a["seed"] == 3


def test_malformed_json(capsys, tmp_path):
    f = tmp_path / "broken.json"
    f.write_text('{\n  "format_version": "1.0",\n  "kind": "program"\n  "payload": {}\n}\n')
    code, out, err = call(capsys, "solve", "--problem", f)
    assert code == 2 and out == ""
    assert "line 4" in err


def test_missing_claim_node(capsys, tmp_path):
    data = json.loads((P / "binomial.json").read_text())
    del data["payload"]["claim"]["2"]
    f = tmp_path / "claim.json"
    f.write_text(json.dumps(data))
    code, rep, _ = call_json(capsys, "superhedge", "--market", f)
    assert code == 2
    assert any("node 2" in d["message"] and d["pointer"].startswith("/payload/claim") for d in rep["diagnostics"])


def test_usage_errors(capsys):
    code, _, err = call(capsys, "stopping-bound", "--problem", P / "stopping.json", "--mc", "100")
    assert code == 2 and "--seed" in err
    code, _, _ = call(capsys, "solve", "--problem", P / "newsvendor.json", "--bogus")
    assert code == 2
    code, _, _ = call(capsys, "frobnicate")
    assert code == 2
    code, _, _ = call(capsys, "gap", "--problem", P / "newsvendor.json", "--dual-class", "martingale")
    assert code == 2


def test_infeasible_solve_exits_1(capsys, tmp_path):
    data = json.loads((P / "newsvendor.json").read_text())
    data["payload"]["terms"]["0"] = {"dim": 1, "pieces": [], "ineq": [[1.0, 0.0], [-1.0, -1.0]], "eq": []}
    f = tmp_path / "infeasible.json"
    f.write_text(json.dumps(data))
    code, rep, _ = call_json(capsys, "solve", "--problem", f)
    assert code == 1 and rep["status"] == "failure"
    assert rep["values"]["primal"] == "inf"


def test_console_entry_point():
    r = subprocess.run([sys.executable, "-m", "stochdual.cli", "ftap", "--market", str(P / "binomial.json")],
                       capture_output=True, text=True, timeout=60)
    assert r.returncode == 0 and r.stdout.strip() == "no-arbitrage: true; Q = [0.3333, 0.6667]"
