import json
from pathlib import Path

import numpy as np
import pytest

from app.decomposition.networks import random_gcn
from app.decomposition.surrogate import parse_theory
from app.main import main
from app.utils.model_io import linear_model_from_payload, model_hash
from tests.conftest import make_feedforward

BUNDLED_MODEL = Path(__file__).parent.parent / "models" / "random_3_4_4_2.json"


def _error(stderr):
    line = next(line for line in stderr.splitlines() if line.startswith("{"))
    return json.loads(line)


def _without_timestamp(text):
    document = json.loads(text)
    document["provenance"].pop("created_at")
    return document


def test_verify_bundled_model(capsys):
    code = main(["verify", "--model", str(BUNDLED_MODEL), "--samples", "500", "--seed", "0", "--tol", "1e-9"])
    report = json.loads(capsys.readouterr().out)
    assert code == 0
    assert report["kind"] == "verify_report"
    properties = report["payload"]["properties"]
    assert {p["name"] for p in properties} >= {
        "decomposition_equals_forward",
        "tree_equals_forward",
        "lazy_tree_equals_forward",
        "shap_global_equals_bruteforce",
    }
    assert all(p["passed"] for p in properties)


def test_verify_gcn_model(write_model, capsys):
    path = write_model(random_gcn(2, [2, 2], seed=3))
    code = main(["verify", "--model", str(path), "--samples", "50"])
    assert code == 0
    assert json.loads(capsys.readouterr().out)["payload"]["family"] == "gcn"


def test_local_shap_violation_exits_1(write_model, quadrant_net, capsys):
    path = write_model(quadrant_net)
    code = main(["shap", "--model", str(path), "--input", "1,1", "--baseline", "-1,-1", "--mode", "local"])
    assert code == 1
    error = _error(capsys.readouterr().err)
    assert error["type"] == "error"
    assert error["data"]["code"] == "precondition_violated"
    assert "global mode" in error["data"]["message"]


def test_zero_sample_count_exits_1(capsys):
    argv = ["shap", "--model", str(BUNDLED_MODEL), "--input", "1,1,1", "--baseline", "0,0,0", "--sample", "0"]
    assert main(argv) == 1
    error = _error(capsys.readouterr().err)
    assert error["data"]["code"] == "input_error"
    assert error["data"]["field"] == "sample"


def test_global_shap_output(write_model, quadrant_net, capsys):
    path = write_model(quadrant_net)
    code = main(["shap", "--model", str(path), "--input", "1,1", "--baseline", "0,0"])
    result = json.loads(capsys.readouterr().out)
    assert code == 0
    np.testing.assert_allclose(result["payload"]["values"], [[1.0], [1.0]], atol=1e-12)
    assert result["payload"]["efficiency_gap"] == [pytest.approx(0.0, abs=1e-12)]


def test_unwrap_eval_round_trip(capsys):
    code = main(["unwrap", "--model", str(BUNDLED_MODEL), "--input", "0.3,-1.2,0.8", "--eval"])
    result = json.loads(capsys.readouterr().out)
    assert code == 0
    model = linear_model_from_payload(result["payload"])
    external = model.weight @ np.array([0.3, -1.2, 0.8]) + model.bias
    np.testing.assert_allclose(external, result["payload"]["evaluation"]["model"], rtol=1e-12)
    np.testing.assert_allclose(external, result["payload"]["evaluation"]["network"], rtol=1e-9)
    assert result["provenance"]["input"] == [0.3, -1.2, 0.8]


def test_region_contains_input(write_model, quadrant_net, capsys):
    path = write_model(quadrant_net)
    assert main(["region", "--model", str(path), "--input", "[2, -3]"]) == 0
    payload = json.loads(capsys.readouterr().out)["payload"]
    assert payload["contains_input"] is True
    assert payload["pattern"] == [[1, 0]]


def test_theory_result_carries_provenance(write_model, quadrant_net, capsys):
    path = write_model(quadrant_net)
    assert main(["theory", "--model", str(path), "--inputs", "1,1;1,-1;-1,1;-1,-1"]) == 0
    result = json.loads(capsys.readouterr().out)
    assert result["kind"] == "theory"
    assert result["provenance"]["model_hash"] == model_hash(path)
    assert result["provenance"]["input"] == [[1.0, 1.0], [1.0, -1.0], [-1.0, 1.0], [-1.0, -1.0]]
    assert (result["payload"]["atoms"], result["payload"]["terms"]) == (2, 4)
    theory = parse_theory(result["payload"]["text"])
    assert [len(term.literals) for term in theory.terms] == [2, 2, 2, 2]


def test_theory_text(write_model, quadrant_net, capsys):
    path = write_model(quadrant_net)
    assert main(["theory", "--model", str(path), "--inputs", "-1,1;1,-1", "--text"]) == 0
    lines = capsys.readouterr().out.splitlines()
    assert sum(line.startswith("atom ") for line in lines) == 2
    terms = [line.split() for line in lines if line.startswith("term ")]
    assert [len(term) for term in terms] == [4, 4]


def test_negative_leading_input_is_a_value(write_model, quadrant_net, capsys):
    path = write_model(quadrant_net)
    assert main(["unwrap", "--model", str(path), "--input", "-1,2"]) == 0
    payload = json.loads(capsys.readouterr().out)["payload"]
    assert payload["pattern"] == [[0, 1]]
    assert payload["weight"] == [[0.0, 1.0]]
    assert main(["region", "--model", str(path), "--input", "-.5,-2"]) == 0
    assert json.loads(capsys.readouterr().out)["payload"]["pattern"] == [[0, 0]]


def test_tree_stats(write_model, quadrant_net, capsys):
    path = write_model(quadrant_net)
    assert main(["tree", "--model", str(path), "--materialize", "--feasibility"]) == 0
    stats = json.loads(capsys.readouterr().out)["payload"]["stats"]
    assert stats["leaves"] == 4
    assert stats["feasible_leaves"] == 4


def test_tree_budget_exceeded(capsys):
    assert main(["tree", "--model", str(BUNDLED_MODEL), "--materialize", "--max-leaves", "16"]) == 1
    assert _error(capsys.readouterr().err)["data"]["code"] == "cap_exceeded"


def test_enumerate_exhaustive(write_model, quadrant_net, capsys):
    path = write_model(quadrant_net)
    assert main(["enumerate", "--model", str(path), "--box", "-1", "1", "--strategy", "exhaustive"]) == 0
    payload = json.loads(capsys.readouterr().out)["payload"]
    assert payload["count"] == 4


def test_bad_flag_exits_1(capsys):
    assert main(["unwrap", "--model", str(BUNDLED_MODEL), "--bogus"]) == 1
    assert _error(capsys.readouterr().err)["data"]["code"] == "input_error"


def test_wrong_input_size_exits_1(capsys):
    assert main(["unwrap", "--model", str(BUNDLED_MODEL), "--input", "1,2"]) == 1
    assert _error(capsys.readouterr().err)["data"]["code"] == "input_error"


def test_missing_model_exits_1(tmp_path, capsys):
    assert main(["unwrap", "--model", str(tmp_path / "none.json"), "--input", "1"]) == 1
    assert _error(capsys.readouterr().err)["data"]["code"] == "model_parse_error"


@pytest.mark.parametrize("argv", [
    ["enumerate", "--box", "-2", "2", "--count", "300", "--seed", "7"],
    ["shap", "--input", "0.5,0.1,-0.4", "--baseline", "0,0,0", "--seed", "2"],
])
def test_identical_runs_are_identical(argv, tmp_path):
    outputs = []
    for run in range(2):
        out = tmp_path / f"run{run}.json"
        assert main(argv[:1] + ["--model", str(BUNDLED_MODEL), "--out", str(out)] + argv[1:]) == 0
        outputs.append(_without_timestamp(out.read_text()))
    assert outputs[0] == outputs[1]


def test_unwrap_reports_local_weight(write_model, capsys):
    net = make_feedforward((np.eye(2), np.zeros(2)), ([[1.0, -1.0]], [0.0]))
    path = write_model(net)
    assert main(["unwrap", "--model", str(path), "--input", "2,1"]) == 0
    payload = json.loads(capsys.readouterr().out)["payload"]
    assert payload["weight"] == [[1.0, -1.0]]


def test_environment_is_loaded_once(monkeypatch, capsys):
    calls = []
    monkeypatch.setattr("app.main.load_dotenv", lambda *args, **kwargs: calls.append(args))
    assert main(["unwrap", "--model", str(BUNDLED_MODEL), "--bogus"]) == 1
    assert len(calls) == 1
