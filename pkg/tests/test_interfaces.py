import copy
import csv
import io
import json

import pytest
from fastapi.testclient import TestClient

from helpers import build, chain, device, node, version
from placekit import cli
from placekit.heuristics import HEURISTICS
from placekit.model import dump_scenario, instance_to_document
from placekit.placement import Placement, check_constraints, distribution
from placekit.scenario import builtin_scale, generate, tiny_scale
from placekit.service import create_app
from placekit.solvers import SOLVERS

FAST = {"ps": 12, "ss": 2, "it": 4, "seed": 3}


@pytest.fixture(scope="module")
def client():
    return TestClient(create_app())


@pytest.fixture(scope="module")
def inst():
    return generate(tiny_scale(), 0)


@pytest.fixture(scope="module")
def doc(inst):
    return instance_to_document(inst)


@pytest.fixture
def scenario_file(tmp_path, inst):
    path = tmp_path / "tiny.json"
    path.write_text(dump_scenario(inst))
    return str(path)


# ---------------------------------------------------------------------------
# http


def test_health(client):
    r = client.get("/v1/health")
    assert r.status_code == 200 and r.json()["status"] == "ok"
    assert r.json()["solvers"] == list(SOLVERS)


def test_solve_returns_a_feasible_placement(client, inst, doc):
    r = client.post("/v1/solve", json={"scenario": doc, "solver": "moga", "config": FAST})
    assert r.status_code == 200
    body = r.json()
    p = Placement.from_json(inst, body["placement"])
    assert check_constraints(inst, p) == []
    assert sum(body["distribution"].values()) == pytest.approx(1.0, abs=1e-9)
    assert body["distribution"] == pytest.approx(distribution(inst, p))
    assert len(body["history"]["best"]) == FAST["it"] + 1


def test_moga_responses_are_byte_identical(client, doc):
    req = {"scenario": doc, "solver": "moga", "config": FAST, "include_timing": False}
    a = client.post("/v1/solve", json=req)
    b = client.post("/v1/solve", json=req)
    assert a.status_code == 200 and a.content == b.content


@pytest.mark.parametrize("solver", sorted(HEURISTICS) + ["oracle"])
def test_every_solver_is_served(client, doc, solver):
    r = client.post("/v1/solve", json={"scenario": doc, "solver": solver})
    assert r.status_code == 200 and r.json()["solver"] == solver


def test_bad_dag_is_a_400_with_path(client, doc):
    d = copy.deepcopy(doc)
    d["services"][0]["dag"][1][0] = 1
    r = client.post("/v1/solve", json={"scenario": d, "solver": "tca"})
    assert r.status_code == 400
    assert any(v["path"].startswith("scenario.services[0].dag") for v in r.json()["violations"])


def test_unknown_solver_is_a_400(client, doc):
    r = client.post("/v1/solve", json={"scenario": doc, "solver": "annealing"})
    assert r.status_code == 400 and r.json()["violations"][0]["path"] == "solver"


def test_bad_config_is_a_400(client, doc):
    r = client.post("/v1/solve", json={"scenario": doc, "solver": "moga", "config": {"ps": 1}})
    assert r.status_code == 400 and r.json()["violations"][0]["path"] == "config"


def test_malformed_body_is_a_400(client):
    r = client.post("/v1/solve", json={"solver": "tca"})
    assert r.status_code == 400 and r.json()["violations"]


def test_infeasible_is_a_422(client):
    comps = [[version(mr=3)], [version(mr=3)]]
    bad = build([node(mc=4)], [(comps, chain(2))])
    r = client.post("/v1/solve", json={"scenario": instance_to_document(bad), "solver": "tca"})
    assert r.status_code == 422


def test_oracle_refusal_is_a_422(client):
    big = instance_to_document(generate(tiny_scale(y=6, v=2, n_users=3), 0))
    r = client.post("/v1/solve", json={"scenario": big, "solver": "oracle"})
    assert r.status_code == 422 and r.json()["error"] == "SearchSpaceTooLarge"


def test_generate_endpoint(client):
    r = client.post("/v1/generate", json={"scale": "small", "seed": 1})
    assert r.status_code == 200
    assert r.json() == instance_to_document(generate(builtin_scale("small"), 1))
    assert client.post("/v1/generate", json={"scale": "huge"}).status_code == 400


# ---------------------------------------------------------------------------
# cli


def _run(argv, capsys):
    code = cli.main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_cli_tca_gives_the_hand_traced_placement(tmp_path, capsys):
    comps = [[version(cr=10, mr=1, dr=1), version(cr=5, mr=0.5, dr=0.5)]] * 2
    hand = build([node(tier=1), node(tier=2)], [(comps, chain(2)), (comps, chain(2))],
                 users=[device(cc=2000, mc=1.5, dc=8), device(mc=0.1)])
    path = tmp_path / "hand.json"
    path.write_text(dump_scenario(hand))
    code, out, _ = _run(["solve", "-s", str(path), "--solver", "tca", "--no-timing"], capsys)
    assert code == 0
    # user 0 takes one component at v0 and has room for the next only at v1;
    # user 1 has no room, so its service goes to the tier-1 node
    assert json.loads(out)["placement"] == [[0, "user", 0], [1, "user", 0],
                                            [0, "compute", 0], [0, "compute", 0]]


def test_cli_generate_is_deterministic(capsys):
    _, a, _ = _run(["generate", "--scale", "small", "--seed", "4"], capsys)
    _, b, _ = _run(["generate", "--scale", "small", "--seed", "4"], capsys)
    assert a == b and json.loads(a)["services"]


def test_cli_solve_moga_with_history(scenario_file, tmp_path, capsys):
    hist = tmp_path / "hist.csv"
    code, out, _ = _run(["solve", "-s", scenario_file, "--ps", "10", "--ss", "2", "--it", "3",
                         "--history-csv", str(hist)], capsys)
    assert code == 0 and json.loads(out)["solver"] == "moga"
    assert hist.read_text().splitlines()[0] == "iter,best,median,worst"


def test_cli_compare_has_one_row_per_solver(scenario_file, capsys):
    code, out, _ = _run(["compare", "-s", scenario_file, "--ps", "10", "--ss", "2", "--it", "3"], capsys)
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and len(rows) == 1 + len(HEURISTICS)
    assert list(rows[0]) == list(cli.COMPARE_COLUMNS)
    for r in rows:
        assert float(r["mean_component_rt_s"]) == pytest.approx(float(r["total_rt_s"]) / 6)


def test_cli_oracle(scenario_file, capsys):
    code, out, _ = _run(["oracle", "-s", scenario_file, "--no-timing"], capsys)
    assert code == 0 and json.loads(out)["solver"] == "oracle"


def test_cli_tune(scenario_file, tmp_path, capsys):
    grid = tmp_path / "grid.json"
    grid.write_text(json.dumps({"ps": [10, 20], "cr": [0.6], "mr": [0.01], "elitism": [0.05]}))
    code, out, _ = _run(["tune", "--scenario", scenario_file, "--grid", str(grid), "--repeats", "1",
                         "--it", "2"], capsys)
    rows = list(csv.DictReader(io.StringIO(out)))
    assert code == 0 and [int(r["ps"]) for r in rows] == [10, 20]
    assert any(r["on_front"] == "1" for r in rows)


def test_cli_unknown_solver_exits_with_usage(scenario_file, capsys):
    with pytest.raises(SystemExit) as exc:
        cli.main(["solve", "-s", scenario_file, "--solver", "annealing"])
    assert exc.value.code == 2
    assert "usage:" in capsys.readouterr().err


def test_cli_invalid_scenario_exits_nonzero(tmp_path, doc, capsys):
    d = copy.deepcopy(doc)
    d["services"][0]["dag"][1][0] = 1
    path = tmp_path / "bad.json"
    path.write_text(json.dumps(d))
    code, _, err = _run(["solve", "-s", str(path), "--solver", "tca"], capsys)
    assert code == 2 and "services[0].dag" in err


def test_cli_missing_file_exits_nonzero(capsys):
    code, _, err = _run(["solve", "-s", "/nonexistent.json", "--solver", "tca"], capsys)
    assert code == 1 and err.startswith("error:")
