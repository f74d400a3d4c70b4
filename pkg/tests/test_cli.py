import csv
import json

import pytest

from conftest import two_node_dict
from gridmor.cli import main, resolve_network

NET = "synth:ring:6:seed2"


def run(argv, capsys):
    code = main(argv)
    out = capsys.readouterr()
    return code, out.out, out.err


def test_resolve_synth_uri():
    net = resolve_network("synth:random:12:seed3:p0.4")
    assert net.n == 12


@pytest.mark.parametrize("uri", ["synth:ring:6", "synth:star:6:seed1", "synth:ring:x:seed1", "synth:ring:6:seed1:q2"])
def test_bad_synth_uri(uri, capsys):
    code, _, err = run(["lift", "--net", uri], capsys)
    assert code == 1 and "error" in err


def test_lift_reports_stats(tmp_path, capsys):
    dump = tmp_path / "h.txt"
    code, out, _ = run(["lift", "--net", NET, "--h2", "--dump-tensor", str(dump)], capsys)
    assert code == 0
    stats = json.loads(out)
    assert stats["N"] == 24 and stats["tensor_symmetric"] and stats["stable"]
    assert stats["truncated_h2_norm"] > 0
    assert len([l for l in dump.read_text().splitlines() if not l.startswith("#")]) == stats["tensor_nnz"]


def test_reduce_and_simulate(tmp_path, capsys):
    rom = tmp_path / "rom.json"
    log = tmp_path / "iters.csv"
    code, _, _ = run(["reduce", "--net", NET, "--method", "strh2-a", "--rq", "3", "--out", str(rom),
                      "--iter-log", str(log)], capsys)
    assert code == 0
    d = json.loads(rom.read_text())
    assert d["meta"]["r"] == 4 and d["config"]["rq"] == 3
    assert log.read_text().startswith("iter,")
    code, out, _ = run(["simulate", "--net", NET, "--rom", str(rom), "--T", "1", "--dt", "0.01"], capsys)
    assert code == 0
    rows = [r for r in csv.reader(l for l in out.splitlines() if not l.startswith("#"))]
    assert rows[0] == ["t", "y1"] and len(rows) == 102


@pytest.mark.parametrize("method,flag", [("pod", "--r"), ("strqbt", "--r"), ("strh2-b", "--rq")])
def test_reduce_methods(method, flag, capsys):
    code, out, _ = run(["reduce", "--net", NET, "--method", method, flag, "3"], capsys)
    assert code == 0 and json.loads(out)["meta"]["method"] == method


def test_reduce_missing_order(capsys):
    code, _, err = run(["reduce", "--net", NET], capsys)
    assert code == 1 and "--rq" in err


def test_sweep_row_count(capsys):
    code, out, _ = run(["sweep", "--net", NET, "--methods", "strh2-a,pod", "--rmin", "2", "--rmax", "4",
                        "--perturb", "0.001", "--T", "1"], capsys)
    assert code == 0
    data = [l for l in out.splitlines() if not l.startswith("#")][1:]
    assert len(data) == 3 * 2 * 2


def test_check_passes(capsys):
    code, out, _ = run(["check", "--net", "synth:ring:10:seed7"], capsys)
    report = json.loads(out)
    assert code == 0 and report["all_passed"]
    assert [c["name"] for c in report["checks"]] == [
        "tensor_symmetry", "lift_exactness", "shifted_angle_columns", "equilibrium_round_trip", "dual_output_range"]


def test_network_file_input(tmp_path, capsys):
    path = tmp_path / "net.json"
    path.write_text(json.dumps(two_node_dict()))
    code, out, _ = run(["simulate", "--net", str(path), "--T", "0.1", "--dt", "0.05"], capsys)
    assert code == 0 and out.count("\n") == 2 + 1 + 3


def test_invalid_inputs_exit_1(tmp_path, capsys):
    assert run(["lift", "--net", str(tmp_path / "missing.json")], capsys)[0] == 1
    bad = tmp_path / "bad.json"
    d = two_node_dict()
    del d["omega_R"]
    bad.write_text(json.dumps(d))
    code, _, err = run(["lift", "--net", str(bad)], capsys)
    assert code == 1 and "omega_R" in err
    assert run(["lift", "--net", NET, "--bogus"], capsys)[0] == 1
    assert run(["simulate", "--net", NET, "--dt", "-1"], capsys)[0] == 1


def test_numerical_failure_exit_2(capsys):
    code, _, err = run(["reduce", "--net", NET, "--method", "strqbt", "--r", "50"], capsys)
    assert code == 2 and "numerical failure" in err


def test_log_level_env(monkeypatch, capsys):
    monkeypatch.setenv("GRIDMOR_LOG", "loud")
    assert run(["lift", "--net", NET], capsys)[0] == 1
