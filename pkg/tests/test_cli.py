import csv
import io
import json
import subprocess
import sys

import pytest

from planetrees.cli import COLUMNS, EXIT_CHECK, EXIT_OK, EXIT_USAGE, main
from planetrees.ordered_tree import parse_tree
from planetrees.plane_tree import diameter, walkup_count


def run(argv, capsys):
    status = main(argv)
    out = capsys.readouterr()
    return status, out.out, out.err


def csv_rows(text):
    lines = text.splitlines()
    assert lines[0].startswith("# config: ")
    assert lines[1].startswith("# schema: planetrees-")
    json.loads(lines[0][len("# config: "):])
    body = [line for line in lines[2:] if not line.startswith("# note: ")]
    return list(csv.DictReader(io.StringIO("\n".join(body))))


def test_enumerate_small(capsys):
    status, out, _ = run(["enumerate", "--n", "8"], capsys)
    assert status == EXIT_OK
    rows = csv_rows(out)
    assert [int(r["n_vertices"]) for r in rows] == list(range(2, 9))
    assert rows[2]["enumerated"] == "2" and rows[2]["walkup"] == "2"
    assert rows[0]["enumerated"] == "1" == rows[0]["walkup"]
    assert all(r["match"] == "true" for r in rows)
    assert all(int(r["enumerated"]) == walkup_count(int(r["n_vertices"]) - 1) for r in rows)
    # the 3-leaf star is the only 4-vertex tree with |K| = 3
    assert rows[2]["max_central"] == "3"


def test_enumerate_budget(capsys):
    status, _, err = run(["enumerate", "--n", "14"], capsys)
    assert status == EXIT_CHECK and "budget" in err


def test_verify_core(capsys):
    status, out, _ = run(["verify", "--suite", "core"], capsys)
    assert status == EXIT_OK
    rows = csv_rows(out)
    assert rows and all(r["passed"] == "true" for r in rows)


def test_verify_sampling_small(capsys):
    status, out, _ = run(["verify", "--suite", "sampling", "--n", "3000", "--seed", "4"], capsys)
    rows = csv_rows(out)
    assert {r["check"] for r in rows} >= {"pair_law[k=3]", "edge_uniform[k=4]"}
    assert status == (EXIT_OK if all(r["passed"] == "true" for r in rows) else EXIT_CHECK)


def test_sample_gw_deterministic(capsys):
    argv = ["sample", "gw", "--mu", "geometric", "--n", "3", "--seed", "7"]
    _, first, _ = run(argv, capsys)
    _, second, _ = run(argv, capsys)
    assert first == second
    assert len(csv_rows(first)) == 3


def test_sample_diameter_lines(capsys):
    status, out, _ = run(["sample", "diameter", "--k", "9", "--n", "20", "--seed", "3",
                          "--streams", "2", "--format", "lines"], capsys)
    assert status == EXIT_OK
    body = [line for line in out.splitlines() if not line.startswith("#")]
    assert len(body) == 20
    for line in body:
        code, edge = line.split()
        assert diameter(parse_tree(code)) == 9 and int(edge) >= 0


def test_sample_height_eq_json(capsys):
    status, out, _ = run(["sample", "height-eq", "--p", "5", "--n", "10", "--format", "json",
                          "--mu", '{"0": "1/2", "2": "1/2"}'], capsys)
    assert status == EXIT_OK
    lines = [json.loads(x) for x in out.splitlines()]
    assert lines[0]["schema"] == "planetrees-sample-tree-v1"
    assert lines[0]["config"]["p"] == 5
    assert all(x["height"] == 5 and parse_tree(x["code"]).height == 5 for x in lines[1:])


def test_stats_and_dump(capsys, tmp_path):
    dump = tmp_path / "lifetimes.csv"
    status, out, _ = run(["stats", "--p", "6,12", "--n", "50", "--dump", str(dump)], capsys)
    assert status == EXIT_OK
    rows = csv_rows(out)
    assert "calibration choice" in out.splitlines()[2]
    assert list(rows[0]) == COLUMNS["stats"]
    assert rows[0]["ks_vs_prev_p"] == "" and rows[1]["ks_vs_prev_p"] != ""
    assert all(r["half_height_ok"] == "true" and r["max_ok"] == "true" for r in rows)
    assert len(csv_rows(dump.read_text())) == 100


def test_out_file(capsys, tmp_path):
    target = tmp_path / "trees.txt"
    status, out, _ = run(["sample", "gw", "--n", "2", "--out", str(target)], capsys)
    assert status == EXIT_OK and out == ""
    assert target.read_text().startswith("# config: ")


@pytest.mark.parametrize("argv", [
    ["sample", "gw", "--mu", '{"0": "1/2", "1": "1/2"}'],
    ["sample", "height-eq"],
    ["sample", "diameter"],
    ["sample", "gw", "--mu", "{broken"],
    ["stats", "--r", "1/100", "--p", "3"],
])
def test_usage_errors(argv, capsys):
    status, _, err = run(argv, capsys)
    assert status == EXIT_USAGE and err.startswith("error:")


def test_argparse_errors(capsys):
    with pytest.raises(SystemExit) as exc:
        main(["sample", "tree"])
    assert exc.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["sample", "gw", "--n", "0"])
    assert exc.value.code == EXIT_USAGE
    with pytest.raises(SystemExit) as exc:
        main(["stats", "--p", "3,x"])
    assert exc.value.code == EXIT_USAGE


def test_module_entry_point():
    res = subprocess.run([sys.executable, "-m", "planetrees", "sample", "gw", "--n", "1",
                          "--format", "lines"], capture_output=True, text=True)
    assert res.returncode == 0 and res.stdout.startswith("# config: ")
