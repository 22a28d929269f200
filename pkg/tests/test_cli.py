import csv
import io
import json

import pytest

from recagg.cli import Results, emit_csv, main
from recagg.envs import mdp_to_dict, save_stochastic_mdp
from recagg.mdp import TabularMdp
from recagg.stochastic import two_step_example

FIG1 = "dsum(1),mean,dmax(1),dmin(1),top(2),range"


def run(capsys, *argv):
    code = main(list(argv))
    out, err = capsys.readouterr()
    return code, out, err


def rows(text):
    return list(csv.reader(io.StringIO(text)))


def test_enumerate_fig1_csv(capsys):
    code, out, _ = run(capsys, "enumerate", "--env", "toy-dag", "--aggs", FIG1, "--format", "csv")
    assert code == 0
    assert rows(out) == [
        ["policy_id", *FIG1.split(","), "truncated"],
        ["1", "9", "3", "5", "1", "3", "4", "false"],
        ["2", "8", "4", "4", "4", "4", "0", "false"],
        ["3", "6", "3", "6", "0", "0", "6", "false"],
    ]


def test_enumerate_table_mentions_objective(capsys):
    code, out, _ = run(capsys, "enumerate", "--aggs", "range", "--minimize")
    assert code == 0
    assert "objective: minimize" in out
    assert "best range: policy 2 (0)" in out


def test_vi_dmin_start_value(capsys):
    code, out, _ = run(capsys, "vi", "--env", "toy-dag", "--aggs", "dmin(1)", "--format", "csv")
    assert code == 0
    header, row = rows(out)
    assert row[header.index("start_value")] == "4"
    assert row[header.index("policy")].split()[0] == "blue"


def test_missing_env_file(capsys):
    code, out, err = run(capsys, "eval", "--env", "nonexistent.json")
    assert code == 2 and out == ""
    assert "nonexistent.json" in err


def test_byte_identical_output(tmp_path):
    paths = [tmp_path / "a.csv", tmp_path / "b.csv"]
    for p in paths:
        assert main(["qlearn", "--env", "grid", "--aggs", "dsum(0.9),min", "--seeds", "0..2",
                     "--steps", "2000", "--format", "csv", "--out", str(p)]) == 0
    assert paths[0].read_bytes() == paths[1].read_bytes()
    data = rows(paths[0].read_text())
    assert len(data) == 7
    assert [r[0] for r in data[1:]] == ["0", "0", "1", "1", "2", "2"]


def test_undefined_mean_prints_na(tmp_path, capsys):
    p = tmp_path / "t.json"
    p.write_text(json.dumps({"states": 1, "initial": 0, "terminal": [0], "transitions": []}))
    code, out, _ = run(capsys, "enumerate", "--env", str(p), "--aggs", "mean", "--format", "csv")
    assert code == 0
    assert rows(out)[1] == ["1", "n/a", "false"]


def test_nonconvergence_exit_code(tmp_path, capsys):
    loop = TabularMdp(2, (("stay", "exit"), ()), {(0, "stay"): 0, (0, "exit"): 1},
                      {(0, "stay"): 1.0, (0, "exit"): 0.0}, (False, True), 0)
    p = tmp_path / "loop.json"
    p.write_text(json.dumps(mdp_to_dict(loop)))
    code, _, err = run(capsys, "vi", "--env", str(p), "--aggs", "dsum(1)", "--max-iter", "100")
    assert code == 1 and "converge" in err


def test_domain_and_usage_errors(capsys):
    assert run(capsys, "qlearn", "--aggs", "top(2)")[0] == 1
    code, _, err = run(capsys, "vi", "--aggs", "dsum(3)")
    assert code == 2 and "position" in err
    assert run(capsys, "enumerate", "--env", "two-step")[0] == 2
    assert run(capsys, "eval", "--env", "grid")[0] == 2
    assert run(capsys, "eval", "--policy", "9")[0] == 2
    with pytest.raises(SystemExit) as e:
        main(["vi", "--seeds", "3..1"])
    assert e.value.code == 2
    with pytest.raises(SystemExit):
        main(["frobnicate"])


def test_eval_long_format(capsys):
    code, out, _ = run(capsys, "eval", "--aggs", "mean", "--policy", "2", "--format", "csv")
    data = rows(out)
    assert code == 0 and len(data) == 7
    assert data[1] == ["2", "0", "mean", "4", "4", "0"]
    assert data[-1][3:] == ["n/a", "n/a", "n/a"]


def test_qlearn_errors_are_tiny(capsys):
    code, out, _ = run(capsys, "qlearn", "--aggs", "dsum(0.9),dmax(0.9),min", "--format", "csv")
    assert code == 0
    for r in rows(out)[1:]:
        assert float(r[4]) <= 1e-6


def test_mc_and_gap(tmp_path, capsys):
    code, out, _ = run(capsys, "gap", "--env", "two-step", "--aggs", "max,dsum(0.7)",
                       "--format", "csv")
    assert code == 0
    assert rows(out)[1] == ["max", "7.5", "5", "2.5"]
    smdp, _ = two_step_example()
    p = tmp_path / "s.json"
    save_stochastic_mdp(smdp, p)
    code, out, _ = run(capsys, "mc", "--env", str(p), "--aggs", "max", "--samples", "4000",
                       "--format", "csv")
    assert code == 0
    header, row = rows(out)
    assert row[header.index("exact_mean")] == "7.5"
    mean, se = float(row[header.index("mean")]), float(row[header.index("std_error")])
    assert abs(mean - 7.5) <= 4 * se


def test_gae_check_passes(capsys):
    code, out, _ = run(capsys, "gae-check", "--aggs", "dsum(0.9),mean,top(2)", "--format", "csv")
    assert code == 0
    data = rows(out)
    assert {r[1] for r in data[1:]} == {"closed-form", "zero-advantage", "critic-targets",
                                        "twin-min"}
    assert all(r[-1] == "true" for r in data[1:])


def test_grid_variants(capsys):
    code, out, _ = run(capsys, "vi", "--env", "grid:2x2", "--aggs", "dsum(0.9)", "--format", "csv")
    assert code == 0
    code, out, _ = run(capsys, "vi", "--env", "grid", "--format", "csv", "--aggs", "dsum(1)",
                       "--grid", '{"rows": 1, "cols": 3, "goal": [0, 2], "goal_reward": 2}')
    assert code == 0
    header, row = rows(out)
    assert row[header.index("start_value")] == "0"  # -2 entering column 1, then +2
    assert run(capsys, "vi", "--env", "grid", "--grid", "{bad")[0] == 2


def test_emit_csv_formats_numbers(tmp_path):
    res = Results(["a", "b", "c"], [[1 / 3, None, True], [1e-12, 2, float("inf")]])
    text = emit_csv(res, tmp_path / "x.csv")
    assert (tmp_path / "x.csv").read_text() == text
    assert text.splitlines() == ["a,b,c", "0.333333333,n/a,true", "1e-12,2,inf"]
