import json
import math
from pathlib import Path

import numpy as np
import pytest

from dynfg.cli import (BENCH_COLUMNS, EXIT_INPUT, EXIT_NUMERIC, EXIT_OK, bench_rows,
                       bench_summary, main, parse_known, read_custom_ordering)
from dynfg.fgcore import F, Vdot, tau

GOLDEN = Path(__file__).parent / "golden"


def run(capsys, *argv):
    code = main([str(a) for a in argv])
    out, err = capsys.readouterr()
    return code, out, err


def test_id_zero_state(capsys):
    code, out, err = run(capsys, "id", "--urdf", "r3.urdf", "--q", "0,0,0", "--qd", "0,0,0",
                         "--qdd", "0,0,0", "--gravity", "0,0,0")
    assert code == EXIT_OK and err == ""
    res = json.loads(out)
    assert res["tau"] == [0.0, 0.0, 0.0]
    assert res["ordering"] == "rnea" and res["problem"] == "inverse"


def test_fd_pendulum(capsys):
    code, out, _ = run(capsys, "fd", "--urdf", "pend.urdf", "--tau", "0", "--q", "0",
                       "--qd", "0")
    assert code == EXIT_OK
    assert json.loads(out)["qdd"][0] == pytest.approx(-9.81, abs=1e-9)


def test_hybrid_methods_agree(capsys):
    common = ["hybrid", "--urdf", "r3.urdf", "--known", "qdd:1", "tau:2", "tau:3",
              "--q", "0.1,0.2,0.3", "--qd", "1,-1,0.5", "--qdd", "0.4,0,0", "--tau", "0,1,-2",
              "--gravity", "0,-9.81,0"]
    code, out, _ = run(capsys, *common)
    assert code == EXIT_OK
    el = json.loads(out)
    code, out, _ = run(capsys, *common, "--method", "featherstone")
    assert code == EXIT_OK
    fs = json.loads(out)
    np.testing.assert_allclose(el["qdd"], fs["qdd"], atol=1e-9)
    np.testing.assert_allclose(el["tau"], fs["tau"], atol=1e-9)
    assert el["qdd"][0] == 0.4 and el["tau"][1:] == [1.0, -2.0]


def test_orderings_flag_and_custom_file(capsys, tmp_path):
    outs = []
    for tag in ("rnea", "md", "colamd", "nd", "reverse"):
        code, out, _ = run(capsys, "id", "--urdf", "puma6.urdf", "--ordering", tag,
                           "--seed", 4)
        assert code == EXIT_OK
        outs.append(json.loads(out)["tau"])
    np.testing.assert_allclose(outs, [outs[0]] * len(outs), atol=1e-9)
    order = tmp_path / "order.txt"
    order.write_text("# rnea by hand\ntau:3\ntau:2\ntau:1\nwrench:1\nwrench:2\nwrench:3\n"
                     "twist_accel:3\ntwist_accel:2\ntwist_accel:1\n")
    keys = read_custom_ordering(str(order))
    assert keys[3] == F(1) and keys[0] == tau(3) and keys[-1] == Vdot(1)
    code, out, _ = run(capsys, "id", "--urdf", "r3.urdf", "--ordering", f"custom:{order}")
    assert code == EXIT_OK and json.loads(out)["ordering"] == "custom"


def test_exit_codes(capsys, tmp_path):
    assert run(capsys, "id")[0] == EXIT_INPUT
    assert run(capsys, "id", "--urdf", "missing.urdf")[0] == EXIT_INPUT
    assert run(capsys, "id", "--urdf", "r3.urdf", "--q", "0,0")[0] == EXIT_INPUT
    assert run(capsys, "id", "--urdf", "r3.urdf", "--ordering", "aba")[0] == EXIT_INPUT
    assert run(capsys, "fd", "--urdf", "r3.urdf", "--ordering", "bogus")[0] == EXIT_INPUT
    assert run(capsys, "hybrid", "--urdf", "r3.urdf", "--known", "qdd:1")[0] == EXIT_INPUT
    assert run(capsys, "bogus")[0] == EXIT_INPUT
    assert run(capsys, "--help")[0] == EXIT_OK
    empty = tmp_path / "empty.urdf"
    empty.write_text('<robot name="e"><link name="base"/></robot>')
    code, out, err = run(capsys, "export", "--urdf", empty)
    assert code == EXIT_INPUT and out == "" and err
    assert run(capsys, "export", "--urdf", "planar:0")[0] == EXIT_INPUT


def test_numerical_failure_exit_code(capsys, tmp_path):
    # a link with no mass and no rotational inertia leaves the forward problem singular
    urdf = tmp_path / "flat.urdf"
    urdf.write_text("""<robot name="flat"><link name="base"/>
      <link name="a"><inertial><mass value="1e-300"/></inertial></link>
      <joint name="j" type="revolute"><parent link="base"/><child link="a"/>
        <axis xyz="0 0 1"/></joint></robot>""")
    code, out, err = run(capsys, "fd", "--urdf", urdf, "--tau", "1", "--q", "0", "--qd", "0")
    assert code == EXIT_NUMERIC and out == "" and "numerical" in err


def test_parse_known():
    np.testing.assert_array_equal(parse_known(["qdd:1", "tau:2"], 2), [True, False])
    for bad in (["qdd:1"], ["qdd:1", "qdd:1"], ["x:1", "tau:2"], ["qdd1", "tau:2"]):
        with pytest.raises(ValueError):
            parse_known(bad, 2)


def test_export_graph_counts(capsys):
    code, out, _ = run(capsys, "export", "--urdf", "r3.urdf", "--what", "graph")
    assert code == EXIT_OK
    assert out.count("shape=ellipse") == 9
    factor_nodes = [ln for ln in out.splitlines() if "shape=point" in ln]
    assert len(factor_nodes) == 9


def test_export_dag_golden(capsys, tmp_path):
    target = tmp_path / "dag.dot"
    code, out, _ = run(capsys, "export", "--urdf", "r3.urdf", "--what", "dag",
                       "--ordering", "rnea", "--out", target)
    assert code == EXIT_OK and out == ""
    text = target.read_text()
    assert text == (GOLDEN / "r3_rnea_dag.dot").read_text()
    assert text.count("->") == 10
    assert len([ln for ln in text.splitlines() if ln.strip().endswith('";') and "->" not in ln]) \
        == 9


def test_bench_rows_and_trends():
    rows = bench_rows(["puma6.urdf", "planar:6"], ["forward", "inverse"],
                      ["rnea", "crba", "aba", "md", "colamd", "nd", "reverse"], 30,
                      timing=False)
    summary = bench_summary(rows)
    assert summary["all_trends_hold"]
    fills = {(r["robot"], r["problem"], r["ordering_tag"]): r["fill_edges"] for r in rows}
    for robot in ("puma6.urdf", "planar:6"):
        assert fills[(robot, "forward", "aba")] < fills[(robot, "forward", "crba")]
        assert fills[(robot, "forward", "colamd")] <= fills[(robot, "forward", "aba")]
        assert fills[(robot, "forward", "nd")] <= fills[(robot, "forward", "crba")]
        assert fills[(robot, "inverse", "colamd")] <= fills[(robot, "inverse", "rnea")]
        # orderings that do not fit a problem class are skipped
        assert (robot, "inverse", "aba") not in fills
        assert (robot, "forward", "rnea") not in fills


def test_bench_single_row_and_repetition_floor(capsys, tmp_path):
    summary = tmp_path / "s.json"
    code, out, err = run(capsys, "bench", "--robots", "r3.urdf", "--problems", "inverse",
                         "--orderings", "rnea", "--summary", summary)
    assert code == EXIT_OK and err == ""
    lines = out.splitlines()
    assert lines[0] == ",".join(BENCH_COLUMNS)
    assert len(lines) == 2
    assert int(lines[1].split(",")[-1]) > 0
    # the RNEA DAG of the 3R arm has 10 parent links
    assert json.loads(summary.read_text())["cells"][0]["min_fill"] == 10
    assert run(capsys, "bench", "--repetitions", "5")[0] == EXIT_INPUT


def test_bench_is_deterministic_without_timing(capsys):
    args = ("bench", "--robots", "puma", "planar:4", "--no-timing", "--seed", 3)
    first = run(capsys, *args)[1]
    assert first == run(capsys, *args)[1]


def test_id_is_deterministic(capsys):
    args = ("id", "--urdf", "puma6.urdf", "--seed", 9)
    assert run(capsys, *args)[1] == run(capsys, *args)[1]


def lift_config(tmp_path):
    cfg = {"model": {"kind": "planar", "n": 2}, "gravity": [0, -9.81, 0], "horizon": 2.0,
           "dt": 0.1, "initial": {"q": [-math.pi / 2, 0], "qd": [0, 0]},
           "goals": [{"t": 2.0, "q": [0.5, 0.3], "qd": [0, 0]}],
           "factors": {"torque_sigma": 10.0}}
    path = tmp_path / "lift.json"
    path.write_text(json.dumps(cfg))
    return path


def test_plan_min_torque_toggle(capsys, tmp_path):
    cfg = lift_config(tmp_path)
    efforts = []
    for extra in ((), ("--no-min-torque",)):
        out_dir = tmp_path / ("off" if extra else "on")
        code, out, err = run(capsys, "plan", cfg, "--out", out_dir, *extra)
        assert code == EXIT_OK, err
        report = json.loads((out_dir / "report.json").read_text())
        assert report["goals_met"]
        efforts.append(report["sum_tau_squared"])
        header = (out_dir / "trajectory.csv").read_text().splitlines()[0]
        assert header == "t,q1,q2,qd1,qd2,qdd1,qdd2,tau1,tau2"
    assert efforts[0] <= efforts[1]
    assert efforts[1] - efforts[0] > 1.0


def test_plan_errors(capsys, tmp_path):
    bad = tmp_path / "zero.json"
    bad.write_text(json.dumps({"model": {"kind": "cartpole"}, "horizon": 0, "dt": 0.05}))
    assert run(capsys, "plan", bad, "--out", tmp_path / "o")[0] == EXIT_INPUT
    assert run(capsys, "plan", tmp_path / "missing.json")[0] == EXIT_INPUT
    code, _, err = run(capsys, "plan", lift_config(tmp_path), "--out", tmp_path / "short",
                       "--max-iterations", "1")
    assert code == EXIT_NUMERIC and "max_iterations" in err


def test_plan_cartpole_shipped_config(capsys, tmp_path):
    from importlib import resources
    cfg = resources.files("dynfg") / "data" / "cartpole_two_goal.json"
    code, out, err = run(capsys, "plan", str(cfg), "--out", tmp_path)
    assert code == EXIT_OK, err
    report = json.loads((tmp_path / "report.json").read_text())
    assert report["goals_met"] and report["converged"]
    assert report["max_unactuated_torque"] < 1e-6
