import csv
import io

import numpy as np
import pytest
import yaml

from mwopinion.cli import main, trajectory_csv
from mwopinion.scenarios import (
    BUILTIN_NAMES,
    ScenarioError,
    builtin,
    dump_scenario,
    load_scenario,
    parse_scenario,
    write_scenario,
)
from mwopinion.sim import integrate

TWO_AGENT = """\
name: pair
agents: 2
topics: 2
edges: [[1, 2]]
coupling:
  - edge: [1, 2]
    K: [[1, 0.5],
        [0.5, 1]]
initial: [[1, 0], [0, 1]]
solver: {h: 0.01, t_f: 15, stride: 50}
"""


@pytest.mark.parametrize("name", BUILTIN_NAMES)
def test_builtin_round_trip(tmp_path, name):
    s = builtin(name)
    assert load_scenario(write_scenario(s, tmp_path / f"{name}.yaml")) == s


def test_fig5_file_matches_reference():
    s = builtin("fig5")
    np.testing.assert_array_equal(s.initial, [[1, 2, 3], [2, 4, 4], [3, 1, 5], [4, 3, 2], [5, 6, 1]])
    assert s.topology.edges == ((1, 2), (1, 3), (2, 3), (3, 4), (4, 5))
    np.testing.assert_array_equal(s.spec.gains[3], np.ones((3, 3)))


def test_builtin_contents():
    fig6, fig5 = builtin("fig6"), builtin("fig5")
    changed = [k for k in range(5) if not np.array_equal(fig6.spec.gains[k], fig5.spec.gains[k])]
    assert changed == [1, 3]
    for K in builtin("fig9").spec.gains:
        np.testing.assert_array_equal(K, np.ones((3, 3)) - np.eye(3))


def test_asymmetric_matrix_reports_symmetry_with_line():
    text = TWO_AGENT.replace("[0.5, 1]]", "[0.25, 1]]")
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(text, "pair.yaml")
    assert any("symmetr" in p and p.startswith("pair.yaml:") for p in exc.value.problems)


def test_errors_are_itemized_with_line_numbers():
    text = TWO_AGENT.replace("initial: [[1, 0], [0, 1]]", "initial: [[1, 0]]").replace("K: [[1, 0.5],", "K: [[-1, 0.5],")
    with pytest.raises(ScenarioError) as exc:
        parse_scenario(text, "bad.yaml")
    problems = exc.value.problems
    assert any("negative" in p for p in problems)
    assert any("initial" in p and p.startswith("bad.yaml:9:") for p in problems)


def test_missing_fields_and_bad_shape():
    with pytest.raises(ScenarioError, match="missing field 'initial'"):
        parse_scenario("agents: 2\ntopics: 1\n")
    with pytest.raises(ScenarioError, match="shape"):
        parse_scenario(TWO_AGENT.replace("[0.5, 1]]", "[0.5, 1], [0, 0]]"))


def test_single_agent_scenario_is_valid_and_constant():
    s = parse_scenario("agents: 1\ntopics: 2\nedges: []\ninitial: [[0.5, -3]]\n")
    traj = integrate(s.initial, s.topology, s.spec, s.config, h=0.1, t_f=1.0)
    np.testing.assert_array_equal(traj.states[-1], [0.5, -3])


def test_dump_is_parseable_yaml():
    doc = yaml.safe_load(dump_scenario(builtin("fig7")))
    assert doc["agents"] == 5 and len(doc["coupling"]) == 5


def test_trajectory_csv_layout():
    s = parse_scenario(TWO_AGENT)
    traj = integrate(s.initial, s.topology, s.spec, s.config, h=0.1, t_f=0.55)
    rows = list(csv.reader(io.StringIO(trajectory_csv(traj, stride=2))))
    assert rows[0] == ["t", "agent", "topic", "value"]
    times = sorted({float(r[0]) for r in rows[1:]})
    assert times[0] == 0.0 and times[-1] == pytest.approx(traj.times[-1])
    assert len(rows) - 1 == len(times) * 4


def test_analyze_builtin(capsys):
    assert main(["analyze", "fig6"]) == 0
    doc = yaml.safe_load(capsys.readouterr().out)
    assert doc["regime"] == "partial-consensus"
    assert doc["cluster_bound"] == 2


def test_analyze_writes_file(tmp_path):
    out = tmp_path / "report.yaml"
    assert main(["analyze", "fig5", "--out", str(out)]) == 0
    assert yaml.safe_load(out.read_text())["regime"] == "complete-consensus"


def test_analyze_invalid_exit_2(tmp_path, capsys):
    bad = tmp_path / "bad.yaml"
    bad.write_text(TWO_AGENT.replace("[0.5, 1]]", "[0.25, 1]]"))
    assert main(["analyze", str(bad)]) == 2
    assert "bad.yaml:" in capsys.readouterr().err
    assert main(["analyze", str(tmp_path / "missing.yaml")]) == 2


def test_simulate_writes_csv_and_outcome(tmp_path):
    src = tmp_path / "pair.yaml"
    src.write_text(TWO_AGENT)
    out = tmp_path / "run"
    assert main(["simulate", str(src), "--out", str(out)]) == 0
    text = (out / "pair.csv").read_text()
    assert text.startswith("t,agent,topic,value\n")
    outcome = yaml.safe_load((out / "pair.outcome.yaml").read_text())
    assert outcome["settled"] and outcome["lyapunov_monotone"]
    assert [t["verdict"] for t in outcome["topics"]] == ["consensus", "consensus"]
    assert outcome["conservation_drift"] < 1e-9


def test_simulate_is_byte_identical(tmp_path):
    src = tmp_path / "pair.yaml"
    src.write_text(TWO_AGENT)
    for run in ("a", "b"):
        assert main(["simulate", str(src), "--out", str(tmp_path / run)]) == 0
    assert (tmp_path / "a" / "pair.csv").read_bytes() == (tmp_path / "b" / "pair.csv").read_bytes()


def test_simulate_not_settled_exit_4_without_files(tmp_path):
    src = tmp_path / "pair.yaml"
    src.write_text(TWO_AGENT)
    out = tmp_path / "run"
    assert main(["simulate", str(src), "--tf", "0.5", "--out", str(out)]) == 4
    assert not out.exists() or not any(out.iterdir())


def test_simulate_divergence_exit_3(tmp_path):
    src = tmp_path / "anti.yaml"
    src.write_text(TWO_AGENT.replace("    K:", "    anti: [[true, false], [false, true]]\n    K:"))
    out = tmp_path / "run"
    assert main(["simulate", str(src), "--out", str(out)]) == 2
    assert main(["simulate", str(src), "--allow-unstable", "--tf", "40", "--out", str(out)]) == 3
    assert not out.exists() or not any(out.iterdir())


def test_simulate_overrides(tmp_path, capsys):
    src = tmp_path / "pair.yaml"
    src.write_text(TWO_AGENT)
    assert main(["simulate", str(src), "--smoothing", "exact", "--h", "0.02", "--tf", "12"]) == 0
    assert yaml.safe_load(capsys.readouterr().out)["settled"]
    assert main(["simulate", str(src), "--h", "-1"]) == 2


def test_compare_exit_codes(tmp_path, capsys):
    src = tmp_path / "pair.yaml"
    src.write_text(TWO_AGENT)
    assert main(["compare", str(src)]) == 0
    assert yaml.safe_load(capsys.readouterr().out)["status"] == "PASS"
    short = tmp_path / "short.yaml"
    short.write_text(TWO_AGENT.replace("t_f: 15", "t_f: 0.2"))
    assert main(["compare", str(short)]) == 5


def test_scenarios_lists_and_emits(tmp_path, capsys):
    assert main(["scenarios", "--emit", str(tmp_path)]) == 0
    listed = [line.split("\t")[0] for line in capsys.readouterr().out.splitlines()]
    assert listed == list(BUILTIN_NAMES)
    for name in ("fig5", "fig6", "fig7", "fig8", "fig9"):
        assert load_scenario(tmp_path / f"{name}.yaml") == builtin(name)


@pytest.mark.slow
@pytest.mark.parametrize("name,status", [("fig5", "PASS"), ("fig6", "PASS"), ("fig7", "INFO")])
def test_compare_builtins(capsys, name, status):
    assert main(["compare", name]) == 0
    assert yaml.safe_load(capsys.readouterr().out)["status"] == status


@pytest.mark.slow
def test_simulate_fig9_no_consensus(tmp_path):
    assert main(["simulate", "fig9", "--out", str(tmp_path)]) == 0
    outcome = yaml.safe_load((tmp_path / "fig9.outcome.yaml").read_text())
    assert all(t["verdict"] == "clustered" for t in outcome["topics"])
