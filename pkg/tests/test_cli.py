import os

import pytest

from pmplab.cli import _fmt, main
from pmplab.errors import ScenarioError
from pmplab.scenario import parse_scenario_text


UTL_TWO = """
# two-class utilization market
model        = utilization
V            = 2.0
capacities   = 0.3, 0.7
a_grid       = 0.5, 0.9, 1.0
p_grid       = 16
"""

LAT_SPLIT = """
model      = latency
V          = 2.0
capacities = 0.5, 0.5
p_grid     = 4
"""

DUO = """
model          = utilization
V              = 2.0
duopoly_cap_i  = 1.0
duopoly_cap_ii = 1.0
pI_grid        = 4
"""


def write(tmp_path, text, name="scenario.txt"):
    path = tmp_path / name
    path.write_text(text)
    return str(path)


# ---------------------------------------------------------------------------
# scenario parsing
# ---------------------------------------------------------------------------

def test_parse_minimal():
    sf = parse_scenario_text("model = latency\nV = 2.0\n")
    assert sf.model.kind == "latency"
    assert sf.dist.kind == "uniform"


def test_parse_model_descriptors():
    for text, kind in (
        ("general_latency(delta2=0.5)", "general_latency"),
        ("loss(kappa=3)", "loss"),
        ("outage(eps=0.5)", "outage"),
        ("utilization_default(eps=0.1)", "utilization_default"),
    ):
        sf = parse_scenario_text(f"model = {text}\nV = 1.0\n")
        assert sf.model.kind == kind


def test_parse_rejects_unknown_key_with_line():
    with pytest.raises(ScenarioError) as err:
        parse_scenario_text("model = latency\nV = 2.0\nbogus = 1\n")
    assert err.value.line == 3


def test_parse_rejects_duplicate_and_malformed():
    with pytest.raises(ScenarioError):
        parse_scenario_text("model = latency\nmodel = latency\nV = 1\n")
    with pytest.raises(ScenarioError) as err:
        parse_scenario_text("model latency\n")
    assert err.value.line == 1
    with pytest.raises(ScenarioError):
        parse_scenario_text("model = loss\nV = 2.0\n")  # missing kappa


def test_parse_grid_specs():
    sf = parse_scenario_text("model = latency\nV = 2\na_grid = 0:1:5\n")
    assert sf.a_grid == (0.0, 0.25, 0.5, 0.75, 1.0)
    with pytest.raises(ScenarioError):
        parse_scenario_text("model = latency\nV = 2\na_grid = 0:2:5\n")


def test_parse_tabulated_distribution(tmp_path):
    table = tmp_path / "cdf.txt"
    table.write_text("0 0\n0.5 0.8\n1 1\n")
    sf = parse_scenario_text(
        f"model = utilization\nV = 2\ndistribution = tabulated(file={table})\n"
    )
    assert sf.dist.kind == "tabulated"


# ---------------------------------------------------------------------------
# formatting
# ---------------------------------------------------------------------------

def test_fmt_nine_significant_digits():
    assert _fmt(1.0) == "1.0"
    assert _fmt(0.75) == "0.75"
    assert _fmt(1.0 / 3.0) == "0.333333333"
    assert _fmt(-0.0) == "0.0"
    assert _fmt(1234567.891) == "1234567.89"


# ---------------------------------------------------------------------------
# commands
# ---------------------------------------------------------------------------

def test_classify_command(tmp_path, capsys):
    scen = write(tmp_path, "model = latency\nV = 2.0\ncapacities = 0.3, 0.7\n")
    code = main(["classify", "--scenario", scen, "--out", str(tmp_path)])
    out = capsys.readouterr().out
    assert code == 0
    assert "MultiplexingPreferred" in out
    assert "Violated" in out
    assert (tmp_path / "classify.csv").exists()


def test_classify_utilization_restricted(tmp_path, capsys):
    scen = write(tmp_path, "model = utilization\nV = 2.0\ncapacities = 0.3, 0.7\n")
    assert main(["classify", "--scenario", scen, "--out", str(tmp_path)]) == 0
    out = capsys.readouterr().out
    assert "Indifferent" in out
    assert "ConsistentM2 (c.2-restricted sampler)" in out


def test_sweep_command_csv(tmp_path):
    scen = write(tmp_path, UTL_TWO)
    code = main(["sweep", "--scenario", scen, "--out", str(tmp_path),
                 "--objective", "profit", "--grid", "128"])
    assert code == 0
    lines = (tmp_path / "sweep.csv").read_text().splitlines()
    assert lines[0] == "a,best_value,argmax_p1,baseline_single"
    assert len(lines) == 4
    last = lines[-1].split(",")
    assert float(last[0]) == 1.0
    # identical pricing equals the merged single class
    assert abs(float(last[1]) - float(last[3])) <= 1e-6


def test_partition_command_closed_form_row(tmp_path):
    scen = write(tmp_path, LAT_SPLIT)
    code = main(["partition", "--scenario", scen, "--out", str(tmp_path)])
    assert code == 0
    lines = (tmp_path / "partition.csv").read_text().splitlines()
    assert lines[0] == "p,S_single,pi_single,S_split,pi_split"
    row = {line.split(",")[0]: line for line in lines[1:]}
    assert row["1.0"] == "1.0,0.75,0.5,0.5,0.333333333"


def test_probe_command(tmp_path):
    scen = write(tmp_path, UTL_TWO)
    code = main(["probe", "--scenario", scen, "--out", str(tmp_path), "--grid", "10"])
    assert code == 0
    lines = (tmp_path / "probe.csv").read_text().splitlines()
    assert lines[0] == "p,delta,dS,dpi,case"
    for line in lines[1:]:
        cols = line.split(",")
        assert float(cols[2]) > 0.0 and float(cols[3]) > 0.0
        assert cols[4] in ("M1", "M2")


def test_duopoly_command(tmp_path):
    scen = write(tmp_path, DUO)
    code = main(["duopoly", "--scenario", scen, "--out", str(tmp_path)])
    assert code == 0
    lines = (tmp_path / "duopoly.csv").read_text().splitlines()
    assert lines[0] == "pI,piI,piII_1class,piII_2class"
    assert len(lines) == 6
    for line in lines[1:]:
        cols = [float(c) for c in line.split(",")]
        assert cols[3] >= cols[2] - 1e-9


def test_exit_code_on_parse_error(tmp_path, capsys):
    scen = write(tmp_path, "model = latency\nV = 2.0\nwhat = 1\n")
    assert main(["classify", "--scenario", scen, "--out", str(tmp_path)]) == 2
    assert "line 3" in capsys.readouterr().err


def test_exit_code_on_missing_file(tmp_path):
    assert main(["classify", "--scenario", str(tmp_path / "nope.txt")]) == 2


def test_exit_code_on_empty_a_grid(tmp_path, capsys):
    scen = write(tmp_path, "model = utilization\nV = 2\ncapacities = 0.3, 0.7\na_grid = 1.5\n")
    assert main(["sweep", "--scenario", scen, "--out", str(tmp_path)]) == 2


def test_sweep_requires_two_capacities(tmp_path):
    scen = write(tmp_path, "model = utilization\nV = 2\ncapacities = 1.0\n")
    assert main(["sweep", "--scenario", scen, "--out", str(tmp_path)]) == 2


def test_byte_identical_reruns_and_thread_counts(tmp_path):
    scen = write(tmp_path, LAT_SPLIT)
    outs = []
    for sub, threads in (("a", "1"), ("b", "1"), ("c", "2")):
        outdir = tmp_path / sub
        code = main(["partition", "--scenario", scen, "--out", str(outdir),
                     "--threads", threads])
        assert code == 0
        outs.append((outdir / "partition.csv").read_bytes())
    assert outs[0] == outs[1] == outs[2]
