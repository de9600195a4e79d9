import csv
import json
from pathlib import Path

import numpy as np
import pytest
import yaml

from periodic_empc.cli import main
from periodic_empc.results import load_steady_state, trace_columns
from periodic_empc.steady_state import solve_steady_state

CONFIGS = Path(__file__).resolve().parents[1] / "configs"

INTEGRATOR = {
    "name": "int",
    "system": {"kind": "linear", "A": [[1.0]], "B_u": [[1.0]], "period_steps": 1},
    "cost": {"R": [[1.0]]},
    "constraints": {"x_lb": [-1.0], "x_ub": [1.0], "u_lb": [-1.0], "u_ub": [1.0]},
    "empc": {"horizon_periods": 2, "n_steps": 5, "x0": [0.7]},
    "certification": {"n_samples": 2000, "seed": 1},
}


def write_cfg(tmp_path, cfg, name="cfg.yaml"):
    path = tmp_path / name
    path.write_text(yaml.safe_dump(cfg))
    return path


def patched(**blocks):
    cfg = json.loads(json.dumps(INTEGRATOR))
    for block, values in blocks.items():
        if values is None:
            cfg.pop(block, None)
        else:
            cfg.setdefault(block, {}).update(values)
    return cfg


def run(tmp_path, cmd, cfg, *extra):
    out = tmp_path / "out"
    return main([cmd, "--config", str(write_cfg(tmp_path, cfg)), "--out", str(out), *extra]), out


def rows(path):
    with open(path, newline="") as fh:
        return list(csv.reader(fh))


def test_solve_ss_integrator(tmp_path, capsys):
    code, out = run(tmp_path, "solve-ss", INTEGRATOR)
    assert code == 0
    report = (out / "ss_report.txt").read_text()
    assert "nullspace_dim   1" in report
    ss = load_steady_state(out / "ss_result.json")
    assert abs(ss.ell_s) <= 1e-9 and abs(ss.u_s[0]) <= 1e-9


def test_result_round_trip(tmp_path):
    code, out = run(tmp_path, "solve-ss", patched(system={"A": [[0.5]]},
                                                  cost={"alpha": [[-2.0]], "offset": 1.0}))
    assert code == 0
    ss = load_steady_state(out / "ss_result.json")
    from builders import scalar_model
    ref = solve_steady_state(scalar_model(a=0.5, alpha=[-2.0], offset=1.0))
    for a, b in [(ss.u_s, ref.u_s), (ss.mu, ref.mu), (ss.x_s_particular, ref.x_s_particular)]:
        assert np.allclose(a, b, rtol=1e-10, atol=1e-14)
    assert ss.ell_s == pytest.approx(ref.ell_s, rel=1e-10, abs=1e-14)


def test_simulate_columns_and_rows(tmp_path):
    code, out = run(tmp_path, "simulate", INTEGRATOR)
    assert code == 0
    data = rows(out / "trace.csv")
    assert data[0] == trace_columns(1, 1)
    assert data[0][:2] == ["step", "sim_hour"] and data[0][-1] == "solve_ms"
    assert len(data) == 1 + 5
    assert all(r[data[0].index("solver_status")] == "Optimal" for r in data[1:])
    summary = json.loads((out / "summary.json").read_text())
    assert len(summary["periods"]) == 5


def test_twelve_significant_digits(tmp_path):
    cfg = patched(cost={"epsilon": 0.01}, empc={"cost_variant": "modified", "n_steps": 3})
    code, out = run(tmp_path, "simulate", cfg)
    assert code == 0
    data = rows(out / "trace.csv")
    x = data[2][2]
    assert len(x.replace("-", "").replace(".", "").split("e")[0].lstrip("0")) <= 12


def test_zero_steps_header_only(tmp_path):
    code, out = run(tmp_path, "simulate", patched(empc={"n_steps": 0}))
    assert code == 0
    assert rows(out / "trace.csv") == [trace_columns(1, 1)]


def test_deterministic_outputs(tmp_path):
    cfg = patched(cost={"epsilon": 0.01}, empc={"cost_variant": "modified"})
    a = tmp_path / "a"
    b = tmp_path / "b"
    p = write_cfg(tmp_path, cfg)
    assert main(["simulate", "--config", str(p), "--out", str(a)]) == 0
    assert main(["simulate", "--config", str(p), "--out", str(b)]) == 0
    ra, rb = rows(a / "trace.csv"), rows(b / "trace.csv")
    # wall-clock time is the only column allowed to differ
    drop = ra[0].index("solve_ms")
    assert [r[:drop] for r in ra] == [r[:drop] for r in rb]


def test_certify_ok_and_corrupted(tmp_path):
    code, out = run(tmp_path, "certify", INTEGRATOR)
    assert code == 0
    rep = json.loads((out / "dissipativity.json").read_text())
    assert rep["verdict"] == "CertifiedAtSamples"
    code, out = run(tmp_path, "certify", INTEGRATOR, "--corrupt-mu")
    assert code == 4
    rep = json.loads((out / "dissipativity.json").read_text())
    assert rep["verdict"] == "Violated"
    assert rep["witness"]["value"] < -1e-6


def test_seed_flag_changes_samples(tmp_path):
    a = run(tmp_path, "certify", INTEGRATOR, "--seed", "5")[1]
    first = json.loads((a / "dissipativity.json").read_text())
    b = run(tmp_path, "certify", INTEGRATOR, "--seed", "6")[1]
    second = json.loads((b / "dissipativity.json").read_text())
    assert first["min_rotated_cost"] != second["min_rotated_cost"]


@pytest.mark.parametrize("cfg", [
    patched(cost={"epsilon": 0.01, "gamma": 0.1}, empc={"cost_variant": "modified"}),
    patched(cost={"epsilon": 0.01}),
    patched(empc={"cost_variant": "modified"}),
    patched(system={"A": [[1.0, 0.0]]}),
    patched(constraints={"x_lb": [-1.0, 0.0]}),
    patched(empc={"horizon_periods": 1}),
    patched(empc={"x0": "middle"}),
    patched(empc={"x0": [3.0]}),
    patched(extra={"a": 1}),
    patched(system={"B_u": "missing.csv"}),
])
def test_config_errors(tmp_path, cfg):
    assert run(tmp_path, "simulate", cfg)[0] == 1


def test_missing_config_file(tmp_path):
    assert main(["simulate", "--config", str(tmp_path / "nope.yaml")]) == 1


def test_file_referenced_matrix(tmp_path):
    (tmp_path / "B.csv").write_text("1.0\n")
    code, _ = run(tmp_path, "solve-ss", patched(system={"B_u": "B.csv"}))
    assert code == 0


def test_steady_state_infeasible_exit(tmp_path):
    cfg = patched(system={"B_d": [[1.0]], "disturbance": [[1.0]]},
                  constraints={"u_lb": [0.0]})
    assert run(tmp_path, "solve-ss", cfg)[0] == 2


def test_closed_loop_infeasible_exit(tmp_path):
    cfg = patched(constraints={"u_lb": [-0.1], "u_ub": [0.1]},
                  empc={"terminal_mode": "fixed_point", "x_target": [0.0], "x0": [0.9]})
    code, out = run(tmp_path, "simulate", cfg)
    assert code == 3
    assert rows(out / "trace.csv") == [trace_columns(1, 1)]


def test_bench_requires_richmond(tmp_path):
    assert run(tmp_path, "bench-richmond", INTEGRATOR)[0] == 1


def test_shipped_configs_parse():
    from periodic_empc.config import build_scenario, load_config
    for path in CONFIGS.glob("*.yaml"):
        sc = build_scenario(load_config(path))
        assert sc.initial_state().size == sc.model.ns


def test_gnuplot_emitted(tmp_path):
    code, out = run(tmp_path, "simulate", patched(output={"formats": ["csv", "gnuplot"]}))
    assert code == 0
    assert "trace.csv" in (out / "trace.gp").read_text()


@pytest.mark.slow
def test_richmond_solve_ss_reports(tmp_path):
    out = tmp_path / "rb"
    cfg = CONFIGS / "richmond_plain.yaml"
    assert main(["solve-ss", "--config", str(cfg), "--out", str(out)]) == 0
    text = (out / "ss_report.txt").read_text()
    dim = int(text.split("nullspace_dim")[1].split()[0])
    assert dim > 0
    assert "cyclic               True" in text
    out2 = tmp_path / "rm"
    assert main(["solve-ss", "--config", str(CONFIGS / "richmond.yaml"), "--out", str(out2)]) == 0
    assert "nullspace_dim   0" in (out2 / "ss_report.txt").read_text()


@pytest.mark.slow
def test_bench_richmond_default(tmp_path):
    out = tmp_path / "bench"
    assert main(["bench-richmond", "--out", str(out)]) == 0
    for name in ("trace_plain.csv", "trace_modified.csv", "ledger.json", "dissipativity.json",
                 "lyapunov_audit_plain.json", "lyapunov_audit_modified.json"):
        assert (out / name).is_file()
    data = rows(out / "trace_plain.csv")
    assert len(data) == 7 and len(data[0]) == 2 + 144 + 144 + 7
    assert json.loads((out / "ledger.json").read_text())["passed"]


@pytest.mark.slow
def test_certify_richmond_corrupted(tmp_path):
    out = tmp_path / "cert"
    cfg = CONFIGS / "richmond_plain.yaml"
    code = main(["certify", "--config", str(cfg), "--out", str(out), "--corrupt-mu"])
    assert code == 4
    assert json.loads((out / "dissipativity.json").read_text())["verdict"] == "Violated"
