"""Serialization of traces, steady states and reports.

Every number leaves the process with 12 significant digits, which bounds the
round-trip error at about 5e-12 relative.
"""

from __future__ import annotations

import csv
import json
from pathlib import Path

import numpy as np

from .steady_state import SteadyStateResult

DIGITS = 12


def fmt(v) -> str:
    return f"{float(v):.{DIGITS}g}"


def _num(v):
    """JSON-safe float with 12 significant digits; non-finite values become strings."""
    v = float(v)
    if not np.isfinite(v):
        return str(v)
    return float(fmt(v))


def _arr(a):
    a = np.asarray(a, dtype=float)
    if a.ndim == 0:
        return _num(a)
    return [_arr(x) for x in a]


def _from(v):
    if isinstance(v, list):
        return np.array([_from(x) for x in v], dtype=float)
    return float(v)


def trace_columns(nx: int, nu: int) -> list[str]:
    return (["step", "sim_hour"] + [f"x[{i}]" for i in range(nx)]
            + [f"u[{i}]" for i in range(nu)]
            + ["stage_cost_economic", "stage_cost_modified", "rotated_cost", "lyapunov_V0",
               "dist_to_Xs", "solver_status", "solve_ms"])


def write_trace_csv(path, trace, period_hours: float) -> None:
    """One row per applied period; x holds the lifted state (without the carried input).

    ``sim_hour`` is the start of the period, ``step * period_hours``.
    """
    model = trace.model
    nx, nu = model.nx, model.nu
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh, lineterminator="\n")
        w.writerow(trace_columns(nx, nu))
        for t in range(len(trace)):
            w.writerow([t, fmt(t * period_hours)]
                       + [fmt(v) for v in trace.states[t][:nx]]
                       + [fmt(v) for v in trace.inputs[t]]
                       + [fmt(trace.stage_cost_economic[t]), fmt(trace.stage_cost_modified[t]),
                          fmt(trace.rotated_cost[t]), fmt(trace.lyapunov[t]),
                          fmt(trace.dist_to_set[t]), trace.status[t], fmt(trace.solve_ms[t])])


def read_trace_csv(path) -> tuple[list[str], list[dict]]:
    with open(path, newline="") as fh:
        r = csv.DictReader(fh)
        return list(r.fieldnames or []), list(r)


def write_gnuplot(path, csv_name: str) -> None:
    Path(path).write_text(
        "set datafile separator ','\n"
        "set key autotitle columnhead\n"
        "set xlabel 'simulated hour'\n"
        "set multiplot layout 2,1\n"
        f"plot '{csv_name}' using 'sim_hour':'stage_cost_economic' with linespoints\n"
        "set logscale y\n"
        f"plot '{csv_name}' using 'sim_hour':'dist_to_Xs' with linespoints\n"
        "unset multiplot\n")


def write_json(path, obj) -> None:
    Path(path).write_text(json.dumps(obj, indent=2, sort_keys=True) + "\n")


def steady_state_dict(ss: SteadyStateResult) -> dict:
    return {"u_s": _arr(ss.u_s), "ell_s": _num(ss.ell_s), "ell_s_full": _num(ss.ell_s_full),
            "mu": _arr(ss.mu), "x_s_particular": _arr(ss.x_s_particular),
            "x_s_nullspace": _arr(ss.x_s_nullspace), "nullspace_dim": ss.nullspace_dim,
            "epsilon": _num(ss.epsilon)}


def save_steady_state(path, ss: SteadyStateResult) -> None:
    write_json(path, steady_state_dict(ss))


def load_steady_state(path) -> SteadyStateResult:
    d = json.loads(Path(path).read_text())
    ns = len(d["x_s_particular"])
    V = _from(d["x_s_nullspace"]) if d["nullspace_dim"] else np.zeros((ns, 0))
    return SteadyStateResult(_from(d["u_s"]), d["ell_s"], d["ell_s_full"], _from(d["mu"]),
                             _from(d["x_s_particular"]), V.reshape(ns, d["nullspace_dim"]),
                             d["epsilon"], None)


def write_ss_report(path, ss: SteadyStateResult, scenario, shift=None) -> None:
    lines = [f"scenario        {scenario.config.name}",
             f"epsilon         {fmt(ss.epsilon)}",
             f"ell_s           {fmt(ss.ell_s)}",
             f"ell_s_full      {fmt(ss.ell_s_full)}",
             f"nullspace_dim   {ss.nullspace_dim}",
             f"solver_status   {ss.qp.status.value if ss.qp else 'n/a'}",
             "",
             "u_s    " + " ".join(fmt(v) for v in ss.u_s),
             "mu     " + " ".join(fmt(v) for v in ss.mu)]
    if shift is not None:
        lines += ["", "shift  cost",
                  *(f"{k:<6d} {fmt(c)}" for k, c in enumerate(shift.costs)),
                  f"max cost deviation   {fmt(shift.max_cost_deviation)}",
                  f"max shift deviation  {fmt(shift.max_shift_deviation)}",
                  f"cyclic               {shift.cyclic}"]
    Path(path).write_text("\n".join(lines) + "\n")


def trace_summary(trace, ss: SteadyStateResult, scenario) -> dict:
    econ = np.asarray(trace.stage_cost_economic, dtype=float)
    periods = [{"period": t, "economic_cost": _num(c),
                "rel_gap": _num((c - ss.ell_s) / abs(ss.ell_s)) if ss.ell_s else _num(c)}
               for t, c in enumerate(econ)]
    final_dist = float(trace.dist_to_set[-1]) if len(trace) else float("nan")
    return {"scenario": scenario.config.name, "n_steps": len(trace), "ell_s": _num(ss.ell_s),
            "periods": periods, "final_dist_to_Xs": _num(final_dist),
            "average_economic_cost": _num(econ.mean()) if econ.size else "nan",
            "statuses": list(trace.status)}


def format_period_table(summary: dict) -> str:
    rows = ["period  economic_cost     rel_gap"]
    for p in summary["periods"]:
        rows.append(f"{p['period']:<7d} {p['economic_cost']:<17.10g} {p['rel_gap']:.3e}")
    rows.append(f"ell_s = {summary['ell_s']:.10g}; final distance {summary['final_dist_to_Xs']}")
    return "\n".join(rows)


def dissipativity_dict(report) -> dict:
    d = {"verdict": report.verdict, "n_samples": report.n_samples,
         "min_rotated_cost": _num(report.min_rotated_cost),
         "min_rotated_cost_far": _num(report.min_rotated_cost_far),
         "max_abs_on_set": _num(report.max_abs_on_set), "delta": _num(report.delta)}
    if report.witness_state is not None:
        d["witness"] = {"state": _arr(report.witness_state), "input": _arr(report.witness_input),
                        "value": _num(report.witness_value)}
    return d


def audit_dict(audit) -> dict:
    return {"passed": audit.passed, "n_violations": audit.n_violations,
            "worst_violation": _num(audit.worst_violation), "worst_step": audit.worst_step,
            "lower_bound_ok": audit.lower_bound_ok, "tol": audit.tol,
            "V0": _arr(audit.values), "descent": _arr(audit.descent)}


def ledger_dict(ledger) -> dict:
    return {"steady_gap": _num(ledger.steady_gap), "gamma": ledger.gamma,
            "epsilon": _num(ledger.epsilon), "radius": _num(ledger.radius),
            "bound": _num(ledger.bound), "open_loop_gaps": _arr(ledger.open_loop_gaps),
            "steady_ok": ledger.steady_ok, "open_loop_ok": ledger.open_loop_ok,
            "passed": ledger.passed}
