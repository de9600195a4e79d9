"""Command line entry point: solve-ss, simulate, certify, bench-richmond.

Exit codes: 0 success, 1 config error, 2 steady state infeasible,
3 closed loop infeasible, 4 certification failure.
"""

from __future__ import annotations

import argparse
import logging
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import results
from .certification import (StorageFunction, check_dissipativity, cost_gap_ledger,
                            lyapunov_audit)
from .config import ConfigError, Scenario, build_scenario, load_config
from .controller import (ClosedLoopTrace, CostVariant, EmpcController, EmpcInfeasible,
                         TerminalMode, run_closed_loop)
from .steady_state import (SteadyStateInfeasible, SteadyStateResult, periodic_shift_check,
                           solve_steady_state)

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_SS_INFEASIBLE = 2
EXIT_CL_INFEASIBLE = 3
EXIT_CERT_FAILED = 4

log = logging.getLogger("periodic_empc")

DEFAULT_RICHMOND = Path(__file__).resolve().parents[2] / "configs" / "richmond.yaml"


class CommandFailed(Exception):
    def __init__(self, code: int, message: str):
        super().__init__(message)
        self.code = code


def _out_dir(args, scenario: Scenario) -> Path:
    out = Path(args.out) if args.out else scenario.config.base_dir / scenario.config.output.directory
    out.mkdir(parents=True, exist_ok=True)
    return out


def _steady_states(scenario: Scenario) -> tuple[SteadyStateResult, SteadyStateResult]:
    """(plain, for-the-run) steady states; identical objects when epsilon is zero."""
    try:
        plain = solve_steady_state(scenario.model_plain)
        run = plain if scenario.model is scenario.model_plain else solve_steady_state(scenario.model)
    except SteadyStateInfeasible as exc:
        raise CommandFailed(EXIT_SS_INFEASIBLE, f"steady state infeasible: {exc}") from exc
    return plain, run


def _controller(scenario: Scenario, ss_plain, ss_run) -> EmpcController:
    cfg = scenario.config.empc
    target = None
    if TerminalMode(cfg.terminal_mode) is TerminalMode.FIXED_POINT:
        if isinstance(cfg.x_target, str):
            if cfg.x_target != "steady":
                raise ConfigError(f"empc.x_target: unknown keyword {cfg.x_target!r}")
            target = ss_run.x_s_particular
        else:
            target = np.asarray(cfg.x_target, dtype=float).ravel()
    try:
        return EmpcController(scenario.model, ss_run, scenario.empc_config(target))
    except ConfigError:
        raise
    except ValueError as exc:
        raise ConfigError(f"empc: {exc}") from exc


def _simulate(scenario: Scenario, ctl: EmpcController, out: Path, stem: str = "trace"
              ) -> ClosedLoopTrace:
    n_steps = scenario.config.empc.n_steps
    period_hours = scenario.system.T * scenario.step_hours
    try:
        s0 = ctl.admissible_state(scenario.initial_state())
    except ValueError as exc:
        raise ConfigError(f"empc.x0: {exc}") from exc
    try:
        trace = run_closed_loop(ctl, s0, n_steps)
    except EmpcInfeasible as exc:
        if exc.trace is not None:
            results.write_trace_csv(out / f"{stem}.csv", exc.trace, period_hours)
        raise CommandFailed(EXIT_CL_INFEASIBLE, f"closed loop infeasible: {exc}") from exc
    results.write_trace_csv(out / f"{stem}.csv", trace, period_hours)
    if "gnuplot" in scenario.config.output.formats:
        results.write_gnuplot(out / f"{stem}.gp", f"{stem}.csv")
    return trace


def cmd_solve_ss(args, scenario: Scenario) -> int:
    out = _out_dir(args, scenario)
    ss_plain, ss_run = _steady_states(scenario)
    shift = None
    if scenario.config.certification.shift_check:
        shift = periodic_shift_check(scenario.model)
    results.write_ss_report(out / "ss_report.txt", ss_run, scenario, shift)
    results.save_steady_state(out / "ss_result.json", ss_run)
    if ss_run is not ss_plain:
        results.save_steady_state(out / "ss_result_plain.json", ss_plain)
    print(f"ell_s = {ss_run.ell_s:.12g}  nullspace_dim = {ss_run.nullspace_dim}")
    return EXIT_OK


def cmd_simulate(args, scenario: Scenario) -> int:
    out = _out_dir(args, scenario)
    ss_plain, ss_run = _steady_states(scenario)
    ctl = _controller(scenario, ss_plain, ss_run)
    trace = _simulate(scenario, ctl, out)
    summary = results.trace_summary(trace, ss_run, scenario)
    results.write_json(out / "summary.json", summary)
    print(results.format_period_table(summary))
    return EXIT_OK


def cmd_certify(args, scenario: Scenario) -> int:
    out = _out_dir(args, scenario)
    ss_plain, ss_run = _steady_states(scenario)
    ctl = _controller(scenario, ss_plain, ss_run)
    storage = StorageFunction.from_steady_state(ss_run)
    if args.corrupt_mu:
        storage = storage.corrupted(1.0)
    cert = scenario.config.certification
    seed = cert.seed if args.seed is None else args.seed
    report = check_dissipativity(storage, scenario.model, ss_run, cert.n_samples, seed,
                                 cert.n_set_samples)
    trace = _simulate(scenario, ctl, out)
    audit = lyapunov_audit(trace, storage, ss_run) if len(trace) else None
    results.write_json(out / "dissipativity.json", results.dissipativity_dict(report))
    if audit is not None:
        results.write_json(out / "lyapunov_audit.json", results.audit_dict(audit))
    ok = report.certified and (audit is None or audit.passed)
    print(f"dissipativity: {report.verdict} (min L = {report.min_rotated_cost:.3e}, "
          f"max |L| on set = {report.max_abs_on_set:.3e})")
    if audit is not None:
        print(f"lyapunov descent: {audit.n_violations} violation(s), "
              f"worst {audit.worst_violation:.3e} at step {audit.worst_step}")
    if not ok:
        raise CommandFailed(EXIT_CERT_FAILED, "certification failed")
    return EXIT_OK


def cmd_bench_richmond(args, scenario: Scenario) -> int:
    """Plain economic run plus the eps-modified run with fixed-point terminal state."""
    if scenario.config.system.kind != "richmond":
        raise ConfigError("bench-richmond needs a richmond system block")
    out = _out_dir(args, scenario)
    cfg = scenario.config
    cert = cfg.certification
    seed = cert.seed if args.seed is None else args.seed
    gamma = cfg.cost.gamma if cfg.cost.gamma is not None else 0.1
    cost_block = replace(cfg.cost, epsilon=None, gamma=gamma)
    plain = build_scenario(replace(cfg, cost=replace(cost_block, gamma=None),
                                   empc=replace(cfg.empc, cost_variant="economic",
                                                terminal_mode="steady_state_set")))
    modified = build_scenario(replace(cfg, cost=cost_block,
                                      empc=replace(cfg.empc, cost_variant="modified",
                                                   terminal_mode="fixed_point",
                                                   x_target="steady")))
    ss_plain, _ = _steady_states(plain)
    _, ss_mod = _steady_states(modified)
    ctl_plain = _controller(plain, ss_plain, ss_plain)
    ctl_mod = _controller(modified, ss_plain, ss_mod)
    trace_plain = _simulate(plain, ctl_plain, out, "trace_plain")
    trace_mod = _simulate(modified, ctl_mod, out, "trace_modified")

    storage = StorageFunction.from_steady_state(ss_plain)
    if args.corrupt_mu:
        storage = storage.corrupted(1.0)
    report = check_dissipativity(storage, plain.model, ss_plain, cert.n_samples, seed,
                                 cert.n_set_samples)
    audit_plain = lyapunov_audit(trace_plain, storage, ss_plain) if len(trace_plain) else None
    audit_mod = (lyapunov_audit(trace_mod, ctl_mod.storage, ss_mod)
                 if len(trace_mod) else None)
    ledger = cost_gap_ledger(ss_plain, ss_mod, plain.model, modified.model,
                             trace_plain.states, cfg.empc.horizon_periods, gamma)
    results.save_steady_state(out / "ss_result_plain.json", ss_plain)
    results.save_steady_state(out / "ss_result_modified.json", ss_mod)
    results.write_json(out / "dissipativity.json", results.dissipativity_dict(report))
    results.write_json(out / "ledger.json", results.ledger_dict(ledger))
    for name, audit in (("plain", audit_plain), ("modified", audit_mod)):
        if audit is not None:
            results.write_json(out / f"lyapunov_audit_{name}.json", results.audit_dict(audit))
    summaries = {"plain": results.trace_summary(trace_plain, ss_plain, plain),
                 "modified": results.trace_summary(trace_mod, ss_mod, modified)}
    results.write_json(out / "summary.json", summaries)
    print(results.format_period_table(summaries["plain"]))
    print(f"steady gap {ledger.steady_gap:.3e} (gamma {gamma}), eps {ledger.epsilon:.6g}, "
          f"R {ledger.radius:.6g}")
    audits_ok = all(a is None or a.passed for a in (audit_plain, audit_mod))
    if not (report.certified and audits_ok and ledger.passed):
        raise CommandFailed(EXIT_CERT_FAILED, "benchmark certification failed")
    return EXIT_OK


COMMANDS = {"solve-ss": cmd_solve_ss, "simulate": cmd_simulate, "certify": cmd_certify,
            "bench-richmond": cmd_bench_richmond}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="periodic-empc",
                                     description="Economic MPC for periodic linear systems")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", type=Path, default=None,
                       help="scenario YAML (bench-richmond defaults to configs/richmond.yaml)")
        p.add_argument("--seed", type=int, default=None, help="overrides certification.seed")
        p.add_argument("--out", type=Path, default=None, help="output directory")
        p.add_argument("--corrupt-mu", action="store_true",
                       help="shift the storage multiplier by one (test hook)")
        p.add_argument("-v", "--verbose", action="store_true")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(message)s")
    try:
        path = args.config
        if path is None:
            if args.command != "bench-richmond":
                raise ConfigError("--config is required")
            path = DEFAULT_RICHMOND
        scenario = build_scenario(load_config(path))
        return COMMANDS[args.command](args, scenario)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except CommandFailed as exc:
        print(str(exc), file=sys.stderr)
        return exc.code


if __name__ == "__main__":
    sys.exit(main())
