"""Distance to the steady-state set per period for several horizons (Richmond, plain EMPC)."""
import argparse
import time

from periodic_empc.controller import EmpcConfig, EmpcController, run_closed_loop
from periodic_empc.model import build_period_model
from periodic_empc.steady_state import solve_steady_state
from periodic_empc.wdn import build_richmond


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--horizons", type=int, nargs="+", default=[2, 3, 4])
    ap.add_argument("--periods", type=int, default=5)
    args = ap.parse_args()
    b = build_richmond()
    model = build_period_model(b.lifted, b.cost, b.box, b.aug)
    ss = solve_steady_state(model)
    s0 = b.aug.initial_state(b.x0_lower())
    for K in args.horizons:
        t0 = time.perf_counter()
        tr = run_closed_loop(EmpcController(model, ss, EmpcConfig(K)), s0, args.periods)
        dist = " ".join(f"{d:.2e}" for d in tr.dist_to_set)
        gap = tr.stage_cost_economic[-1] / ss.ell_s - 1
        print(f"K={K}: dist {dist} | last-period gap {gap:.2e} "
              f"({time.perf_counter() - t0:.1f} s)")


if __name__ == "__main__":
    main()
