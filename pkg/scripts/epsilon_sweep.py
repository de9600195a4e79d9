"""Steady-state cost gap of the eps-regularized problem against gamma, Richmond instance."""
import argparse

import numpy as np

from periodic_empc.model import build_period_model
from periodic_empc.steady_state import choose_epsilon, lifted_radius, solve_steady_state
from periodic_empc.wdn import build_richmond


def main():
    ap = argparse.ArgumentParser()
    ap.add_argument("--gammas", type=float, nargs="+", default=[1e-3, 1e-2, 0.1, 1.0, 10.0])
    args = ap.parse_args()
    b = build_richmond()
    model = build_period_model(b.lifted, b.cost, b.box, b.aug)
    ss = solve_steady_state(model)
    R = lifted_radius(b.box, b.instance.T)
    print(f"R = {R:.4f}, ell_s = {ss.ell_s:.6f}")
    print("gamma      eps          gap          gap/gamma   |x_eps|")
    for g in args.gammas:
        eps = choose_epsilon(g, b.box, b.instance.T)
        ss_eps = solve_steady_state(build_period_model(b.lifted, b.cost.with_epsilon(eps),
                                                       b.box, b.aug))
        gap = ss_eps.ell_s - ss.ell_s
        print(f"{g:<10.3g} {eps:<12.4e} {gap:<12.4e} {gap / g:<11.3e} "
              f"{np.linalg.norm(ss_eps.x_s_particular[:model.nx]):.4f}")


if __name__ == "__main__":
    main()
