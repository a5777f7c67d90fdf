"""Print step-size convergence of the backward scheme and the mollifier error table."""

import argparse
import math

import numpy as np

from delayctl import oracles
from delayctl.acceptance import mollifier_table
from delayctl.bsde import solve
from delayctl.core import PathSegment, make_grid
from delayctl.models import coeff_zero, gen_cubic, gen_linear, term_constant
from delayctl.sdde import simulate


def scheme_table(hs):
    seg = PathSegment.constant(0.0, 0.0, 0)
    cases = [("linear mu=0.5", gen_linear(term_constant(1.0), mu=0.5), math.exp(0.5)),
             ("cubic", gen_cubic(term_constant(2.0)), oracles.cubic_decay_value(2.0, 1.0))]
    for name, gen, exact in cases:
        errs = []
        for h in hs:
            g = make_grid(0, 1, 0, h=h)
            ens = simulate(coeff_zero(), seg, [0.0], g, 1, 0)
            errs.append(abs(solve(ens, gen, [0.0]).Y[0, 0] - exact))
        slope = np.polyfit(np.log(hs), np.log(errs), 1)[0]
        print(f"{name:15s} " + "  ".join(f"h={h:<7g} err={e:.3e}" for h, e in zip(hs, errs)) + f"  slope={slope:.2f}")


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--hs", default="0.1,0.05,0.025,0.0125")
    args = ap.parse_args()
    scheme_table([float(x) for x in args.hs.split(",")])
    print()
    print(f"{'n':>4} {'sup_error':>12} {'1/n':>10} {'kink_oracle':>12}")
    for r in mollifier_table():
        print(f"{r['n']:>4} {r['sup_error']:>12.6g} {r['bound']:>10.4g} {r['kink_oracle']:>12.6g}")


if __name__ == "__main__":
    main()
