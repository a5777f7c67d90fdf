"""Sweep risk aversion and EIS for the delayed Ramsey demo and print value and policy."""

import argparse

from delayctl.acceptance import ez_demo_run
from delayctl.ezapp import EzParams


def main():
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--seed", type=int, default=42)
    ap.add_argument("--paths", type=int, default=1000)
    args = ap.parse_args()
    grid = [("i", 2.0, 2.0), ("i", 4.0, 1.5), ("i", 1.5, 3.0), ("ii", 0.5, 0.5), ("ii", 0.3, 0.8)]
    print(f"{'regime':>6} {'r':>5} {'psi':>5} {'V(0)':>10} {'stderr':>9} {'clamps':>6}  policy (pi, c) per interval")
    for regime, r, psi in grid:
        _, big = ez_demo_run(EzParams(0.1, psi, r), regime, args.seed, n_paths=args.paths)
        pol = " ".join(f"({p['pi']:g},{p['c']:g})" for p in big.policy)
        print(f"{regime:>6} {r:>5g} {psi:>5g} {big.value.value:>10.5f} {big.value.stderr:>9.2e} {big.clamps:>6}  {pol}")


if __name__ == "__main__":
    main()
