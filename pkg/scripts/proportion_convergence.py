"""Posterior stratum proportions against the realized strata as N grows.

For each N the recovery scenario is simulated and fitted, and the largest
absolute gap between posterior mean proportions and true frequencies is
reported.

    python3 scripts/proportion_convergence.py --sizes 500 5000
"""

import argparse
import json

from lpsace.estimands import stratum_proportions
from lpsace.sampler import HmcConfig, run_hmc
from lpsace.scenarios import recovery_spec
from lpsace.simulation import simulate_dataset


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--sizes", type=int, nargs="+", default=[500, 5000])
    ap.add_argument("--iters", type=int, default=1000)
    ap.add_argument("--warmup", type=int, default=500)
    ap.add_argument("--seed", type=int, default=1)
    a = ap.parse_args()
    res = {}
    for n in a.sizes:
        d, truth = simulate_dataset(recovery_spec(N=n, seed=11))
        dr = run_hmc(d, cfg=HmcConfig(iterations=a.iters, warmup=a.warmup, seed=a.seed))
        sp = stratum_proportions(d, dr, thin_to=400)
        freq = truth.frequencies()
        err = {lab: abs(float(m) - freq[lab]) for lab, m in zip(sp.labels, sp.mean)}
        res[n] = {"max_error": max(err.values()), "errors": err}
        print(n, round(res[n]["max_error"], 4), flush=True)
    print(json.dumps(res, indent=2))


if __name__ == "__main__":
    main()
