"""Sampler sanity on analytic targets: Gaussian moments and the prior.

    python3 scripts/sampler_check.py --seeds 10
"""

import argparse

import numpy as np

from lpsace.data import Dataset
from lpsace.model import BlockLayout
from lpsace.sampler import GaussianTarget, HmcConfig, run_hmc, sample


def main():
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--seeds", type=int, default=10)
    a = ap.parse_args()
    t = GaussianTarget(np.zeros(2), np.ones(2))
    print("seed  max|mean|  max|var-1|")
    for s in range(a.seeds):
        x = sample(t, HmcConfig(leapfrog_steps=8, seed=s)).flat()
        print(f"{s:>4} {np.abs(x.mean(0)).max():>10.4f} {np.abs(x.var(0) - 1).max():>11.4f}")
    lay = BlockLayout(3, 4)
    x = run_hmc(Dataset.empty(4, 3), cfg=HmcConfig(seed=0), layout=lay).flat()
    print("prior sd, stratum block:", round(float(x[:, : lay.n_stratum].std()), 3), "(2.5)")
    print("prior sd, outcome block:", round(float(x[:, lay.n_stratum :].std()), 3), "(2.0)")


if __name__ == "__main__":
    main()
