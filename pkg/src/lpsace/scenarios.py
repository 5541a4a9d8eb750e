"""Named generating parameters used by the experiment scripts and the
acceptance suite."""

from __future__ import annotations

import numpy as np

from .model import BlockLayout
from .simulation import GeneratorSpec

# strata: roughly a third AS throughout, CS common, covariates shift AS and CS
STRATUM_COEFS = {
    "delta[AS|-][const]": 0.5,
    "delta[CS|-][const]": 1.0,
    "delta[AS|-][x1]": 1.0,
    "delta[CS|-][x2]": -0.8,
    "delta[AS|AS][const]": 2.5,
    "delta[CS|CS][const]": 2.0,
    "delta[AS|AS.AS][const]": 2.5,
    "delta[CS|AS.CS][const]": 2.0,
    "delta[CS|CS.CS][const]": 2.0,
}

# treated AS units hire more at t=1, the gap narrows and closes later
RECOVERY_OUTCOMES = {
    "beta0[w=0,AS]": -0.5,
    "beta0[w=1,AS]": 0.5,
    "beta0[w=1,CS]": 0.0,
    "beta0[w=0,AS.AS]": -0.5,
    "beta0[w=1,AS.AS]": 0.0,
    "beta0[w=1,AS.CS]": -0.3,
    "beta0[w=1,CS.CS]": -0.3,
    "beta0[w=0,AS.AS.AS]": -0.5,
    "beta0[w=1,AS.AS.AS]": -0.3,
    "beta0[w=1,AS.AS.CS]": -0.3,
    "beta0[w=1,AS.CS.CS]": -0.3,
    "beta0[w=1,CS.CS.CS]": -0.3,
    "beta_x[x1]": 0.5,
    "beta_x[x2]": -0.5,
    "beta_x[x3]": 0.3,
}

ASSIGNMENT = (0.3, 0.5, -0.5, 0.0, 0.0)


def _theta(layout: BlockLayout, values: dict[str, float], lag: float) -> np.ndarray:
    th = layout.zeros()
    for n in layout.names:
        if n.startswith("lambda["):
            th = layout.set(th, n, lag)
    for n, v in values.items():
        th = layout.set(th, n, v)
    return th


def recovery_spec(N: int = 2000, seed: int = 11) -> GeneratorSpec:
    """T=3, K=4 panel with a positive early effect among always-survivors."""
    layout = BlockLayout(3, 4)
    th = _theta(layout, {**STRATUM_COEFS, **RECOVERY_OUTCOMES}, lag=1.0)
    return GeneratorSpec(th, layout, N=N, assignment=np.array(ASSIGNMENT), seed=seed)


def null_spec(N: int = 2000, seed: int = 12) -> GeneratorSpec:
    """Same strata law with no treatment effect on outcomes: every outcome
    model of period t shares one intercept across arms and strata, so every
    SACE is exactly zero."""
    layout = BlockLayout(3, 4)
    outcomes = {k: v for k, v in RECOVERY_OUTCOMES.items() if k.startswith("beta_x")}
    for om in layout.outcome_models:
        key = f"beta0[w={om.w},{'.'.join(str(g) for g in om.prefix)}]"
        outcomes[key] = (-0.2, 0.0, 0.2)[len(om.prefix) - 1]
    th = _theta(layout, {**STRATUM_COEFS, **outcomes}, lag=1.0)
    return GeneratorSpec(th, layout, N=N, assignment=np.array(ASSIGNMENT), seed=seed)
