"""Compare the four combination rules on a single noise-prediction pair.

Everything a strategy does happens in epsilon space, one step at a time,
so the differences are easiest to see on a fixed pair of predictions
before running any trajectories.
"""

import numpy as np

from dualguide import (
    GuidanceConfig,
    Strategy,
    TriangularSchedule,
    apg_combine,
    cfg_combine,
    clip_norm,
    dog_combine,
    orthogonal_component,
)
from dualguide.perturb import PerturbConfig

eps_p = np.array([1.0, 0.0])   # conditional prediction
eps_u = np.array([0.4, 0.3])   # unconditional prediction
eps_n = np.array([3.0, 4.0])   # prediction for the corrupted prompt

print(f"eps_p={eps_p}, eps_u={eps_u}, eps_n={eps_n}\n")

for gs in (1.0, 2.0, 10.0):
    print(f"gs={gs}")
    print(f"  CFG: {cfg_combine(eps_p, eps_u, gs)}")
    print(f"  APG: {apg_combine(eps_p, eps_u, gs, parallel_weight=0.1)}")
    cfg = GuidanceConfig(strategy=Strategy.DOG, gs=gs, tau="auto",
                         schedule_on=False, perturb=PerturbConfig(),
                         triangular=TriangularSchedule(1000, 700, gs))
    print(f"  DOG: {dog_combine(eps_p, eps_n, 700, cfg)}")

# The DOG pipeline in slow motion at gs=1, tau=auto:
tau = float(np.linalg.norm(eps_p))
clipped = clip_norm(eps_n, tau)
star = orthogonal_component(clipped, eps_p)
print(f"\nDOG internals at gs=1: tau={tau}, clipped negative={clipped},"
      f" orthogonal part={star}")
print(f"residual eps_p + 1*(eps_p - eps*) = {eps_p + (eps_p - star)}")

# CFG at gs=1 is exactly the conditional prediction, a useful identity
# when checking sampler plumbing.
assert np.array_equal(cfg_combine(eps_p, eps_u, 1.0), eps_p)
