"""Walk through the two schedules the sampler relies on.

The diffusion schedule fixes how much signal survives at each timestep;
the triangular schedule decides how hard the guidance pushes there. Both
are tiny tables, so we just print slices of them.
"""

import numpy as np

from dualguide import TriangularSchedule, make_linear_schedule

sched = make_linear_schedule(T=1000, beta_start=1e-4, beta_end=0.02)
print("forward process, t = T is pure noise, t = 0 is data")
for t in (0, 1, 100, 500, 900, 1000):
    ab = sched.alpha_bar(t)
    print(f"  t={t:4d}  alpha_bar={ab:.6f}  noise fraction={np.sqrt(1 - ab):.4f}")

print()
print("triangular guidance weight, peak at u_T")
for u_T in (200, 700):
    tri = TriangularSchedule(T=1000, u_T=u_T, gs=20.0)
    row = "  ".join(f"g({t})={tri.scale_at(t):5.1f}" for t in (0, 200, 500, 700, 1000))
    print(f"  u_T={u_T}: {row}")

# The schedule is exactly zero at both ends, so the first and the last
# denoising steps are always unguided no matter how large gs is.
tri = TriangularSchedule(T=1000, u_T=700, gs=1e6)
assert tri.scale_at(0) == 0.0 and tri.scale_at(1000) == 0.0
print("\nendpoints stay unguided even at gs=1e6")
