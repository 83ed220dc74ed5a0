"""Gradient descent over the static gain against descent over (E, F, G, H).

Both start from the same observer-based compensator.  Writes one trace CSV
per run.  The default of 2000 iterations runs in well under a minute; pass
15000 for the full comparison (several minutes).

Run:  python3 demos/example4_descent.py [iterations] [seed]
"""

import sys as _sys

from behavioral_lqg import (LineSearchError, grad_descent_behavioral, grad_descent_dynamic,
                            lift_system, solve_behavioral_lqg, stabilizing_compensator,
                            staticize)
from behavioral_lqg.systems import example4

iters = int(_sys.argv[1]) if len(_sys.argv) > 1 else 2000
seed = int(_sys.argv[2]) if len(_sys.argv) > 2 else 0

sys, weights = example4()
bsys = lift_system(sys, weights)
_, pair = solve_behavioral_lqg(sys, weights)
ctrl0 = stabilizing_compensator(sys, seed=seed)

beh = grad_descent_behavioral(bsys, staticize(ctrl0, sys), weights, max_iters=iters,
                              freeze_k2=True, reference_cost=pair.cost)
try:
    dyn = grad_descent_dynamic(sys, weights, ctrl0, max_iters=iters, reference_cost=pair.cost)
except LineSearchError as exc:
    dyn = exc.trace

for name, tr in (("behavioral", beh), ("dynamic", dyn)):
    tr.to_csv(f"trace_{name}_seed{seed}.csv")
    print(f"{name:10s} {tr.status:18s} {tr.iterations:6d} it  gap {tr.gaps[-1]:.3e}")
print(f"final static gain {beh.final.K.round(4).ravel()}")
