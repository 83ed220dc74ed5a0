"""Learning the static gain from a short expert demonstration.

Uses the two-column regression printed for the scalar plant, then a freshly
generated demonstration of n + nm + np samples, and compares closed loops.

Run:  python3 demos/example3_imitation.py
"""

import numpy as np

from behavioral_lqg import (ExpertData, assemble_expert_data, learn_gain, simulate,
                            solve_behavioral_lqg, sufficient_samples, validate_by_rollout)
from behavioral_lqg.systems import example1

sys, weights = example1()
gain, _ = solve_behavioral_lqg(sys, weights)

printed = ExpertData(U_N=[[-0.2269, -0.1231]], Y_N=[[1.7878, -0.2269], [1.3371, 0.211]],
                     t0=1, k=2)
learned = learn_gain(printed, sys).gain
print(f"from printed data   [K1 K3] = {np.hstack([learned.K1, learned.K3]).round(5).ravel()}")

N = sufficient_samples(sys.n, sys.m, sys.p)
demo = assemble_expert_data(simulate(sys, gain, T=N, seed=11), sys.n, sys.n)
fresh = learn_gain(demo, sys).gain
print(f"from a {N}-sample demo [K1 K3] = {np.hstack([fresh.K1, fresh.K3]).round(5).ravel()}")

rep = validate_by_rollout(sys, fresh, gain, T=100, seed=4, weights=weights)
print(f"100-step rollout:  max |y_learned - y_opt| = {rep.max_output_deviation:.1e}")
print(f"cost learned {rep.cost_learned:.6f}  optimal {rep.cost_reference:.6f}")
