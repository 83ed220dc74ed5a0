"""Scalar plant: classical LQG design, its behavioral lifting and the static gain.

Run:  python3 demos/example1_closed_form.py
"""

import numpy as np

from behavioral_lqg import lift_system, lqg_design, solve_behavioral_lqg, sparsity_partition
from behavioral_lqg.systems import example1

np.set_printoptions(precision=4, suppress=True)

sys, weights = example1()
design = lqg_design(sys, weights)
ctrl = design.controller
print(f"LQR gain      {design.K_lqr.ravel()}")
print(f"Kalman gain   {design.K_kf.ravel()}")
print(f"compensator   E={ctrl.E.ravel()} F={ctrl.F.ravel()} G={ctrl.G.ravel()} H={ctrl.H.ravel()}")

bsys = lift_system(sys, weights)
print(f"lifted blocks Au={bsys.Au.ravel()} Ay={bsys.Ay.ravel()} Aw={bsys.Aw.ravel()} Av={bsys.Av.ravel()}")

gain, pair = solve_behavioral_lqg(sys, weights)
part = sparsity_partition(gain)
print(f"static gain   K={gain.K.ravel()}  (K2 = {part.K2.ravel()})")
print(f"cost          {pair.cost:.6f}")
print(f"residuals     M {pair.residual_M:.1e}  P {pair.residual_P:.1e}  grad {pair.stationarity:.1e}")
