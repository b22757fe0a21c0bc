"""
Channel driven by an inflow traction
====================================

No exact solution here: a pressure pulse enters at x = 0 and pushes the
walls outward.  We print the energy and the largest wall displacement.
"""

import numpy as np

from fsi_fem import run_case, traction_case

case = traction_case()
res = run_case(case, "mini", T=0.1, tau=0.01, h=0.05)
for rec in res.records[::2]:
    print(f"t={rec['t']:.2f}  energy {rec['energy']:.4e}")

eta = res.final.eta.reshape(2, -1)
print("max |eta| at T:", np.abs(eta).max())
