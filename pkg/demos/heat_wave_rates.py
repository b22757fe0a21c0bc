"""
Heat-wave coupling: spatial convergence
=======================================

A scalar heat equation on the lower part of the unit square is coupled to a
wave equation on the top strip.  The manufactured solution is known, so we
can watch the L2 error fall as the mesh is refined.
"""

import numpy as np

from fsi_fem import fit_rate, heat_wave_case, run_case

case = heat_wave_case()
print(case.geometry)

# A short final time keeps this quick; tau is small enough that the
# spatial error dominates.
for element in ("p1", "p2"):
    rows = []
    for h in (0.2, 0.1, 0.05):
        res = run_case(case, element, T=0.05, tau=1e-3, h=h, error_every=10**9)
        err = res.final_errors()
        rows.append((h, err["err_u_L2"]))
        print(f"{element} h={h:<5} u L2 error {err['err_u_L2']:.3e}  eta L2 error {err['err_eta_L2']:.3e}")
    print(element, "fitted rate", round(fit_rate(rows).slope, 2))

# The error of P2 at the coarsest mesh is already below the P1 error at the finest one.
