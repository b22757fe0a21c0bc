"""
Dynamic Ritz projection
=======================

The projection solves a stationary coupled problem for given interface
values of the displacement; those values move with the projected velocity.
Its error converges at the optimal rate, which is what the stepper inherits.
"""

from fsi_fem import channel_periodic_case, mesh_for_h, ritz
from fsi_fem.cn import layout_for

case = channel_periodic_case()
rows = []
for h in (1 / 8, 1 / 16):
    layout = layout_for(case, "mini", mesh_for_h(case.geometry, h))
    series = ritz.evolve(layout, case.exact, T=0.1, tau_r=h / 4, n_outputs=8)
    errs = ritz.series_errors(layout, case.exact, series)
    rows.append({"h": h, **errs})
    print(f"h={h:.4f}", {k: f"{v:.2e}" for k, v in errs.items()})

report = ritz.ritz_error_report(rows, degree=1, element="mini")
print({k: round(v, 2) for k, v in report.rates.items()})
