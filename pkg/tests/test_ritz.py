import numpy as np
import pytest

from fsi_fem import cn, ritz
from fsi_fem.manufactured import channel_periodic_case, compatible_case, heat_wave_case
from fsi_fem.mesh import mesh_for_h


def solver_for(case, element, h):
    lay = cn.layout_for(case, element, mesh_for_h(case.geometry, h))
    return ritz.RitzSolver(lay, case.exact)


@pytest.fixture(scope="module")
def mini_solver():
    return solver_for(channel_periodic_case(), "mini", 1 / 8)


def test_interior_structure_equation(mini_solver):
    s = mini_solver
    st = s.solve(s.exact_trace(0.3), 0.3)
    assert s.eta_residual(st) <= 1e-12


def test_interface_values_enforced(mini_solver):
    s = mini_solver
    g = np.linspace(-1, 1, s.n_gamma)
    st = s.solve(g, 0.1)
    assert np.allclose(st.eta[s.gamma_struct], g, atol=1e-14)
    # flow trace matches the structure trace
    assert np.allclose(st.u[s.gamma_flow], s.velocity_trace(g, 0.1), atol=1e-14)


def test_affine_in_interface_values(mini_solver):
    s = mini_solver
    rng = np.random.default_rng(0)
    a, b = rng.normal(size=s.n_gamma), rng.normal(size=s.n_gamma)
    base = s.solve(np.zeros(s.n_gamma), 0.2)
    sa, sb, sab = s.solve(a, 0.2), s.solve(b, 0.2), s.solve(a + 2 * b, 0.2)
    for f in ("eta", "u", "p"):
        lin = getattr(sa, f) + 2 * getattr(sb, f) - 2 * getattr(base, f)
        assert np.allclose(getattr(sab, f), lin, atol=1e-10)


def test_wrong_interface_length(mini_solver):
    with pytest.raises(ValueError):
        mini_solver.solve(np.zeros(3), 0.0)


@pytest.mark.parametrize("element", ["mini", "p2p1"])
def test_compatible_case_reproduced(element):
    case = compatible_case()
    s = solver_for(case, element, 0.25)
    series = ritz.evolve(s.layout, case.exact, 1.0, 0.05, n_outputs=4, solver=s)
    assert len(series) == 5
    errs = ritz.series_errors(s.layout, case.exact, series)
    assert max(errs.values()) <= 1e-10
    assert np.allclose(series[-1].eta_gamma, s.exact_trace(1.0), atol=1e-12)


def test_heat_wave_projection():
    case = heat_wave_case()
    s = solver_for(case, "p1", 0.125)
    series = ritz.evolve(s.layout, case.exact, 0.1, 0.01, n_outputs=2, solver=s)
    errs = ritz.series_errors(s.layout, case.exact, series)
    assert errs["sup_err_u_L2"] < 0.05 and errs["sup_err_eta_L2"] < 0.05


def test_evolve_validation(mini_solver):
    s = mini_solver
    with pytest.raises(ValueError):
        ritz.evolve(s.layout, s.exact, 1.0, 0.0, solver=s)
    assert len(ritz.evolve(s.layout, s.exact, 0.0, 0.1, solver=s)) == 1


def test_report_needs_two_meshes():
    row = {"h": 0.1, **dict.fromkeys(ritz.RITZ_COLUMNS, 1e-3)}
    with pytest.raises(ValueError):
        ritz.ritz_error_report([row], 1)


def test_report_rates_and_exact():
    rows = [{"h": h, "sup_err_u_L2": h**2, "sup_err_eta_L2": h**2, "sup_err_u_H1": h, "sup_err_eta_H1": h}
            for h in (0.2, 0.1, 0.05)]
    rep = ritz.ritz_error_report(rows, 1)
    assert rep.passed and rep.rates["sup_err_u_L2"] == pytest.approx(2.0)
    assert rep.to_csv().splitlines()[0] == "h," + ",".join(ritz.RITZ_COLUMNS)
    slow = [dict(r, sup_err_u_L2=r["h"]) for r in rows]
    assert not ritz.ritz_error_report(slow, 1).passed
    zero = [{"h": h, **dict.fromkeys(ritz.RITZ_COLUMNS, 0.0)} for h in (0.2, 0.1)]
    rep = ritz.ritz_error_report(zero, 1)
    assert rep.exact and rep.passed
