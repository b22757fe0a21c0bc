"""Dynamic Ritz projection of the coupled problem.

For fixed interface values ``eta_G`` of the displacement, the projection
``(R eta, R u, R p)`` solves one stationary coupled problem:

    (grad R eta, grad xi) + (D R u, D v) + (R u, v) - (R p, div v) + (div R u, q)
        = same expression with the exact fields

for all tests with ``xi = v`` on the interface.  The interface values then
follow the ODE ``d eta_G / dt = trace(R u)``, integrated here with classical
RK4.  The stationary matrix does not depend on time or on ``eta_G``, so it is
factorized once.
"""

from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import forms
from .analysis import error_norm, fit_rate
from .cn import Operators
from .dofs import DofLayout, interpolate
from .linalg import Factorization, factorize
from .manufactured import ExactSolution

log = logging.getLogger(__name__)

N_OUTPUTS = 32
RITZ_COLUMNS = ("sup_err_u_L2", "sup_err_u_H1", "sup_err_eta_L2", "sup_err_eta_H1")
EXACT_TOL = 1e-9


@dataclass
class RitzState:
    t: float
    eta_gamma: np.ndarray
    eta: np.ndarray
    u: np.ndarray
    p: np.ndarray | None = None


class RitzSolver:
    """Stationary projection for one layout and exact solution."""

    def __init__(self, layout: DofLayout, exact: ExactSolution, ops: Operators | None = None):
        self.layout, self.exact = layout, exact
        self.ops = Operators.assemble(layout) if ops is None else ops
        s_dir = np.zeros(layout.structure.ndofs, dtype=bool)
        s_dir[layout.dirichlet["w"]] = True
        keep = ~s_dir[layout.aliases[:, 0]]
        # interface dofs carried by the ODE: structure dof and its flow twin
        self.gamma_struct = layout.aliases[keep, 0]
        self.gamma_flow = layout.aliases[keep, 1]

        ops = self.ops
        K_u = ops.K_f + ops.M_f
        if ops.B is None:
            self.A_full = sp.block_diag([ops.K_s, K_u], format="csr")
        else:
            self.A_full = sp.bmat([[ops.K_s, None, None], [None, K_u, -ops.B.T], [None, ops.B, None]], format="csr")
        self.Q = layout.prolongation()
        trial_map = layout.stacked_map().copy()
        trial_map[layout.aliases[:, 0]] = -1
        self.P = layout.prolongation(trial_map)
        if self.P.shape[1] != self.Q.shape[1]:
            raise RuntimeError("trial and test numberings disagree")
        self.A = (self.Q.T @ self.A_full @ self.P).tocsc()
        self.factor: Factorization = factorize(self.A)

    @property
    def n_gamma(self) -> int:
        return len(self.gamma_struct)

    def exact_trace(self, t: float) -> np.ndarray:
        """Interface values of the interpolant of eta(t)."""
        return interpolate(self.exact.eta, self.layout.structure, t).coeffs[self.gamma_struct]

    def load(self, t: float) -> np.ndarray:
        """Stacked right-hand side built from the exact fields at time ``t``."""
        lay, ex = self.layout, self.exact
        b_s = forms.gradient_load(lay.structure, ex.grad_eta, t)
        if lay.physics == "stokes":

            def flux(x, y, t):
                g = np.asarray(ex.grad_u(x, y, t), dtype=float)
                d = 0.5 * (g + np.swapaxes(g, 1, 2))
                p = np.asarray(ex.p(x, y, t), dtype=float).reshape(-1)
                return d - p[:, None, None] * np.eye(2)

            b_u = forms.gradient_load(lay.flow, flux, t) + forms.volume_load(lay.flow, ex.u, t)
            b_p = forms.volume_load(lay.pressure, ex.div_u, t)
            return np.concatenate([b_s, b_u, b_p])
        b_u = forms.gradient_load(lay.flow, ex.grad_u, t) + forms.volume_load(lay.flow, ex.u, t)
        return np.concatenate([b_s, b_u])

    def solve(self, eta_gamma, t: float) -> RitzState:
        eta_gamma = np.asarray(eta_gamma, dtype=float)
        if eta_gamma.shape != (self.n_gamma,):
            raise ValueError(f"eta_gamma needs {self.n_gamma} entries, got {eta_gamma.shape}")
        g = np.zeros(self.A_full.shape[0])
        g[self.gamma_struct] = eta_gamma
        rhs = self.Q.T @ (self.load(t) - self.A_full @ g)
        x = self.factor.solve(rhs)
        eta, u, p = self.layout.split(self.P @ x + g)
        return RitzState(t, eta_gamma.copy(), eta, u, p if self.layout.pressure is not None else None)

    def velocity_trace(self, eta_gamma, t: float) -> np.ndarray:
        return self.solve(eta_gamma, t).u[self.gamma_flow]

    def eta_residual(self, state: RitzState) -> float:
        """Max residual of ``(grad(R eta - eta), grad xi)`` over interior structure tests."""
        lay = self.layout
        r = self.ops.K_s @ state.eta - forms.gradient_load(lay.structure, self.exact.grad_eta, state.t)
        interior = np.ones(lay.structure.ndofs, dtype=bool)
        interior[lay.aliases[:, 0]] = False
        interior[lay.dirichlet["w"]] = False
        return float(np.max(np.abs(r[interior]), initial=0.0))


def stationary_solve(layout: DofLayout, eta_gamma, t: float, exact: ExactSolution, solver: RitzSolver | None = None):
    """``(R eta, R u, R p)`` for interface values ``eta_gamma`` at time ``t``."""
    solver = RitzSolver(layout, exact) if solver is None else solver
    st = solver.solve(eta_gamma, t)
    return st.eta, st.u, st.p


def rk4_step(solver: RitzSolver, eta_gamma: np.ndarray, t: float, dt: float) -> np.ndarray:
    f = solver.velocity_trace
    k1 = f(eta_gamma, t)
    k2 = f(eta_gamma + 0.5 * dt * k1, t + 0.5 * dt)
    k3 = f(eta_gamma + 0.5 * dt * k2, t + 0.5 * dt)
    k4 = f(eta_gamma + dt * k3, t + dt)
    return eta_gamma + dt / 6.0 * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def evolve(layout: DofLayout, exact: ExactSolution, T: float, tau_r: float, n_outputs: int = N_OUTPUTS,
           solver: RitzSolver | None = None) -> list[RitzState]:
    """Integrate the interface ODE on [0, T]; full fields at ``n_outputs + 1`` equispaced times.

    Each output interval is split into the fewest equal RK4 steps not longer than ``tau_r``.
    """
    if tau_r <= 0:
        raise ValueError("tau_r must be positive")
    if T < 0:
        raise ValueError("T must be nonnegative")
    solver = RitzSolver(layout, exact) if solver is None else solver
    eta_g = solver.exact_trace(0.0)
    series = [solver.solve(eta_g, 0.0)]
    if T == 0:
        return series
    interval = T / n_outputs
    m = max(1, math.ceil(interval / tau_r - 1e-12))
    dt = interval / m
    for k in range(n_outputs):
        t0 = k * interval
        for j in range(m):
            eta_g = rk4_step(solver, eta_g, t0 + j * dt, dt)
        series.append(solver.solve(eta_g, (k + 1) * interval))
    log.debug("ritz evolve: %d outputs x %d RK4 steps of %g", n_outputs, m, dt)
    return series


def series_errors(layout: DofLayout, exact: ExactSolution, series) -> dict:
    """Sup over output times of the projection errors."""
    f, s = layout.flow, layout.structure
    out = dict.fromkeys(RITZ_COLUMNS, 0.0)
    for st in series:
        vals = {
            "sup_err_u_L2": error_norm((f, st.u), exact.u, exact.grad_u, "L2", st.t),
            "sup_err_u_H1": error_norm((f, st.u), exact.u, exact.grad_u, "H1", st.t),
            "sup_err_eta_L2": error_norm((s, st.eta), exact.eta, exact.grad_eta, "L2", st.t),
            "sup_err_eta_H1": error_norm((s, st.eta), exact.eta, exact.grad_eta, "H1", st.t),
        }
        for k, v in vals.items():
            out[k] = max(out[k], v)
    return out


@dataclass
class RitzReport:
    element: str
    degree: int  # k
    rows: list[dict] = field(default_factory=list)
    rates: dict = field(default_factory=dict)
    gates: dict = field(default_factory=dict)
    exact: bool = False

    @property
    def passed(self) -> bool:
        return self.exact or all(self.gates.values())

    def to_csv(self) -> str:
        lines = ["h," + ",".join(RITZ_COLUMNS)]
        for r in sorted(self.rows, key=lambda r: -r["h"]):
            lines.append(",".join([repr(float(r["h"]))] + [repr(float(r[c])) for c in RITZ_COLUMNS]))
        return "\n".join(lines) + "\n"

    def summary(self) -> dict:
        return {"element": self.element, "k": self.degree, "rates": self.rates, "gates": self.gates,
                "exact": self.exact, "pass": self.passed}


def ritz_error_report(rows, degree: int, element: str = "", tol: float = 0.25) -> RitzReport:
    """Fit rates over a mesh sequence.

    ``rows`` is a list of dicts with ``h`` and the :data:`RITZ_COLUMNS`.  L2
    rates are gated at ``>= k + 1 - tol`` and H1 rates at ``>= k - tol``.
    """
    rows = list(rows)
    if len(rows) < 2:
        raise ValueError("a Ritz error report needs at least two meshes")
    rep = RitzReport(element, degree, rows)
    if all(r[c] <= EXACT_TOL for r in rows for c in RITZ_COLUMNS):
        rep.exact = True
        rep.rates = dict.fromkeys(RITZ_COLUMNS, "exact")
        rep.gates = dict.fromkeys(RITZ_COLUMNS, True)
        return rep
    ordered = sorted(rows, key=lambda r: -r["h"])
    for c in RITZ_COLUMNS:
        fitres = fit_rate([(r["h"], r[c]) for r in ordered])
        rep.rates[c] = fitres.slope
        target = degree + 1 if c.endswith("L2") else degree
        rep.gates[c] = fitres.converged_to_zero or fitres.slope >= target - tol
    return rep
