"""Monolithic Crank-Nicolson stepping for the coupled flow/structure system.

Unknowns per step are ``(w^{n+1}, u^{n+1}, p^{n+1/2})``; the displacement is
eliminated with ``eta^{n+1} = eta^n + tau/2 (w^{n+1} + w^n)``, which turns the
structure rows into ``(M_s/tau + tau/4 K_s) w^{n+1}``.  The continuity row is
multiplied by -2 so the system matrix is symmetric:

    [ M_s/tau + tau/4 K_s        0                  0   ] [w]
    [        0          M_f/tau + K_f/2          -B^T ] [u]
    [        0                 -B                  0   ] [p]

with structure interface rows merged into the flow rows by DOF aliasing.
For the heat-wave variant ``K_f`` is the Laplacian and there is no pressure.
"""

from __future__ import annotations

import logging
import time as _time
from dataclasses import dataclass, field

import numpy as np
import scipy.sparse as sp

from . import forms
from .analysis import error_norm
from .basis import ElementKind
from .dofs import DofLayout, build_layout, interpolate
from .linalg import Factorization, factorize
from .manufactured import Case, ExactSolution, SourceBundle
from .mesh import Mesh, mesh_for_h

log = logging.getLogger(__name__)

ELEMENTS = {
    "mini": (ElementKind.P1B, ElementKind.P1, ElementKind.P1B),
    "p2p1": (ElementKind.P2, ElementKind.P1, ElementKind.P2),
    "p1": (ElementKind.P1, None, ElementKind.P1),
    "p2": (ElementKind.P2, None, ElementKind.P2),
}
ELEMENT_DEGREE = {"mini": 1, "p2p1": 2, "p1": 1, "p2": 2}


def layout_for(case: Case, element: str, mesh: Mesh) -> DofLayout:
    try:
        vk, pk, sk = ELEMENTS[element]
    except KeyError:
        raise ValueError(f"unknown element {element!r}") from None
    if (pk is None) != (case.physics == "heat"):
        raise ValueError(f"element {element!r} does not fit the {case.physics} case {case.name!r}")
    return build_layout(mesh, vk, pk, sk, case.components)


@dataclass
class Operators:
    """Field-level matrices shared by the stepper and the Ritz projection."""

    M_s: sp.csr_matrix
    K_s: sp.csr_matrix
    M_f: sp.csr_matrix
    K_f: sp.csr_matrix  # (D u, D v) or (grad u, grad v)
    B: sp.csr_matrix | None  # (div u, q), pressure rows

    @classmethod
    def assemble(cls, layout: DofLayout) -> "Operators":
        s, f = layout.structure, layout.flow
        K_f = forms.assemble_matrix("symgrad_symgrad" if layout.physics == "stokes" else "grad_grad", f)
        B = forms.divergence_matrix(f, layout.pressure) if layout.pressure is not None else None
        return cls(
            M_s=forms.assemble_matrix("mass", s),
            K_s=forms.assemble_matrix("grad_grad", s),
            M_f=forms.assemble_matrix("mass", f),
            K_f=K_f,
            B=B,
        )


@dataclass
class StepperState:
    step: int
    tau: float
    eta: np.ndarray
    w: np.ndarray
    u: np.ndarray
    p: np.ndarray | None = None
    energy: float = 0.0
    solver_residual: float = 0.0

    @property
    def t(self) -> float:
        return self.step * self.tau


def energy(ops: Operators, eta, w, u) -> float:
    """``(||w||^2 + ||grad eta||^2 + ||u||^2) / 2`` over the respective regions."""
    return 0.5 * float(w @ (ops.M_s @ w) + eta @ (ops.K_s @ eta) + u @ (ops.M_f @ u))


def _neumann_sides(layout: DofLayout):
    return [s for s, k in layout.mesh.spec.boundary_conditions.items() if k == "neumann_traction"]


def build_cn_system(layout: DofLayout, tau: float, ops: Operators | None = None) -> sp.csr_matrix:
    if tau == 0:
        raise ValueError("tau must be nonzero")
    ops = Operators.assemble(layout) if ops is None else ops
    A_w = ops.M_s / tau + (tau / 4.0) * ops.K_s
    A_u = ops.M_f / tau + 0.5 * ops.K_f
    if ops.B is None:
        full = sp.block_diag([A_w, A_u], format="csr")
    else:
        full = sp.bmat([[A_w, None, None], [None, A_u, -ops.B.T], [None, -ops.B, None]], format="csr")
    P = layout.prolongation()
    return (P.T @ full @ P).tocsr()


def ritz_initial_displacement(layout: DofLayout, ops: Operators, exact: ExactSolution) -> np.ndarray:
    """Ritz projection of eta(0) with interface values fixed to the interpolant."""
    s = layout.structure
    eta_i = interpolate(exact.eta, s, 0.0).coeffs
    fixed = np.zeros(s.ndofs, dtype=bool)
    for tag in layout.mesh.spec.interface_tags:
        fixed[s.expand(s.trace_scalar_dofs(tag))] = True
    fixed[layout.dirichlet["w"]] = True
    free = ~fixed
    K = ops.K_s.tocsr()
    K_ff = K[free][:, free]
    rhs = -(K[free][:, fixed] @ eta_i[fixed])
    # (grad eta(0), grad xi) for interior xi; equals K eta_i only when eta(0) is in the space
    load = forms.gradient_load(s, exact.grad_eta, 0.0)
    rhs = rhs + load[free]
    out = eta_i.copy()
    out[free] = factorize(K_ff).solve(rhs)
    return out


class CrankNicolson:
    """Stepper bound to one layout, case and step size; factorizes once."""

    def __init__(self, layout: DofLayout, case: Case, tau: float, ops: Operators | None = None):
        self.layout, self.case, self.tau = layout, case, float(tau)
        self.ops = Operators.assemble(layout) if ops is None else ops
        self.P = layout.prolongation()
        self.A = build_cn_system(layout, self.tau, self.ops)
        self.factor: Factorization = factorize(self.A)
        self.neumann = _neumann_sides(layout)

    def initial_state(self, exact: ExactSolution | None = None) -> StepperState:
        exact = self.case.exact if exact is None else exact
        lay = self.layout
        if exact is None:
            z = np.zeros
            state = StepperState(0, self.tau, z(lay.structure.ndofs), z(lay.structure.ndofs), z(lay.flow.ndofs))
        else:
            eta = ritz_initial_displacement(lay, self.ops, exact)
            w = interpolate(exact.eta_t, lay.structure, 0.0).coeffs
            u = interpolate(exact.u, lay.flow, 0.0).coeffs
            state = StepperState(0, self.tau, eta, w, u)
        state.energy = energy(self.ops, state.eta, state.w, state.u)
        return state

    def loads(self, t: float, sources: SourceBundle | None = None):
        """Field-level load vectors (structure, flow, pressure) at time ``t``."""
        src = self.case.sources if sources is None else sources
        lay = self.layout
        b_s = forms.volume_load(lay.structure, src.f_struct, t)
        b_f = forms.volume_load(lay.flow, src.f_flow, t)
        if self.neumann:
            b_s = b_s + forms.boundary_load(lay.structure, self.neumann, src.h_struct, t)
            b_f = b_f + forms.boundary_load(lay.flow, self.neumann, src.g_traction, t)
        for tag in lay.mesh.spec.interface_tags:
            b_f = b_f + forms.interface_load(lay.flow, tag, src.j_interface, t)
        if lay.pressure is not None and src.g_mass is not None:
            b_p = forms.volume_load(lay.pressure, src.g_mass, t)
        else:
            b_p = np.zeros(lay.pressure.ndofs if lay.pressure is not None else 0)
        return b_s, b_f, b_p

    def step(self, state: StepperState, sources: SourceBundle | None = None) -> StepperState:
        tau, ops, lay = self.tau, self.ops, self.layout
        if state.tau != tau and state.step != 0:
            raise ValueError("state was produced with a different step size")
        t_mid = (state.step + 0.5) * tau
        b_s, b_f, b_p = self.loads(t_mid, sources)
        r_w = ops.M_s @ state.w / tau - ops.K_s @ state.eta - (tau / 4.0) * (ops.K_s @ state.w) + b_s
        r_u = ops.M_f @ state.u / tau - 0.5 * (ops.K_f @ state.u) + b_f
        parts = [r_w, r_u]
        if ops.B is not None:
            parts.append(ops.B @ state.u - 2.0 * b_p)
        rhs = self.P.T @ np.concatenate(parts)
        x = self.factor.solve(rhs)
        w_new, u_new, p_new = lay.split(self.P @ x)
        eta_new = state.eta + 0.5 * tau * (w_new + state.w)
        out = StepperState(state.step + 1, tau, eta_new, w_new, u_new, p_new if ops.B is not None else None)
        out.energy = energy(ops, out.eta, out.w, out.u)
        out.solver_residual = self.factor.last_residual
        return out


def init_state(layout: DofLayout, case: Case, tau: float = 1.0) -> StepperState:
    return CrankNicolson(layout, case, tau).initial_state()


def cn_step(state: StepperState, stepper: CrankNicolson, sources: SourceBundle | None = None) -> StepperState:
    return stepper.step(state, sources)


def state_errors(layout: DofLayout, exact: ExactSolution, state: StepperState) -> dict:
    t = state.t
    f, s = layout.flow, layout.structure
    return {
        "err_u_L2": error_norm((f, state.u), exact.u, exact.grad_u, "L2", t),
        "err_u_H1": error_norm((f, state.u), exact.u, exact.grad_u, "H1", t),
        "err_eta_L2": error_norm((s, state.eta), exact.eta, exact.grad_eta, "L2", t),
        "err_eta_H1": error_norm((s, state.eta), exact.eta, exact.grad_eta, "H1", t),
        "err_w_L2": error_norm((s, state.w), exact.eta_t, None, "L2", t),
    }


@dataclass
class RunResult:
    case: str
    element: str
    h: float
    tau: float
    T: float
    records: list[dict] = field(default_factory=list)
    final: StepperState | None = None
    layout: DofLayout | None = None
    n_unknowns: int = 0
    seconds: float = 0.0

    def final_errors(self) -> dict:
        return {k: v for k, v in self.records[-1].items() if k.startswith("err_")}

    def sup_errors(self) -> dict:
        keys = [k for k in self.records[0] if k.startswith("err_")]
        return {k: max(r[k] for r in self.records[1:] or self.records) for k in keys}


def n_steps(T: float, tau: float) -> int:
    if T < 0 or tau <= 0:
        raise ValueError("T must be >= 0 and tau > 0")
    n = int(round(T / tau))
    if abs(n * tau - T) > 1e-9 * max(1.0, T):
        raise ValueError(f"T={T} is not an integer multiple of tau={tau}")
    return n


def run_case(case: Case, element: str, T: float, tau: float, h: float | None = None, mesh: Mesh | None = None,
             error_every: int = 1, sources: SourceBundle | None = None) -> RunResult:
    """Integrate from the initial data to ``T``; record errors against the exact solution."""
    t0 = _time.perf_counter()
    if mesh is None:
        if h is None:
            raise ValueError("give either h or a mesh")
        mesh = mesh_for_h(case.geometry, h)
    layout = layout_for(case, element, mesh)
    N = n_steps(T, tau)
    stepper = CrankNicolson(layout, case, tau)
    state = stepper.initial_state()
    res = RunResult(case.name, element, h if h is not None else mesh.h, tau, T, layout=layout,
                    n_unknowns=layout.n_unknowns)

    def record(st):
        row = {"step": st.step, "t": st.t}
        if case.exact is not None:
            row.update(state_errors(layout, case.exact, st))
        row.update({"energy": st.energy, "solver_residual": st.solver_residual})
        res.records.append(row)

    record(state)
    for n in range(N):
        state = stepper.step(state, sources)
        if (n + 1) % error_every == 0 or n + 1 == N:
            record(state)
    res.final = state
    res.seconds = _time.perf_counter() - t0
    log.info("%s/%s h=%g tau=%g: %d steps, %d unknowns, %.1fs", case.name, element, res.h, tau, N,
             layout.n_unknowns, res.seconds)
    return res
