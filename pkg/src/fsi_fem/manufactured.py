"""Exact solutions, derived sources and the finite-difference source oracle.

All evaluators take flat coordinate arrays ``x, y`` and a scalar time ``t``.
Vector-valued quantities carry an explicit component axis, ``(n, C)`` for
values and ``(n, C, 2)`` for gradients, also when ``C == 1``.

Source conventions (``n`` is the interface normal pointing into the structure,
or the outward normal on the outer boundary):

* ``f_flow``      momentum source ``du/dt - div(D(u) - pI)`` (heat: ``du/dt - lap u``)
* ``f_struct``    ``d2eta/dt2 - lap eta``
* ``g_mass``      ``div u``; tested against pressures
* ``j_interface`` traction jump ``(D(u) - pI) n - d eta/dn`` (heat: ``du/dn - d eta/dn``)
* ``g_traction``  ``(D(u) - pI) n`` on flow Neumann sides
* ``h_struct``    ``d eta/dn`` on structure Neumann sides
"""

from __future__ import annotations

import dataclasses
from dataclasses import dataclass
from typing import Callable

import numpy as np

from .mesh import FLOW_ROLES, GeometrySpec

PI = np.pi


@dataclass(frozen=True)
class ExactSolution:
    components: int
    u: Callable
    grad_u: Callable
    div_u: Callable
    p: Callable | None
    eta: Callable
    grad_eta: Callable
    eta_t: Callable
    eta_tt: Callable

    def w(self, x, y, t):
        return self.eta_t(x, y, t)


@dataclass(frozen=True)
class SourceBundle:
    f_flow: Callable
    f_struct: Callable
    g_mass: Callable | None
    j_interface: Callable
    g_traction: Callable
    h_struct: Callable

    @classmethod
    def zero(cls, components: int, with_mass: bool = True) -> "SourceBundle":
        def vec(x, y, t, *normal):
            return np.zeros((len(x), components))

        def scal(x, y, t):
            return np.zeros(len(x))

        return cls(vec, vec, scal if with_mass else None, vec, vec, vec)


@dataclass(frozen=True)
class Case:
    name: str
    geometry: GeometrySpec
    physics: str  # "stokes" or "heat"
    components: int
    exact: ExactSolution | None
    sources: SourceBundle
    T: float = 0.25

    def __iter__(self):
        # unpacks as (geometry, exact, sources)
        return iter((self.geometry, self.exact, self.sources))

    def with_sources(self, sources: SourceBundle) -> "Case":
        return dataclasses.replace(self, sources=sources)


def stress_normal(exact: ExactSolution, physics: str, x, y, t, nx, ny):
    """``(D(u) - pI) n`` for Stokes, ``grad u . n`` for heat."""
    G = exact.grad_u(x, y, t)
    n = np.column_stack([nx, ny])
    if physics == "heat":
        return np.einsum("kca,ka->kc", G, n)
    D = 0.5 * (G + np.swapaxes(G, 1, 2))
    D = D - exact.p(x, y, t)[:, None, None] * np.eye(2)
    return np.einsum("kca,ka->kc", D, n)


def _flux_sources(exact: ExactSolution, physics: str):
    def g_traction(x, y, t, nx, ny):
        return stress_normal(exact, physics, x, y, t, nx, ny)

    def h_struct(x, y, t, nx, ny):
        return np.einsum("kca,ka->kc", exact.grad_eta(x, y, t), np.column_stack([nx, ny]))

    def j_interface(x, y, t, nx, ny):
        return g_traction(x, y, t, nx, ny) - h_struct(x, y, t, nx, ny)

    return j_interface, g_traction, h_struct


def _channel_spec(length, levels=(0.0, 0.25, 0.75, 1.0), periodic=True, roles=("solid", "fluid", "solid")):
    side = "periodic_x" if periodic else "neumann_traction"
    return GeometrySpec(
        x_min=0.0,
        x_max=float(length),
        y_levels=tuple(levels),
        strip_roles=roles,
        boundary_conditions={"left": side, "right": side, "top": "neumann_traction", "bottom": "neumann_traction"},
        interface_tags=("gamma2", "gamma1"),
    )


def channel_periodic_case(gamma: float = 0.01, length: float = 1.0) -> Case:
    """Stokes flow between two wave-equation layers, periodic in x (period 1)."""
    if gamma <= 0:
        raise ValueError("gamma must be positive")
    if length <= 0 or abs(length - round(length)) > 1e-12:
        raise ValueError("length must be a positive integer (the solution has x-period 1)")
    spec = _channel_spec(length)

    def amp(t):
        return gamma * np.exp(t)

    def a(y):
        return -2.0 * y**2 + 2.0 * y - 3.0 / 8.0

    def u(x, y, t):
        s, c = np.sin(2 * PI * x), np.cos(2 * PI * x)
        return amp(t) * np.column_stack([2 * PI * c * a(y), s * (4 * y - 2)])

    def grad_u(x, y, t):
        s, c = np.sin(2 * PI * x), np.cos(2 * PI * x)
        G = np.empty((len(x), 2, 2))
        G[:, 0, 0] = -4 * PI**2 * s * a(y)
        G[:, 0, 1] = 2 * PI * c * (2 - 4 * y)
        G[:, 1, 0] = 2 * PI * c * (4 * y - 2)
        G[:, 1, 1] = 4 * s
        return amp(t) * G

    def div_u(x, y, t):
        return amp(t) * np.sin(2 * PI * x) * (4 - 4 * PI**2 * a(y))

    def p(x, y, t):
        return 4 * amp(t) * np.sin(2 * PI * x)

    def side_sign(y):
        # upper layer carries +sin, lower layer -sin
        return np.where(y > 0.5, 1.0, -1.0)

    def eta(x, y, t):
        return amp(t) * np.column_stack([np.zeros(len(x)), side_sign(y) * np.sin(2 * PI * x)])

    def grad_eta(x, y, t):
        G = np.zeros((len(x), 2, 2))
        G[:, 1, 0] = amp(t) * side_sign(y) * 2 * PI * np.cos(2 * PI * x)
        return G

    exact = ExactSolution(2, u, grad_u, div_u, p, eta, grad_eta, eta, eta)

    def f_flow(x, y, t):
        c = np.cos(2 * PI * x)
        out = u(x, y, t)
        out[:, 0] += amp(t) * (8 * PI**3 * c * a(y) + 8 * PI * c)
        return out

    def f_struct(x, y, t):
        return (1 + 4 * PI**2) * eta(x, y, t)

    j, g, h = _flux_sources(exact, "stokes")
    return Case("channel_periodic", spec, "stokes", 2, exact, SourceBundle(f_flow, f_struct, div_u, j, g, h))


def heat_wave_case() -> Case:
    """Scalar heat equation below y = 3/4 coupled to a wave equation above it."""
    spec = GeometrySpec(
        x_min=0.0, x_max=1.0, y_levels=(0.0, 0.75, 1.0), strip_roles=("heat", "wave"),
        boundary_conditions={s: "dirichlet_zero" for s in ("left", "right", "top", "bottom")},
        interface_tags=("gamma",),
    )

    def val(x, y, t):
        return (np.exp(t) * np.sin(2 * PI * x) * y * (1 - y))[:, None]

    def grad(x, y, t):
        e = np.exp(t)
        G = np.empty((len(x), 1, 2))
        G[:, 0, 0] = e * 2 * PI * np.cos(2 * PI * x) * y * (1 - y)
        G[:, 0, 1] = e * np.sin(2 * PI * x) * (1 - 2 * y)
        return G

    def f(x, y, t):
        s = np.sin(2 * PI * x)
        return (np.exp(t) * (s * y * (1 - y) + 2 * s + 4 * PI**2 * s * y * (1 - y)))[:, None]

    def div_u(x, y, t):
        raise NotImplementedError("scalar problem has no divergence")

    exact = ExactSolution(1, val, grad, div_u, None, val, grad, val, val)
    j, g, h = _flux_sources(exact, "heat")
    return Case("heat_wave", spec, "heat", 1, exact, SourceBundle(f, f, None, j, g, h))


def inflow_traction(t, y):
    """Magnitude P with traction ``-P n`` on the inflow side."""
    return 0.25 * (1 - np.cos(PI * t / 2)) ** 2 * 1e4 * (y - 0.15) * (0.85 - y)


def traction_case() -> Case:
    """Channel driven by an inflow traction at x = 0, traction-free at x = 1; no exact solution."""
    spec = _channel_spec(1.0, levels=(0.0, 0.15, 0.85, 1.0), periodic=False)

    def g_traction(x, y, t, nx, ny):
        P = np.where(x < spec.x_min + 1e-12, inflow_traction(t, y), 0.0)
        return -P[:, None] * np.column_stack([nx, ny])

    zero = SourceBundle.zero(2)
    sources = dataclasses.replace(zero, g_traction=g_traction)
    return Case("channel_traction", spec, "stokes", 2, None, sources, T=0.1)


def compatible_case(velocity=(0.7, -0.2), eta_slope=((0.3, 0.2), (-0.4, 0.5)), eta_offset=(0.1, 0.0)) -> Case:
    """Exact data inside every FE space: constant u, p = 0, eta = A x + b + t u.

    Uses a non-periodic channel (eta is linear in x).  Flux data on the
    interface and on the structure's outer sides make the data consistent.
    """
    spec = _channel_spec(1.0, periodic=False)
    c = np.asarray(velocity, dtype=float)
    A = np.asarray(eta_slope, dtype=float)
    b = np.asarray(eta_offset, dtype=float)

    def u(x, y, t):
        return np.tile(c, (len(x), 1))

    def zero_grad(x, y, t):
        return np.zeros((len(x), 2, 2))

    def zero_scalar(x, y, t):
        return np.zeros(len(x))

    def eta(x, y, t):
        return np.column_stack([x, y]) @ A.T + b + t * c

    def grad_eta(x, y, t):
        return np.tile(A, (len(x), 1, 1))

    def zero_vec(x, y, t):
        return np.zeros((len(x), 2))

    exact = ExactSolution(2, u, zero_grad, zero_scalar, zero_scalar, eta, grad_eta, u, zero_vec)
    j, g, h = _flux_sources(exact, "stokes")
    return Case("compatible", spec, "stokes", 2, exact, SourceBundle(zero_vec, zero_vec, zero_scalar, j, g, h))


CASES = {
    "channel_periodic": channel_periodic_case,
    "channel_traction": traction_case,
    "heat_wave": heat_wave_case,
}


# ---------------------------------------------------------------------------
# finite-difference oracle


def _d1(f, z, h):
    return (-f(z + 2 * h) + 8 * f(z + h) - 8 * f(z - h) + f(z - 2 * h)) / (12 * h)


def _d2(f, z, h):
    return (-f(z + 2 * h) + 16 * f(z + h) - 30 * f(z) + 16 * f(z - h) - f(z - 2 * h)) / (12 * h * h)


class _FD:
    """Fourth-order central differences of a pointwise evaluator ``F(x, y, t)``."""

    def __init__(self, F, h):
        self.F, self.h = F, h

    def dt(self, x, y, t):
        return _d1(lambda s: self.F(x, y, s), t, self.h)

    def dtt(self, x, y, t):
        return _d2(lambda s: self.F(x, y, s), t, self.h)

    def dx(self, x, y, t):
        return _d1(lambda s: self.F(s, y, t), x, self.h)

    def dy(self, x, y, t):
        return _d1(lambda s: self.F(x, s, t), y, self.h)

    def dxx(self, x, y, t):
        return _d2(lambda s: self.F(s, y, t), x, self.h)

    def dyy(self, x, y, t):
        return _d2(lambda s: self.F(x, s, t), y, self.h)

    def dxy(self, x, y, t):
        return _d1(lambda s: _d1(lambda r: self.F(r, s, t), x, self.h), y, self.h)

    def grad(self, x, y, t):
        return np.stack([self.dx(x, y, t), self.dy(x, y, t)], axis=-1)


def _sample_strip(rng, spec, strips, n, margin):
    s = rng.choice(strips, size=n)
    lo = np.array(spec.y_levels)[s] + margin
    hi = np.array(spec.y_levels)[s + 1] - margin
    x = rng.uniform(spec.x_min + margin, spec.x_max - margin, n)
    return x, rng.uniform(lo, hi)


def verify_sources(case: Case, n_samples: int = 100, seed: int = 0, step: float = 1e-4,
                   tol: float = 1e-6, t_range=(0.0, 1.0)) -> dict:
    """Strong-form residuals of the case's sources against finite differences of its exact fields."""
    if case.exact is None:
        raise ValueError(f"case {case.name!r} has no exact solution")
    ex, src, spec = case.exact, case.sources, case.geometry
    rng = np.random.default_rng(seed)
    margin = 10 * step
    res: dict[str, float] = {}

    def record(name, r):
        r = np.abs(np.asarray(r))
        res[name] = max(res.get(name, 0.0), float(r.max()) if r.size else 0.0)

    U, E = _FD(ex.u, step), _FD(ex.eta, step)

    # interior of the flow strips
    x, y = _sample_strip(rng, spec, spec.flow_strips, n_samples, margin)
    t = rng.uniform(*t_range)
    lap = U.dxx(x, y, t) + U.dyy(x, y, t)
    if case.physics == "stokes":
        P = _FD(lambda a, b, s: ex.p(a, b, s)[:, None], step)
        uxx, uyy, uxy = U.dxx(x, y, t), U.dyy(x, y, t), U.dxy(x, y, t)
        grad_div = np.column_stack([uxx[:, 0] + uxy[:, 1], uxy[:, 0] + uyy[:, 1]])
        div_D = 0.5 * (lap + grad_div)
        grad_p = np.column_stack([P.dx(x, y, t)[:, 0], P.dy(x, y, t)[:, 0]])
        record("flow_momentum", src.f_flow(x, y, t) - (U.dt(x, y, t) - div_D + grad_p))
        div_fd = U.dx(x, y, t)[:, 0] + U.dy(x, y, t)[:, 1]
        g = src.g_mass(x, y, t) if src.g_mass is not None else np.zeros(len(x))
        record("mass", g - div_fd)
        record("evaluators", ex.div_u(x, y, t) - div_fd)
        record("evaluators", ex.p(x, y, t)[:, None] - P.F(x, y, t))
    else:
        record("flow_momentum", src.f_flow(x, y, t) - (U.dt(x, y, t) - lap))
    record("evaluators", ex.grad_u(x, y, t) - U.grad(x, y, t))

    # interior of the structure strips
    x, y = _sample_strip(rng, spec, spec.structure_strips, n_samples, margin)
    t = rng.uniform(*t_range)
    record("structure", src.f_struct(x, y, t) - (E.dtt(x, y, t) - E.dxx(x, y, t) - E.dyy(x, y, t)))
    record("evaluators", ex.grad_eta(x, y, t) - E.grad(x, y, t))
    record("evaluators", ex.eta_t(x, y, t) - E.dt(x, y, t))
    record("evaluators", ex.eta_tt(x, y, t) - E.dtt(x, y, t))

    # interfaces
    for k in range(len(spec.interface_tags)):
        level = spec.y_levels[k + 1]
        below_is_flow = spec.strip_roles[k] in FLOW_ROLES
        normal = 1.0 if below_is_flow else -1.0
        x = rng.uniform(spec.x_min, spec.x_max, n_samples)
        y = np.full(n_samples, level)
        t = rng.uniform(*t_range)
        nx, ny = np.zeros(n_samples), np.full(n_samples, normal)
        record("kinematic", ex.u(x, y, t) - E.dt(x, y, t))
        Gu = U.grad(x, y, t)
        Ge = E.grad(x, y, t)
        n = np.column_stack([nx, ny])
        if case.physics == "stokes":
            D = 0.5 * (Gu + np.swapaxes(Gu, 1, 2)) - ex.p(x, y, t)[:, None, None] * np.eye(2)
            flux_flow = np.einsum("kca,ka->kc", D, n)
        else:
            flux_flow = np.einsum("kca,ka->kc", Gu, n)
        flux_struct = np.einsum("kca,ka->kc", Ge, n)
        record("interface_traction", src.j_interface(x, y, t, nx, ny) - (flux_flow - flux_struct))

    # outer boundary
    for side, kind in spec.boundary_conditions.items():
        if kind == "periodic_x":
            continue
        if side in ("left", "right"):
            x = np.full(n_samples, spec.x_min if side == "left" else spec.x_max)
            y = rng.uniform(spec.y_levels[0] + margin, spec.y_levels[-1] - margin, n_samples)
            nx, ny = np.full(n_samples, -1.0 if side == "left" else 1.0), np.zeros(n_samples)
        else:
            x = rng.uniform(spec.x_min, spec.x_max, n_samples)
            y = np.full(n_samples, spec.y_levels[0] if side == "bottom" else spec.y_levels[-1])
            nx, ny = np.zeros(n_samples), np.full(n_samples, -1.0 if side == "bottom" else 1.0)
        t = rng.uniform(*t_range)
        strip = np.clip(np.searchsorted(spec.y_levels, y, side="right") - 1, 0, spec.n_strips - 1)
        in_flow = np.isin(strip, spec.flow_strips)
        n = np.column_stack([nx, ny])
        if kind == "dirichlet_zero":
            record("dirichlet", ex.u(x[in_flow], y[in_flow], t))
            record("dirichlet", ex.eta(x[~in_flow], y[~in_flow], t))
            continue
        if np.any(in_flow):
            xf, yf, nf = x[in_flow], y[in_flow], n[in_flow]
            Gu = U.grad(xf, yf, t)
            if case.physics == "stokes":
                D = 0.5 * (Gu + np.swapaxes(Gu, 1, 2)) - ex.p(xf, yf, t)[:, None, None] * np.eye(2)
            else:
                D = Gu
            record("flow_boundary", src.g_traction(xf, yf, t, nf[:, 0], nf[:, 1]) - np.einsum("kca,ka->kc", D, nf))
        if np.any(~in_flow):
            xs, ys, ns = x[~in_flow], y[~in_flow], n[~in_flow]
            flux = np.einsum("kca,ka->kc", E.grad(xs, ys, t), ns)
            record("structure_boundary", src.h_struct(xs, ys, t, ns[:, 0], ns[:, 1]) - flux)

    worst = max(res.values())
    return {
        "case": case.name,
        "n_samples": int(n_samples),
        "seed": int(seed),
        "step": step,
        "tolerance": tol,
        "residuals": res,
        "max_residual": worst,
        "pass": bool(worst <= tol),
    }
